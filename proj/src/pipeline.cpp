#include "xplain/pipeline.hpp"

#include <algorithm>

#include "xplain/dataset.hpp"
#include "xplain/errors.hpp"

namespace xplain {

Pipeline::Pipeline(PipelineComponents components, PipelineConfig config)
    : parts_(std::move(components)), cfg_(std::move(config)) {
    if (!parts_.graph || !parts_.model || !parts_.scorer || !parts_.context_embedder || !parts_.generator) {
        throw ConfigurationError("pipeline needs a graph, a model, a scorer, a context embedder and a generator");
    }
    if (parts_.context_embedder->dimension() != parts_.model->config().lm_dim) {
        throw ConfigurationError("context embedder dimension " + std::to_string(parts_.context_embedder->dimension()) +
                                 " does not match model lm_dim " + std::to_string(parts_.model->config().lm_dim));
    }
    if (parts_.graph->relation_names().size() > parts_.model->config().relation_types) {
        throw ConfigurationError("graph has more relation types than the model was built for");
    }
}

PipelineOutput Pipeline::run(const std::string& question, const std::vector<std::string>& options,
                             const std::optional<std::string>& label, const std::optional<PruneOptions>& prune) const {
    const auto& mcfg = parts_.model->config();
    QAContext qa{question, options, {}};
    qa.validate();
    if (options.size() != mcfg.options) {
        throw ArgumentError("model answers " + std::to_string(mcfg.options) + "-option questions, got " +
                            std::to_string(options.size()));
    }
    if (label && std::find(options.begin(), options.end(), *label) == options.end()) {
        throw ArgumentError("label is not an option: " + *label);
    }
    qa.context_embedding = parts_.context_embedder->embed(qa_embedding_text(question, options));

    PipelineOutput out;
    out.graph = prune_kg(qa, *parts_.graph, *parts_.scorer, prune.value_or(cfg_.prune));
    auto input = gat::GatInput::build(out.graph, qa.context_embedding, mcfg.relation_types);
    auto fwd = parts_.model->forward(input);
    out.answer = fwd.answer;
    out.elements = gat::extract_reason_elements(fwd.attention, out.graph, cfg_.reason_elements);

    ExplanationRequest req;
    req.task_type = cfg_.task_type;
    req.qa = qa;
    req.predicted = fwd.answer.predicted;
    req.gold = label.value_or(std::string());
    req.reason_elements = out.elements.labels();
    auto pair = generate(req, *parts_.generator, cfg_.explainer);

    auto& inst = out.instance;
    inst.question = question;
    inst.answers = options;
    inst.predicted_label = options[fwd.answer.predicted];
    inst.label = label.value_or(inst.predicted_label);
    inst.label_matched = inst.label == inst.predicted_label;
    inst.concepts = out.elements.labels();
    inst.topk = out.elements.top(dataset::kTopK);
    inst.explanation_why = pair.why;
    inst.explanation_why_not = pair.why_not;
    if (parts_.instance_embedder) inst.embedding = parts_.instance_embedder->embed(qa_embedding_text(question, options));
    if (parts_.evaluator) inst.debugger_score = render(score(inst));
    return out;
}

ExplanationInstance Pipeline::regenerate(const ExplanationInstance& inst, const std::vector<std::string>& notes) const {
    auto pair = generate(request_from_instance(inst, cfg_.task_type), *parts_.generator, cfg_.explainer, notes);
    ExplanationInstance out = inst;
    out.explanation_why = pair.why;
    out.explanation_why_not = pair.why_not;
    if (parts_.evaluator) out.debugger_score = render(score(out));
    return out;
}

DebuggerScore Pipeline::score(const ExplanationInstance& inst) const {
    if (!parts_.evaluator) throw ConfigurationError("no evaluator configured");
    return score_instance(inst, *parts_.evaluator, cfg_.scoring);
}

std::shared_ptr<MockChatClient> offline_client(const std::string& score_line) {
    return std::make_shared<MockChatClient>(
        [score_line](const std::vector<ChatMessage>& msgs) {
            if (!msgs.empty() && msgs.front().role == "system" && msgs.front().content == kDebuggerSystemPrompt) {
                return score_line;
            }
            return MockChatClient::echo(msgs);
        },
        "offline-echo");
}

}  // namespace xplain
