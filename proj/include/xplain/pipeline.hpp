#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xplain/debugger.hpp"
#include "xplain/explainer.hpp"
#include "xplain/gat.hpp"
#include "xplain/instance.hpp"
#include "xplain/kg.hpp"
#include "xplain/llm.hpp"
#include "xplain/prune.hpp"

namespace xplain {

struct PipelineComponents {
    std::shared_ptr<const kg::KnowledgeGraph> graph;
    std::shared_ptr<const gat::GatModel> model;
    std::shared_ptr<const RelevanceScorer> scorer;
    std::shared_ptr<const Embedder> context_embedder;   // dimension must equal the model's lm_dim
    std::shared_ptr<const Embedder> instance_embedder;  // fills `embedding`; null leaves it empty
    std::shared_ptr<LlmClient> generator;
    std::shared_ptr<LlmClient> evaluator;  // null: leave debugger_score empty
};

struct PipelineConfig {
    PruneOptions prune;
    std::string task_type = "commonsense question answering";
    std::size_t reason_elements = 50;
    ExplainerOptions explainer;
    ScoringOptions scoring;
};

struct PipelineOutput {
    ExplanationInstance instance;
    ElementGraph graph;
    gat::AnswerDistribution answer;
    gat::ReasonElements elements;
};

class Pipeline {
public:
    Pipeline(PipelineComponents components, PipelineConfig config = {});

    // Without a gold label the prediction is recorded as the label.
    PipelineOutput run(const std::string& question, const std::vector<std::string>& options,
                       const std::optional<std::string>& label = std::nullopt,
                       const std::optional<PruneOptions>& prune = std::nullopt) const;

    // New explanation texts guided by reviewer notes, then a fresh debugger score.
    ExplanationInstance regenerate(const ExplanationInstance& inst, const std::vector<std::string>& notes) const;

    DebuggerScore score(const ExplanationInstance& inst) const;

    const PipelineComponents& components() const { return parts_; }
    const PipelineConfig& config() const { return cfg_; }

private:
    PipelineComponents parts_;
    PipelineConfig cfg_;
};

// Offline generator/evaluator: echoes explanation prompts and answers
// debugger prompts with a fixed valid score line.
std::shared_ptr<MockChatClient> offline_client(const std::string& score_line = "Faithfulness: 4 | Completeness: 3 | Accuracy: 4");

}  // namespace xplain
