#include "xplain/explainer.hpp"

#include <algorithm>

#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain {

void ExplanationRequest::validate() const {
    qa.validate();
    if (predicted >= qa.options.size()) throw ArgumentError("predicted option index out of range");
    if (reason_elements.empty()) throw ArgumentError("reason-elements are empty");
    if (!gold.empty() && std::find(qa.options.begin(), qa.options.end(), gold) == qa.options.end()) {
        throw ArgumentError("gold answer is not an option: " + gold);
    }
}

std::string format_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += ", ";
        out += static_cast<char>('A' + i % 26);
        out += ". " + options[i];
    }
    return out;
}

std::string format_elements(const std::vector<std::string>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + labels[i] + "\"";
    }
    return out;
}

std::string build_stage1_prompt(const ExplanationRequest& req, const ExplainerOptions& opts,
                                const std::vector<std::string>& reviewer_notes) {
    req.validate();
    const std::string& y = req.qa.options[req.predicted];
    std::vector<std::string> ranked(req.reason_elements.begin(),
                                    req.reason_elements.begin() +
                                        static_cast<std::ptrdiff_t>(std::min(opts.prompt_elements, req.reason_elements.size())));
    std::string p;
    p += "Basis: Given a LM augmented with a graph attention network to extract key reasoning elements for "
         "decision-making. The task is " + req.task_type + ".\n";
    p += "Input: The question is: " + req.qa.question + ". The Answer Options are: " + format_options(req.qa.options) + "\n";
    p += "Output: The model predicted choice " + y + ". Based on the Ranked Reason-elements: " + format_elements(ranked) + "\n";
    if (opts.include_gold && !req.gold.empty()) p += "The correct answer is " + req.gold + ".\n";
    p += "Explanation (Stage 1): Explain the LM's reasoning process for selecting " + y +
         " over the other options. Provide concise explanations for why each reason-element supports " + y +
         " as the predicted choice. Focus on the LM's behavior and the significance of the Ranked Reason-elements. "
         "Your response should be short and concise.";
    if (!reviewer_notes.empty()) {
        p += "\n\nReviewer notes:";
        for (const auto& n : reviewer_notes) p += "\n- " + n;
    }
    return p;
}

std::string build_stage2_prompt(const std::string& e_why, const std::vector<std::string>& remaining) {
    if (text::trim(e_why).empty()) throw ArgumentError("stage-2 prompt needs a nonempty why-choose explanation");
    if (remaining.empty()) throw ArgumentError("stage-2 prompt needs at least one other option");
    return "Explanation (Stage 2): Based on the " + e_why + ", explain why this LM makes the other options less likely " +
           format_elements(remaining) + ". Your response should be short and concise.";
}

std::vector<std::string> remaining_options(const std::vector<std::string>& options, std::size_t predicted) {
    if (predicted >= options.size()) throw ArgumentError("predicted option index out of range");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i != predicted) out.push_back(options[i]);
    }
    if (out.empty()) throw ArgumentError("no options remain besides the prediction");
    return out;
}

ExplanationPair generate(const ExplanationRequest& req, LlmClient& client, const ExplainerOptions& opts,
                         const std::vector<std::string>& reviewer_notes) {
    auto remaining = remaining_options(req.qa.options, req.predicted);
    std::vector<ChatMessage> convo{{"user", build_stage1_prompt(req, opts, reviewer_notes)}};
    ExplanationPair pair;
    pair.generator_id = client.id();
    pair.why = complete_with_retry(client, convo, opts.max_retries, opts.backoff);
    convo.push_back({"assistant", pair.why});
    convo.push_back({"user", build_stage2_prompt(pair.why, remaining)});
    pair.why_not = complete_with_retry(client, convo, opts.max_retries, opts.backoff);
    return pair;
}

ExplanationRequest request_from_instance(const ExplanationInstance& inst, const std::string& task_type) {
    ExplanationRequest req;
    if (!task_type.empty()) req.task_type = task_type;
    req.qa.question = inst.question;
    req.qa.options = inst.answers;
    auto it = std::find(inst.answers.begin(), inst.answers.end(), inst.predicted_label);
    if (it == inst.answers.end()) throw ArgumentError("predicted label is not an answer: " + inst.predicted_label);
    req.predicted = static_cast<std::size_t>(it - inst.answers.begin());
    req.gold = inst.label;
    req.reason_elements = inst.topk.empty() ? inst.concepts : inst.topk;
    return req;
}

RefinementState refine(RefinementState state, const std::vector<std::string>& flags, LlmClient& client,
                       const ExplainerOptions& opts, const std::string& task_type) {
    if (flags.empty()) throw ArgumentError("refinement needs at least one reviewer note");
    if (state.needs_manual_review) return state;
    state.notes.insert(state.notes.end(), flags.begin(), flags.end());
    if (state.revision >= opts.max_refinements) {
        state.needs_manual_review = true;
        return state;
    }
    auto pair = generate(request_from_instance(state.instance, task_type), client, opts, state.notes);
    state.instance.explanation_why = pair.why;
    state.instance.explanation_why_not = pair.why_not;
    ++state.revision;
    return state;
}

}  // namespace xplain
