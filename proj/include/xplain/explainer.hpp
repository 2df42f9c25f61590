#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <vector>

#include "xplain/instance.hpp"
#include "xplain/llm.hpp"
#include "xplain/prune.hpp"

namespace xplain {

struct ExplanationRequest {
    std::string task_type = "commonsense question answering";
    QAContext qa;
    std::size_t predicted = 0;              // index into qa.options
    std::string gold;                       // gold option text; may be empty
    std::vector<std::string> reason_elements;  // ranked labels

    void validate() const;
};

struct ExplainerOptions {
    bool include_gold = false;        // reveal the gold answer in Stage 1
    std::size_t prompt_elements = 5;  // ranked reason-elements shown in Stage 1
    int max_retries = 3;
    std::chrono::milliseconds backoff{500};
    std::size_t max_refinements = 3;
};

struct ExplanationPair {
    std::string why;
    std::string why_not;
    std::string generator_id;
    std::size_t revision = 0;
};

// "A. first, B. second, ..."
std::string format_options(const std::vector<std::string>& options);
// "\"a\", \"b\", ..."
std::string format_elements(const std::vector<std::string>& labels);

// Stage-1 template. Reviewer notes, when given, are appended as a separate block.
std::string build_stage1_prompt(const ExplanationRequest& req, const ExplainerOptions& opts = {},
                                const std::vector<std::string>& reviewer_notes = {});
// Stage-2 template over the options other than the prediction.
std::string build_stage2_prompt(const std::string& e_why, const std::vector<std::string>& remaining);
// Options with index `predicted` removed. Throws ArgumentError if none remain.
std::vector<std::string> remaining_options(const std::vector<std::string>& options, std::size_t predicted);

// Stage 1, then Stage 2 as a continuation of the same conversation.
ExplanationPair generate(const ExplanationRequest& req, LlmClient& client, const ExplainerOptions& opts = {},
                         const std::vector<std::string>& reviewer_notes = {});

// Rebuilds the request an instance was generated from.
ExplanationRequest request_from_instance(const ExplanationInstance& inst, const std::string& task_type = {});

struct RefinementState {
    ExplanationInstance instance;
    std::size_t revision = 0;
    bool needs_manual_review = false;
    std::vector<std::string> notes;  // every reviewer note so far
};

// Regenerates with all notes so far as guidance and bumps the revision. Once
// `max_refinements` rounds have run, a further flag only marks the state for manual review.
RefinementState refine(RefinementState state, const std::vector<std::string>& flags, LlmClient& client,
                       const ExplainerOptions& opts = {}, const std::string& task_type = {});

}  // namespace xplain
