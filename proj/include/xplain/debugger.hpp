#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "xplain/instance.hpp"
#include "xplain/llm.hpp"

namespace xplain {

struct DebuggerScore {
    double faithfulness = 0.0;
    double completeness = 0.0;
    double accuracy = 0.0;

    double overall() const;
    bool operator==(const DebuggerScore&) const = default;
};

// Arithmetic mean of the three dimensions.
double overall(double faithfulness, double completeness, double accuracy);

// Two-decimal display form of an overall value ("3.67").
std::string format_overall(double value);

// Canonical pipe line: "Faithfulness: 4 | Completeness: 3 | Accuracy: 4".
std::string render(const DebuggerScore& s);

// Finds the three labeled values (any order, any case, prose allowed around
// them). Values must lie in [1, 5] on a 0.05 grid. Throws ParseError quoting the text.
DebuggerScore parse_scores(std::string_view text);

// System + user messages for the evaluator. Throws ArgumentError when either explanation is empty.
std::vector<ChatMessage> build_debugger_messages(const ExplanationInstance& inst);
// Both messages joined by a blank line.
std::string build_debugger_prompt(const ExplanationInstance& inst);

extern const std::string kDebuggerSystemPrompt;
extern const std::string kScoreFormatReminder;

struct ScoringOptions {
    int max_retries = 3;
    std::chrono::milliseconds backoff{500};
};

// Prompt, complete, parse. One re-ask with a format reminder on a parse
// failure, then EvaluationError.
DebuggerScore score_instance(const ExplanationInstance& inst, LlmClient& client, const ScoringOptions& opts = {});

}  // namespace xplain
