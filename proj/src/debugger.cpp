#include "xplain/debugger.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <regex>

#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain {

const std::string kDebuggerSystemPrompt =
    "Evaluators, assuming the role of LM debuggers with expertise in model parameter changes, assess explanations "
    "from the perspective of how model parameters influence decision-making. The assessment focuses on whether the "
    "explanation accurately reflects the computational and statistical mechanisms utilized by the LM.";

const std::string kScoreFormatReminder =
    "Reply with exactly one line in this format and nothing else: "
    "Faithfulness: <1-5> | Completeness: <1-5> | Accuracy: <1-5>";

double overall(double faithfulness, double completeness, double accuracy) {
    return (faithfulness + completeness + accuracy) / 3.0;
}

double DebuggerScore::overall() const { return xplain::overall(faithfulness, completeness, accuracy); }

std::string format_overall(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    return buf;
}

namespace {

std::string format_value(double v) {
    if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    while (s.back() == '0') s.pop_back();
    return s;
}

bool on_grid(double v) {
    double steps = v / 0.05;
    return std::abs(steps - std::round(steps)) < 1e-6;
}

struct Found {
    std::optional<double> f, c, a;
    bool complete() const { return f && c && a; }
};

Found scan(std::string_view text, bool first_wins) {
    static const std::regex re(R"((faithfulness|completeness|accuracy)\s*[:=]\s*([-+]?[0-9]+(?:\.[0-9]+)?))",
                               std::regex::icase);
    Found out;
    std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        std::string name = text::to_lower((*it)[1].str());
        double v = std::stod((*it)[2].str());
        auto& slot = name == "faithfulness" ? out.f : name == "completeness" ? out.c : out.a;
        if (!slot || !first_wins) slot = v;
    }
    return out;
}

}  // namespace

std::string render(const DebuggerScore& s) {
    return "Faithfulness: " + format_value(s.faithfulness) + " | Completeness: " + format_value(s.completeness) +
           " | Accuracy: " + format_value(s.accuracy);
}

DebuggerScore parse_scores(std::string_view text) {
    // Prefer a single line carrying all three values; fall back to the whole text.
    Found found;
    for (const auto& line : text::split(text, '\n')) {
        auto f = scan(line, true);
        if (f.complete()) {
            found = f;
            break;
        }
    }
    if (!found.complete()) found = scan(text, true);
    if (!found.complete()) {
        std::string missing;
        if (!found.f) missing += " faithfulness";
        if (!found.c) missing += " completeness";
        if (!found.a) missing += " accuracy";
        throw ParseError("debugger score missing" + missing + " in: " + std::string(text));
    }
    DebuggerScore s{*found.f, *found.c, *found.a};
    for (double v : {s.faithfulness, s.completeness, s.accuracy}) {
        if (v < 1.0 || v > 5.0 || !on_grid(v)) {
            throw ParseError("debugger score value " + format_value(v) + " outside [1,5] in: " + std::string(text));
        }
    }
    return s;
}

std::vector<ChatMessage> build_debugger_messages(const ExplanationInstance& inst) {
    if (text::trim(inst.explanation_why).empty()) throw ArgumentError("instance has no why-choose explanation");
    if (text::trim(inst.explanation_why_not).empty()) throw ArgumentError("instance has no why-not-choose explanation");
    std::string options;
    for (std::size_t i = 0; i < inst.answers.size(); ++i) {
        if (i) options += ", ";
        options += std::string(1, static_cast<char>('A' + i % 26)) + ". " + inst.answers[i];
    }
    std::string content =
        "Evaluators are presented with a task where the LM is augmented with key reasoning elements derived from its "
        "operation. This includes the question, answer options, the LM's prediction, and the corresponding "
        "explanation.\n\n"
        "Question: " + inst.question + "\n"
        "Answer Options: " + options + "\n"
        "Prediction: " + inst.predicted_label + "\n"
        "Explanation (Why): " + inst.explanation_why + "\n"
        "Explanation (Why-Not): " + inst.explanation_why_not + "\n\n"
        "Evaluation Criteria:\n"
        "- Faithfulness: Does the explanation accurately represent the underlying computational processes and "
        "data-driven mechanisms used by the LM to reach its conclusion?\n"
        "- Completeness: Does the explanation encompass all significant computational strategies and data insights "
        "relied upon by the LM to make the decision?\n"
        "- Accuracy: How precisely does the explanation reflect the true capabilities and decision-making processes "
        "of the LM, considering its design, training data, and functional algorithms?\n\n"
        "Scoring: Evaluators are instructed to score each dimension on a scale from 1 to 5, where 1 indicates the "
        "lowest level of adherence (poor) and 5 indicates the highest (excellent). The scoring guide emphasizes "
        "balanced evaluation, advising against overly strict judgments.\n\n"
        "Output format: Faithfulness: 4 | Completeness: 3 | Accuracy: 4";
    return {{"system", kDebuggerSystemPrompt}, {"user", content}};
}

std::string build_debugger_prompt(const ExplanationInstance& inst) {
    auto msgs = build_debugger_messages(inst);
    return msgs[0].content + "\n\n" + msgs[1].content;
}

DebuggerScore score_instance(const ExplanationInstance& inst, LlmClient& client, const ScoringOptions& opts) {
    auto messages = build_debugger_messages(inst);
    std::string first = complete_with_retry(client, messages, opts.max_retries, opts.backoff);
    try {
        return parse_scores(first);
    } catch (const ParseError&) {
    }
    messages.push_back({"assistant", first});
    messages.push_back({"user", kScoreFormatReminder});
    std::string second = complete_with_retry(client, messages, opts.max_retries, opts.backoff);
    try {
        return parse_scores(second);
    } catch (const ParseError& e) {
        throw EvaluationError(std::string("evaluator output unparseable after re-ask: ") + e.what());
    }
}

}  // namespace xplain
