#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "xplain/embedding.hpp"

namespace xplain {

// One dataset record. Field names and order follow the released schema;
// `id` is an optional extension written first when nonempty.
struct ExplanationInstance {
    std::string id;
    std::string question;
    std::vector<std::string> answers;
    std::string label;
    std::string predicted_label;
    bool label_matched = false;
    std::vector<std::string> concepts;  // serialized as "concept"
    std::vector<std::string> topk;
    std::string explanation_why;
    std::string explanation_why_not;
    std::string debugger_score;
    Vector embedding;

    bool operator==(const ExplanationInstance&) const = default;
};

nlohmann::ordered_json to_json(const ExplanationInstance& inst);

// Throws SchemaError naming the offending field. `line` is only used for messages.
ExplanationInstance instance_from_json(const nlohmann::json& j, std::size_t line = 0);

}  // namespace xplain
