#include "xplain/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "xplain/debugger.hpp"
#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain {

nlohmann::ordered_json to_json(const ExplanationInstance& inst) {
    nlohmann::ordered_json j;
    if (!inst.id.empty()) j["id"] = inst.id;
    j["question"] = inst.question;
    j["answers"] = inst.answers;
    j["label"] = inst.label;
    j["predicted_label"] = inst.predicted_label;
    j["label_matched"] = inst.label_matched;
    j["concept"] = inst.concepts;
    j["topk"] = inst.topk;
    j["explanation_why"] = inst.explanation_why;
    j["explanation_why_not"] = inst.explanation_why_not;
    j["debugger_score"] = inst.debugger_score;
    j["embedding"] = inst.embedding;
    return j;
}

namespace {

template <class T>
T field(const nlohmann::json& j, const char* name, std::size_t line) {
    auto it = j.find(name);
    if (it == j.end()) throw SchemaError(name, "missing field", line);
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError(name, "wrong type", line);
    }
}

}  // namespace

ExplanationInstance instance_from_json(const nlohmann::json& j, std::size_t line) {
    if (!j.is_object()) throw SchemaError("record", "not an object", line);
    ExplanationInstance inst;
    if (j.contains("id")) inst.id = field<std::string>(j, "id", line);
    inst.question = field<std::string>(j, "question", line);
    inst.answers = field<std::vector<std::string>>(j, "answers", line);
    inst.label = field<std::string>(j, "label", line);
    inst.predicted_label = field<std::string>(j, "predicted_label", line);
    inst.label_matched = field<bool>(j, "label_matched", line);
    inst.concepts = field<std::vector<std::string>>(j, "concept", line);
    inst.topk = field<std::vector<std::string>>(j, "topk", line);
    inst.explanation_why = field<std::string>(j, "explanation_why", line);
    inst.explanation_why_not = field<std::string>(j, "explanation_why_not", line);
    inst.debugger_score = field<std::string>(j, "debugger_score", line);
    inst.embedding = field<Vector>(j, "embedding", line);
    return inst;
}

}  // namespace xplain

namespace xplain::dataset {

std::vector<ExplanationInstance> parse_instances(std::istream& in) {
    std::vector<ExplanationInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError("record", std::string("malformed record: ") + e.what(), lineno);
        }
        out.push_back(instance_from_json(j, lineno));
    }
    return out;
}

std::vector<ExplanationInstance> read_instances(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset: " + path.string());
    return parse_instances(in);
}

void write_instances(std::ostream& out, const std::vector<ExplanationInstance>& instances) {
    for (const auto& inst : instances) out << to_json(inst).dump() << '\n';
}

void write_instances(const std::filesystem::path& path, const std::vector<ExplanationInstance>& instances) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + tmp.string());
        write_instances(out, instances);
        out.flush();
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Violation> validate(const ExplanationInstance& inst) {
    std::vector<Violation> v;
    auto add = [&](std::string code, std::string field, std::string msg) {
        v.push_back({std::move(code), std::move(field), std::move(msg)});
    };
    if (text::trim(inst.question).empty()) add("empty_question", "question", "question is empty");
    if (inst.answers.size() < 2) add("answer_count", "answers", "need at least two answers");
    if (std::set<std::string>(inst.answers.begin(), inst.answers.end()).size() != inst.answers.size()) {
        add("duplicate_answer", "answers", "answers are not unique");
    }
    auto in_answers = [&](const std::string& s) {
        return std::find(inst.answers.begin(), inst.answers.end(), s) != inst.answers.end();
    };
    if (!in_answers(inst.label)) add("label_not_in_answers", "label", "label '" + inst.label + "' is not an answer");
    if (!in_answers(inst.predicted_label)) {
        add("predicted_not_in_answers", "predicted_label", "predicted '" + inst.predicted_label + "' is not an answer");
    }
    if (inst.label_matched != (inst.predicted_label == inst.label)) {
        add("label_matched_inconsistent", "label_matched", "label_matched disagrees with predicted_label == label");
    }
    if (inst.concepts.size() != kConceptCount) {
        add("concept_count", "concept",
            "expected " + std::to_string(kConceptCount) + " concepts, got " + std::to_string(inst.concepts.size()));
    }
    if (inst.topk.size() != kTopK) {
        add("topk_count", "topk", "expected " + std::to_string(kTopK) + " top-k entries, got " + std::to_string(inst.topk.size()));
    }
    std::size_t prefix = std::min(inst.concepts.size(), kTopK);
    if (inst.topk.size() != prefix || !std::equal(inst.topk.begin(), inst.topk.end(), inst.concepts.begin())) {
        add("topk_mismatch", "topk", "topk is not the first entries of concept");
    }
    if (text::trim(inst.explanation_why).empty()) add("empty_explanation", "explanation_why", "why-choose text is empty");
    if (text::trim(inst.explanation_why_not).empty()) {
        add("empty_explanation", "explanation_why_not", "why-not-choose text is empty");
    }
    try {
        parse_scores(inst.debugger_score);
    } catch (const ParseError& e) {
        add("debugger_score_unparseable", "debugger_score", e.what());
    }
    return v;
}

DatasetStats word_count_stats(const std::vector<ExplanationInstance>& instances, const std::vector<std::string>& split_of) {
    if (instances.empty()) throw ArgumentError("word count statistics need at least one instance");
    if (!split_of.empty() && split_of.size() != instances.size()) {
        throw ArgumentError("split assignment must be parallel to the instances");
    }
    struct Sum {
        std::size_t n = 0;
        double why = 0, why_not = 0, whole = 0;
    };
    Sum total;
    std::map<std::string, Sum> per;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        double w = static_cast<double>(text::word_count(inst.explanation_why));
        double wn = static_cast<double>(text::word_count(inst.explanation_why_not));
        double whole = static_cast<double>(text::word_count(inst.explanation_why + " " + inst.explanation_why_not));
        for (Sum* s : {&total, split_of.empty() ? nullptr : &per[split_of[i]]}) {
            if (!s) continue;
            ++s->n;
            s->why += w;
            s->why_not += wn;
            s->whole += whole;
        }
    }
    auto means = [](const Sum& s) {
        double n = static_cast<double>(s.n);
        return WordMeans{s.n, s.why / n, s.why_not / n, s.whole / n};
    };
    DatasetStats out;
    out.overall = means(total);
    for (const auto& [name, s] : per) out.splits[name] = means(s);
    return out;
}

std::string question_id(const ExplanationInstance& inst) {
    if (!inst.id.empty()) return inst.id;
    return "q" + text::hex64(text::fnv1a64(text::normalize_label(inst.question)));
}

SplitManifest parse_manifest(std::istream& in) {
    SplitManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto t = text::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto parts = text::split(line, '\t');
        if (parts.size() != 2) throw ParseError("manifest line needs 'question-id<TAB>split'", lineno);
        auto id = text::trim(parts[0]), split = text::trim(parts[1]);
        if (id.empty() || split.empty()) throw ParseError("empty manifest field", lineno);
        auto [it, inserted] = m.emplace(id, split);
        if (!inserted && it->second != split) throw ParseError("question " + id + " mapped to two splits", lineno);
    }
    return m;
}

SplitManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path.string());
    return parse_manifest(in);
}

std::map<std::string, std::vector<ExplanationInstance>> split_dataset(const std::vector<ExplanationInstance>& instances,
                                                                      const SplitManifest& manifest) {
    if (manifest.empty()) throw ArgumentError("split manifest is empty");
    std::map<std::string, std::vector<ExplanationInstance>> out;
    for (const auto& inst : instances) {
        auto id = question_id(inst);
        auto it = manifest.find(id);
        if (it == manifest.end()) throw ArgumentError("question " + id + " is not in the split manifest");
        out[it->second].push_back(inst);
    }
    return out;
}

std::filesystem::path released_dataset_path() {
    const char* v = std::getenv("XPLAIN_RELEASED_DATASET");
    return v ? std::filesystem::path(v) : std::filesystem::path();
}

}  // namespace xplain::dataset
