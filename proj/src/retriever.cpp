#include "xplain/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "xplain/dataset.hpp"
#include "xplain/errors.hpp"
#include "xplain/explainer.hpp"
#include "xplain/text.hpp"

namespace xplain {

namespace {

double norm2(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

constexpr char kIndexMagic[4] = {'X', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

double cosine(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) throw ArgumentError("cosine: dimension mismatch");
    double nu = norm2(u), nv = norm2(v);
    if (nu == 0.0 || nv == 0.0) throw ArgumentError("cosine: zero vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dot += (u[i] / nu) * (v[i] / nv);
    return dot;
}

void SelectionWeights::validate() const {
    for (double w : {faithfulness, completeness, accuracy, overall}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("selection weights must be finite and non-negative");
    }
    if (faithfulness == 0.0 && completeness == 0.0 && accuracy == 0.0 && overall == 0.0) {
        throw ArgumentError("at least one selection weight must be positive");
    }
}

double SelectionWeights::apply(const DebuggerScore& s) const {
    double v = 0.0;
    if (faithfulness != 0.0) v += faithfulness * s.faithfulness;
    if (completeness != 0.0) v += completeness * s.completeness;
    if (accuracy != 0.0) v += accuracy * s.accuracy;
    if (overall != 0.0) v += overall * s.overall();
    return v;
}

SelectionWeights SelectionWeights::parse(const std::string& csv) {
    auto parts = text::split(csv, ',');
    if (parts.size() != 4) throw ArgumentError("weights need four comma-separated values: " + csv);
    SelectionWeights w;
    try {
        w.faithfulness = std::stod(parts[0]);
        w.completeness = std::stod(parts[1]);
        w.accuracy = std::stod(parts[2]);
        w.overall = std::stod(parts[3]);
    } catch (const std::exception&) {
        throw ArgumentError("weights are not numbers: " + csv);
    }
    w.validate();
    return w;
}

std::string select_explanation(const std::vector<Candidate>& candidates, const SelectionWeights& weights) {
    weights.validate();
    if (candidates.empty()) throw ArgumentError("no candidate explanations");
    const Candidate* best = nullptr;
    double best_value = 0.0;
    for (const auto& c : candidates) {
        double v = weights.apply(c.score);
        if (!best || v > best_value || (v == best_value && c.id < best->id)) {
            best = &c;
            best_value = v;
        }
    }
    return best->id;
}

RetrievalIndex::RetrievalIndex(std::size_t dimension, std::string model_id)
    : dim_(dimension), model_id_(std::move(model_id)) {
    if (dim_ == 0) throw ArgumentError("index dimension must be positive");
}

std::size_t RetrievalIndex::add(std::string id, Vector embedding, std::vector<Candidate> candidates,
                                std::vector<std::size_t> rows) {
    if (embedding.size() != dim_) throw ArgumentError("embedding dimension mismatch for " + id);
    double n = norm2(embedding);
    if (n == 0.0 || !std::isfinite(n)) throw ArgumentError("zero or non-finite embedding for " + id);
    for (const auto& e : entries_) {
        if (e.id == id) throw ArgumentError("duplicate index id " + id);
    }
    IndexEntry e;
    e.id = std::move(id);
    e.unit.resize(dim_);
    for (std::size_t k = 0; k < dim_; ++k) e.unit[k] = embedding[k] / n;
    e.embedding = std::move(embedding);
    e.candidates = std::move(candidates);
    e.rows = std::move(rows);
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
}

std::vector<Hit> RetrievalIndex::top_m(const Vector& query, std::size_t m) const {
    if (m == 0) throw ArgumentError("m must be at least 1");
    if (entries_.empty()) throw ArgumentError("index is empty");
    if (query.size() != dim_) throw ArgumentError("query dimension mismatch");
    double n = norm2(query);
    if (n == 0.0) throw ArgumentError("query embedding is zero");
    std::vector<Hit> hits(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        double dot = 0.0;
        const auto& u = entries_[i].unit;
        for (std::size_t k = 0; k < dim_; ++k) dot += u[k] * (query[k] / n);
        hits[i] = {entries_[i].id, dot, i};
    }
    auto better = [](const Hit& a, const Hit& b) { return a.score != b.score ? a.score > b.score : a.id < b.id; };
    std::size_t k = std::min(m, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
    hits.resize(k);
    return hits;
}

// Layout: "XIDX", u32 version, u32 header length, JSON header
// {dimension, model_id, count, dataset}, then per entry: u32 id length, id
// bytes, dimension doubles, u32 candidate count, and per candidate u32 id
// length, id bytes, u64 row, three doubles (f, c, a).
void RetrievalIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    auto u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    auto str = [&](const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    };
    auto dbl = [&](double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    nlohmann::json header{{"dimension", dim_}, {"model_id", model_id_}, {"count", entries_.size()},
                          {"dataset", dataset_path.string()}};
    out.write(kIndexMagic, 4);
    u32(kIndexVersion);
    str(header.dump());
    for (const auto& e : entries_) {
        str(e.id);
        for (double x : e.embedding) dbl(x);
        u32(static_cast<std::uint32_t>(e.candidates.size()));
        for (std::size_t c = 0; c < e.candidates.size(); ++c) {
            str(e.candidates[c].id);
            u64(c < e.rows.size() ? e.rows[c] : 0);
            dbl(e.candidates[c].score.faithfulness);
            dbl(e.candidates[c].score.completeness);
            dbl(e.candidates[c].score.accuracy);
        }
    }
    if (!out) throw Error("write failed: " + path.string());
}

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open index: " + path.string());
    auto need = [&](bool ok) {
        if (!ok || !in) throw ParseError("truncated or corrupt index file: " + path.string());
    };
    auto u32 = [&] {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        need(true);
        return v;
    };
    auto u64 = [&] {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        need(true);
        return v;
    };
    auto str = [&] {
        std::uint32_t n = u32();
        need(n < (1u << 30));
        std::string s(n, '\0');
        in.read(s.data(), n);
        need(true);
        return s;
    };
    auto dbl = [&] {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        need(true);
        return v;
    };
    char magic[4];
    in.read(magic, 4);
    need(std::memcmp(magic, kIndexMagic, 4) == 0);
    if (u32() != kIndexVersion) throw ParseError("unsupported index version: " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(str());
    } catch (const nlohmann::json::exception&) {
        need(false);
    }
    RetrievalIndex idx(header.at("dimension").get<std::size_t>(), header.at("model_id").get<std::string>());
    idx.dataset_path = header.value("dataset", std::string());
    auto count = header.at("count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i) {
        std::string id = str();
        Vector v(idx.dim_);
        for (auto& x : v) x = dbl();
        std::uint32_t nc = u32();
        std::vector<Candidate> cands;
        std::vector<std::size_t> rows;
        for (std::uint32_t c = 0; c < nc; ++c) {
            Candidate cand;
            cand.id = str();
            rows.push_back(static_cast<std::size_t>(u64()));
            cand.score.faithfulness = dbl();
            cand.score.completeness = dbl();
            cand.score.accuracy = dbl();
            cands.push_back(std::move(cand));
        }
        idx.add(std::move(id), std::move(v), std::move(cands), std::move(rows));
    }
    return idx;
}

std::string explanation_id(const ExplanationInstance& inst, std::size_t row) {
    if (!inst.id.empty()) return inst.id;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%08zu", row);
    return dataset::question_id(inst) + buf;
}

RetrievalIndex build_index(const std::vector<ExplanationInstance>& instances, const Embedder& embedder, bool use_stored) {
    if (instances.empty()) throw ArgumentError("cannot index an empty dataset");
    // Question order follows first appearance.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < instances.size(); ++r) {
        auto qid = text::hex64(text::fnv1a64(text::normalize_label(instances[r].question)));
        auto [it, inserted] = groups.try_emplace(qid);
        if (inserted) order.push_back(qid);
        it->second.push_back(r);
    }
    std::size_t dim = embedder.dimension();
    if (use_stored && !instances.front().embedding.empty()) dim = instances.front().embedding.size();
    RetrievalIndex idx(dim, embedder.model_id());
    for (const auto& qid : order) {
        const auto& rows = groups[qid];
        const auto& first = instances[rows.front()];
        Vector v = (use_stored && !first.embedding.empty()) ? first.embedding
                                                             : embedder.embed(qa_embedding_text(first.question, first.answers));
        std::vector<Candidate> cands;
        std::vector<std::size_t> kept;
        for (auto r : rows) {
            DebuggerScore s{};
            try {
                s = parse_scores(instances[r].debugger_score);
            } catch (const ParseError&) {
                continue;  // unscored rows are not selectable
            }
            cands.push_back({explanation_id(instances[r], r), s});
            kept.push_back(r);
        }
        idx.add(dataset::question_id(first), std::move(v), std::move(cands), std::move(kept));
    }
    return idx;
}

std::string build_icl_prompt(const QAContext& query, std::vector<Demo> demos, std::optional<std::size_t> predicted) {
    if (demos.empty()) throw ArgumentError("in-context prompt needs at least one demonstration");
    std::stable_sort(demos.begin(), demos.end(), [](const Demo& a, const Demo& b) { return a.rank < b.rank; });
    std::string p;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const auto& inst = demos[i].instance;
        p += "Example " + std::to_string(i + 1) + ":\n";
        p += "Question: " + inst.question + "\n";
        p += "Answer Options: " + format_options(inst.answers) + "\n";
        p += "Predicted Answer: " + inst.predicted_label + "\n";
        p += "Explanation (Why): " + inst.explanation_why + "\n";
        p += "Explanation (Why-Not): " + inst.explanation_why_not + "\n\n";
    }
    std::string y = "the predicted choice";
    if (predicted) {
        if (*predicted >= query.options.size()) throw ArgumentError("predicted option index out of range");
        y = query.options[*predicted];
    }
    p += "Question: " + query.question + "\n";
    p += "Answer Options: " + format_options(query.options) + "\n";
    if (predicted) p += "Predicted Answer: " + y + "\n";
    p += "Explanation (Stage 1): Explain the LM's reasoning process for selecting " + y +
         " over the other options. Provide concise explanations for why each reason-element supports " + y +
         " as the predicted choice. Focus on the LM's behavior and the significance of the Ranked Reason-elements. "
         "Your response should be short and concise.";
    return p;
}

Retriever::Retriever(RetrievalIndex index, std::vector<ExplanationInstance> dataset, std::shared_ptr<const Embedder> embedder)
    : index_(std::move(index)), dataset_(std::move(dataset)), embedder_(std::move(embedder)) {
    if (!embedder_) throw ArgumentError("retriever needs an embedder");
    if (embedder_->dimension() != index_.dimension()) {
        throw ConfigurationError("embedder dimension " + std::to_string(embedder_->dimension()) +
                                 " does not match index dimension " + std::to_string(index_.dimension()));
    }
    for (const auto& e : index_.entries()) {
        for (auto r : e.rows) {
            if (r >= dataset_.size()) throw ConfigurationError("index refers to a row beyond the dataset: " + e.id);
        }
    }
}

RetrievalResult Retriever::retrieve(const QAContext& query, std::size_t m, const SelectionWeights& weights,
                                    std::optional<std::size_t> predicted) const {
    weights.validate();
    auto hits = index_.top_m(embedder_->embed(qa_embedding_text(query.question, query.options)), m);
    RetrievalResult out;
    for (std::size_t rank = 0; rank < hits.size(); ++rank) {
        const auto& entry = index_.entry(hits[rank].entry);
        if (entry.candidates.empty()) continue;
        std::string chosen = select_explanation(entry.candidates, weights);
        for (std::size_t c = 0; c < entry.candidates.size(); ++c) {
            if (entry.candidates[c].id == chosen) {
                out.demos.push_back({rank, hits[rank].score, chosen, dataset_.at(entry.rows.at(c))});
                break;
            }
        }
    }
    if (!out.demos.empty()) out.prompt = build_icl_prompt(query, out.demos, predicted);
    return out;
}

}  // namespace xplain
