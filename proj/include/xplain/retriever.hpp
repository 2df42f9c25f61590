#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xplain/debugger.hpp"
#include "xplain/embedding.hpp"
#include "xplain/instance.hpp"
#include "xplain/prune.hpp"

namespace xplain {

// u.v / (|u| |v|). ArgumentError on a zero vector or a dimension mismatch.
double cosine(const Vector& u, const Vector& v);

struct SelectionWeights {
    double faithfulness = 1.0;
    double completeness = 1.0;
    double accuracy = 1.0;
    double overall = 0.0;

    // Throws ArgumentError on negative or all-zero weights.
    void validate() const;
    double apply(const DebuggerScore& s) const;
    // "f,c,a,o"
    static SelectionWeights parse(const std::string& csv);
};

struct Candidate {
    std::string id;
    DebuggerScore score;
};

// argmax of the weighted score sum; the lower id wins ties.
std::string select_explanation(const std::vector<Candidate>& candidates, const SelectionWeights& weights);

struct Hit {
    std::string id;
    double score = 0.0;
    std::size_t entry = 0;
};

struct IndexEntry {
    std::string id;
    Vector embedding;
    Vector unit;                      // normalized copy
    std::vector<Candidate> candidates;  // explanations stored for this question
    std::vector<std::size_t> rows;      // dataset rows of the candidates
};

// Exact cosine index over question embeddings.
class RetrievalIndex {
public:
    RetrievalIndex() = default;
    RetrievalIndex(std::size_t dimension, std::string model_id);

    // Throws ArgumentError on a duplicate id, a zero vector or a wrong dimension.
    std::size_t add(std::string id, Vector embedding, std::vector<Candidate> candidates = {},
                    std::vector<std::size_t> rows = {});

    // Ranked by cosine descending, then id ascending; min(m, size()) hits.
    std::vector<Hit> top_m(const Vector& query, std::size_t m) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t dimension() const { return dim_; }
    const std::string& model_id() const { return model_id_; }
    const std::vector<IndexEntry>& entries() const { return entries_; }
    const IndexEntry& entry(std::size_t i) const { return entries_.at(i); }

    std::filesystem::path dataset_path;  // where candidate rows live; may be empty

    void save(const std::filesystem::path& path) const;
    static RetrievalIndex load(const std::filesystem::path& path);

private:
    std::size_t dim_ = 0;
    std::string model_id_;
    std::vector<IndexEntry> entries_;
};

// Groups rows by question id. Uses each instance's stored embedding when
// `use_stored` and present, otherwise embeds the question text.
RetrievalIndex build_index(const std::vector<ExplanationInstance>& instances, const Embedder& embedder,
                           bool use_stored = true);

// Explanation id for dataset row `row`: the record id or "<question-id>#<row>".
std::string explanation_id(const ExplanationInstance& inst, std::size_t row);

struct Demo {
    std::size_t rank = 0;
    double similarity = 0.0;
    std::string explanation_id;
    ExplanationInstance instance;
};

// Demo blocks in rank order, then the query and the Stage-1 instruction.
std::string build_icl_prompt(const QAContext& query, std::vector<Demo> demos,
                             std::optional<std::size_t> predicted = std::nullopt);

struct RetrievalResult {
    std::vector<Demo> demos;
    std::string prompt;
};

// top_m over the index, then select_explanation within each retrieved question.
class Retriever {
public:
    Retriever(RetrievalIndex index, std::vector<ExplanationInstance> dataset, std::shared_ptr<const Embedder> embedder);

    RetrievalResult retrieve(const QAContext& query, std::size_t m = 3, const SelectionWeights& weights = {},
                             std::optional<std::size_t> predicted = std::nullopt) const;

    const RetrievalIndex& index() const { return index_; }

private:
    RetrievalIndex index_;
    std::vector<ExplanationInstance> dataset_;
    std::shared_ptr<const Embedder> embedder_;
};

}  // namespace xplain
