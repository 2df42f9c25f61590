#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "xplain/embedding.hpp"
#include "xplain/kg.hpp"

namespace xplain {

struct QAContext {
    std::string question;
    std::vector<std::string> options;
    Vector context_embedding;  // pooled LM representation of (Q, A)

    // Throws ArgumentError unless there are >= 2 unique options and the embedding is finite.
    void validate() const;
    // Encoding text fed to relevance scorers after the node label.
    std::string scoring_text() const;
};

// Context role of an element-graph node. Option roles are 2 + option index.
enum class NodeRole : std::uint32_t { kOther = 0, kQuestion = 1, kFirstOption = 2 };

inline constexpr std::uint32_t role_type_count(std::size_t option_count) {
    return 2 + static_cast<std::uint32_t>(option_count);
}

struct ElementNode {
    kg::NodeId kg_id = 0;
    std::string label;
    std::uint32_t type = 0;  // NodeRole value
    double relevance = 0.0;  // s_i in (0, 1)
};

// Edge between local node indices.
struct ElementEdge {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t relation = 0;
};

// Pruned QA-conditioned subgraph. Nodes are ordered by ascending KG id.
struct ElementGraph {
    std::string question;
    std::vector<std::string> options;
    std::vector<ElementNode> nodes;
    std::vector<ElementEdge> edges;
    std::uint32_t node_type_count = 0;
    std::vector<std::string> relation_names;

    std::uint32_t relation_type_count() const { return static_cast<std::uint32_t>(relation_names.size()); }
    void validate() const;

    nlohmann::json to_json() const;
    static ElementGraph from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static ElementGraph load(const std::filesystem::path& path);
};

// f_s^node(f_enc(label || QA)). Implementations must be deterministic and thread-safe.
class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;
    virtual double logit(std::string_view node_label, const QAContext& qa) const = 0;
};

// Offline scorer. encode: signed token feature hashing into `dim` buckets
// (bucket = fnv1a64(token) % dim, sign = top bit). head: dot product with
// weights w_k = unit_symmetric(splitmix64(seed + k)).
class HashScorer final : public RelevanceScorer {
public:
    explicit HashScorer(std::uint64_t seed = 0, std::size_t dim = 64);
    Vector encode(std::string_view text) const;
    double head(const Vector& encoded) const;
    double logit(std::string_view node_label, const QAContext& qa) const override;

private:
    std::uint64_t seed_;
    std::vector<double> weights_;
};

// Embedding-backed scorer: logit = scale * cos(embed(label || QA), embed(QA)) + bias.
class EmbeddingScorer final : public RelevanceScorer {
public:
    EmbeddingScorer(std::shared_ptr<const Embedder> embedder, double scale = 10.0, double bias = -5.0);
    double logit(std::string_view node_label, const QAContext& qa) const override;

private:
    std::shared_ptr<const Embedder> embedder_;
    double scale_;
    double bias_;
};

// Wraps a callable; used by tests and the Python bindings.
class FunctionScorer final : public RelevanceScorer {
public:
    using Fn = std::function<double(std::string_view, const QAContext&)>;
    explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
    double logit(std::string_view node_label, const QAContext& qa) const override { return fn_(node_label, qa); }

private:
    Fn fn_;
};

// Logistic function clamped to the open interval (0, 1).
double relevance_from_logit(double logit);

// s_i = sigmoid(logit). Throws NumericalError on a non-finite logit.
double score_node(const kg::KnowledgeGraph& graph, kg::NodeId node, const QAContext& qa,
                  const RelevanceScorer& scorer);

struct PruneOptions {
    std::size_t max_nodes = 200;  // N
    int hops = 2;
    std::size_t threads = 1;
};

// Grounds Q and A, expands the hop-bounded neighborhood, keeps the top-N
// nodes by relevance (lower KG id wins ties) and their induced edges.
ElementGraph prune_kg(const QAContext& qa, const kg::KnowledgeGraph& graph, const RelevanceScorer& scorer,
                      const PruneOptions& opts = {});

}  // namespace xplain
