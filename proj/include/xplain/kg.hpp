#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xplain::kg {

using NodeId = std::uint32_t;

struct Node {
    std::string label;
    std::uint32_t type = 0;
};

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    std::uint32_t relation = 0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

// One undirected adjacency entry: the node on the other side and the edge index.
struct Incidence {
    NodeId neighbor;
    std::uint32_t edge;
};

// Immutable after construction; all queries are const and thread-safe.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    // Validates ids and type indices; throws ParseError on violation.
    KnowledgeGraph(std::vector<Node> nodes, std::vector<Edge> edges, std::uint32_t node_type_count,
                   std::vector<std::string> relation_names);

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<std::string>& relation_names() const { return relation_names_; }
    std::uint32_t node_type_count() const { return node_type_count_; }
    std::uint32_t relation_type_count() const { return static_cast<std::uint32_t>(relation_names_.size()); }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    // Exact label lookup.
    std::optional<NodeId> find(std::string_view label) const;

    // Nodes whose token-normalized label equals `key` (tokens joined by one space).
    std::span<const NodeId> lookup_tokens(std::string_view key) const;

    // Undirected incidence list of a node.
    std::span<const Incidence> incident(NodeId id) const;

    // Binary persistence (see README for the layout).
    void save(const std::filesystem::path& path) const;
    static KnowledgeGraph load(const std::filesystem::path& path);

private:
    void build_indexes();

    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::uint32_t node_type_count_ = 1;
    std::vector<std::string> relation_names_;

    std::unordered_map<std::string, NodeId> by_label_;
    std::unordered_map<std::string, std::vector<NodeId>> by_tokens_;
    std::vector<std::uint32_t> adj_offsets_;
    std::vector<Incidence> adj_;
};

// Reads `relation \t head \t tail` lines. '#' lines and blank lines are skipped.
KnowledgeGraph parse_triples(std::istream& in);
KnowledgeGraph load_triples(const std::filesystem::path& path);

// Token key used for grounding: tokenize(label) joined with single spaces.
std::string token_key(std::string_view label);

inline constexpr std::size_t kMaxGroundingNgram = 3;

// Leftmost-longest n-gram (n <= 3) matching of text tokens against node labels.
// Returns sorted, unique node ids.
std::vector<NodeId> ground_entities(std::string_view text, const KnowledgeGraph& graph);

struct Neighborhood {
    std::vector<NodeId> nodes;                 // sorted ascending
    std::vector<std::uint32_t> edges;          // induced edge indices, ascending
    std::unordered_map<NodeId, int> hop;       // min distance to any seed
};

// Undirected BFS up to `hops` from the seeds plus every edge among the members.
Neighborhood neighborhood(const KnowledgeGraph& graph, std::span<const NodeId> seeds, int hops);

// Converts ConceptNet assertion CSV (tab separated: uri, rel, start, end, json)
// into the triple TSV, keeping edges whose endpoints are both in `language`.
// Returns the number of triples written.
std::size_t convert_conceptnet(std::istream& in, std::ostream& out, std::string_view language = "en");

}  // namespace xplain::kg
