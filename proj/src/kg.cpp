#include "xplain/kg.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain::kg {

namespace {

constexpr std::array<char, 4> kMagic = {'X', 'K', 'G', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("truncated graph file");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    auto n = read_pod<std::uint32_t>(in);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw ParseError("truncated graph file");
    return s;
}

struct EdgeKey {
    NodeId src, dst;
    std::uint32_t rel;
    bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& k) const noexcept {
        std::uint64_t h = text::splitmix64((std::uint64_t{k.src} << 32) | k.dst);
        return static_cast<std::size_t>(text::splitmix64(h ^ k.rel));
    }
};

}  // namespace

KnowledgeGraph::KnowledgeGraph(std::vector<Node> nodes, std::vector<Edge> edges,
                               std::uint32_t node_type_count, std::vector<std::string> relation_names)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      node_type_count_(node_type_count),
      relation_names_(std::move(relation_names)) {
    if (node_type_count_ == 0 && !nodes_.empty()) throw ParseError("node-type-count must be positive");
    for (const auto& n : nodes_) {
        if (n.type >= node_type_count_) throw ParseError("node type index out of range: " + n.label);
    }
    for (const auto& e : edges_) {
        if (e.src >= nodes_.size() || e.dst >= nodes_.size()) throw ParseError("edge endpoint out of range");
        if (e.relation >= relation_names_.size()) throw ParseError("relation index out of range");
    }
    build_indexes();
}

void KnowledgeGraph::build_indexes() {
    by_label_.clear();
    by_tokens_.clear();
    by_label_.reserve(nodes_.size());
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        if (!by_label_.emplace(nodes_[id].label, id).second) {
            throw ParseError("duplicate node label: " + nodes_[id].label);
        }
        auto key = token_key(nodes_[id].label);
        if (!key.empty()) by_tokens_[key].push_back(id);
    }

    adj_offsets_.assign(nodes_.size() + 1, 0);
    for (const auto& e : edges_) {
        ++adj_offsets_[e.src + 1];
        if (e.dst != e.src) ++adj_offsets_[e.dst + 1];
    }
    for (std::size_t i = 1; i < adj_offsets_.size(); ++i) adj_offsets_[i] += adj_offsets_[i - 1];
    adj_.resize(adj_offsets_.back());
    std::vector<std::uint32_t> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
    for (std::uint32_t ei = 0; ei < edges_.size(); ++ei) {
        const auto& e = edges_[ei];
        adj_[fill[e.src]++] = {e.dst, ei};
        if (e.dst != e.src) adj_[fill[e.dst]++] = {e.src, ei};
    }
}

std::optional<NodeId> KnowledgeGraph::find(std::string_view label) const {
    auto it = by_label_.find(std::string(label));
    if (it == by_label_.end()) return std::nullopt;
    return it->second;
}

std::span<const NodeId> KnowledgeGraph::lookup_tokens(std::string_view key) const {
    auto it = by_tokens_.find(std::string(key));
    if (it == by_tokens_.end()) return {};
    return it->second;
}

std::span<const Incidence> KnowledgeGraph::incident(NodeId id) const {
    if (id >= nodes_.size()) throw ArgumentError("node id out of range: " + std::to_string(id));
    return std::span<const Incidence>(adj_.data() + adj_offsets_[id], adj_offsets_[id + 1] - adj_offsets_[id]);
}

void KnowledgeGraph::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, kFormatVersion);
    write_pod(out, node_type_count_);
    write_pod<std::uint32_t>(out, relation_type_count());
    for (const auto& r : relation_names_) write_string(out, r);
    write_pod<std::uint64_t>(out, nodes_.size());
    for (const auto& n : nodes_) {
        write_pod(out, n.type);
        write_string(out, n.label);
    }
    write_pod<std::uint64_t>(out, edges_.size());
    for (const auto& e : edges_) {
        write_pod(out, e.src);
        write_pod(out, e.dst);
        write_pod(out, e.relation);
    }
    if (!out) throw Error("write failed: " + path.string());
}

KnowledgeGraph KnowledgeGraph::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open graph file: " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ParseError("not a graph file: " + path.string());
    auto version = read_pod<std::uint32_t>(in);
    if (version != kFormatVersion) throw ParseError("unsupported graph file version " + std::to_string(version));
    auto node_types = read_pod<std::uint32_t>(in);
    auto rel_count = read_pod<std::uint32_t>(in);
    std::vector<std::string> rels(rel_count);
    for (auto& r : rels) r = read_string(in);
    auto node_count = read_pod<std::uint64_t>(in);
    std::vector<Node> nodes(node_count);
    for (auto& n : nodes) {
        n.type = read_pod<std::uint32_t>(in);
        n.label = read_string(in);
    }
    auto edge_count = read_pod<std::uint64_t>(in);
    std::vector<Edge> edges(edge_count);
    for (auto& e : edges) {
        e.src = read_pod<NodeId>(in);
        e.dst = read_pod<NodeId>(in);
        e.relation = read_pod<std::uint32_t>(in);
    }
    return KnowledgeGraph(std::move(nodes), std::move(edges), node_types, std::move(rels));
}

KnowledgeGraph parse_triples(std::istream& in) {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<std::string> relations;
    std::unordered_map<std::string, NodeId> node_ids;
    std::unordered_map<std::string, std::uint32_t> rel_ids;
    std::unordered_map<EdgeKey, char, EdgeKeyHash> seen;

    auto intern_node = [&](const std::string& label) {
        auto [it, inserted] = node_ids.emplace(label, static_cast<NodeId>(nodes.size()));
        if (inserted) nodes.push_back({label, 0});
        return it->second;
    };

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto fields = text::split(line, '\t');
        if (fields.size() != 3) {
            throw ParseError("expected 3 tab-separated fields, got " + std::to_string(fields.size()), lineno);
        }
        if (fields[0].empty()) throw ParseError("empty relation", lineno);
        if (fields[1].empty() || fields[2].empty()) throw ParseError("empty label", lineno);

        auto [rit, rnew] = rel_ids.emplace(fields[0], static_cast<std::uint32_t>(relations.size()));
        if (rnew) relations.push_back(fields[0]);
        NodeId head = intern_node(fields[1]);
        NodeId tail = intern_node(fields[2]);
        EdgeKey key{head, tail, rit->second};
        if (seen.emplace(key, 0).second) edges.push_back({head, tail, rit->second});
    }
    return KnowledgeGraph(std::move(nodes), std::move(edges), 1, std::move(relations));
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open triple file: " + path.string());
    return parse_triples(in);
}

std::string token_key(std::string_view label) { return text::join(text::tokenize(label), " "); }

std::vector<NodeId> ground_entities(std::string_view text_in, const KnowledgeGraph& graph) {
    auto tokens = text::tokenize(text_in);
    std::set<NodeId> found;
    std::size_t pos = 0;
    while (pos < tokens.size()) {
        std::size_t matched = 0;
        for (std::size_t n = std::min(kMaxGroundingNgram, tokens.size() - pos); n >= 1; --n) {
            std::string key = tokens[pos];
            for (std::size_t k = 1; k < n; ++k) key += ' ' + tokens[pos + k];
            auto ids = graph.lookup_tokens(key);
            if (!ids.empty()) {
                found.insert(ids.begin(), ids.end());
                matched = n;
                break;
            }
        }
        pos += matched ? matched : 1;
    }
    return {found.begin(), found.end()};
}

Neighborhood neighborhood(const KnowledgeGraph& graph, std::span<const NodeId> seeds, int hops) {
    if (seeds.empty()) throw ArgumentError("neighborhood requires at least one seed");
    if (hops < 0) throw ArgumentError("hops must be non-negative");
    Neighborhood out;
    std::deque<NodeId> frontier;
    for (NodeId s : seeds) {
        if (s >= graph.node_count()) throw ArgumentError("invalid seed node id " + std::to_string(s));
        if (out.hop.emplace(s, 0).second) frontier.push_back(s);
    }
    while (!frontier.empty()) {
        NodeId cur = frontier.front();
        frontier.pop_front();
        int d = out.hop.at(cur);
        if (d == hops) continue;
        for (const auto& inc : graph.incident(cur)) {
            if (out.hop.emplace(inc.neighbor, d + 1).second) frontier.push_back(inc.neighbor);
        }
    }
    out.nodes.reserve(out.hop.size());
    for (const auto& [id, _] : out.hop) out.nodes.push_back(id);
    std::sort(out.nodes.begin(), out.nodes.end());
    for (NodeId id : out.nodes) {
        for (const auto& inc : graph.incident(id)) {
            // Each induced edge is reported once, from its lower-id endpoint.
            if (inc.neighbor < id || !out.hop.count(inc.neighbor)) continue;
            out.edges.push_back(inc.edge);
        }
    }
    std::sort(out.edges.begin(), out.edges.end());
    out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
    return out;
}

namespace {

// "/c/en/ice_cream/n" -> {"en", "ice_cream"}
std::optional<std::pair<std::string, std::string>> concept_label(std::string_view uri) {
    auto parts = text::split(uri, '/');
    if (parts.size() < 4 || parts[1] != "c") return std::nullopt;
    return std::make_pair(parts[2], parts[3]);
}

}  // namespace

std::size_t convert_conceptnet(std::istream& in, std::ostream& out, std::string_view language) {
    std::string line;
    std::size_t lineno = 0, written = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = text::split(line, '\t');
        if (fields.size() < 4) throw ParseError("expected at least 4 tab-separated fields", lineno);
        auto head = concept_label(fields[2]);
        auto tail = concept_label(fields[3]);
        if (!head || !tail || head->first != language || tail->first != language) continue;
        std::string_view rel = fields[1];
        if (rel.rfind("/r/", 0) == 0) rel.remove_prefix(3);
        if (rel.empty() || rel == "ExternalURL") continue;
        out << text::to_lower(rel) << '\t' << head->second << '\t' << tail->second << '\n';
        ++written;
    }
    return written;
}

}  // namespace xplain::kg
