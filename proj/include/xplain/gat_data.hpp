#pragma once

#include <filesystem>
#include <vector>

#include "xplain/embedding.hpp"
#include "xplain/prune.hpp"

namespace xplain::gat {

// Training record: {"graph": <element graph>, "gold": k, "context": [...]}
// one per line. "context" may be omitted and filled by the reader.
struct LabeledGraph {
    ElementGraph graph;
    Vector context;
    std::size_t gold = 0;
};

// Missing contexts are embedded from the graph's question and options with
// `context_embedder` (ParseError if none is given).
std::vector<LabeledGraph> read_labeled_graphs(const std::filesystem::path& path,
                                              const Embedder* context_embedder = nullptr);
void write_labeled_graphs(const std::filesystem::path& path, const std::vector<LabeledGraph>& data);

}  // namespace xplain::gat
