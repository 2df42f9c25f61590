#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "xplain/prune.hpp"

namespace xplain::synth {

// Random element graph: `nodes` nodes with random role types for `options`
// options, relevance in (0.05, 0.95), and `edges` random edges.
ElementGraph random_element_graph(std::mt19937_64& rng, std::size_t nodes, std::size_t edges, std::size_t options,
                                  std::size_t relation_types);

Vector random_context(std::mt19937_64& rng, std::size_t dim, double scale = 0.1);

struct PlantedConfig {
    std::size_t options = 4;
    std::size_t filler_nodes = 8;
    std::size_t question_nodes = 2;
    std::size_t extra_edges = 10;
    std::size_t relation_types = 3;
    std::size_t lm_dim = 8;
};

// One planted-signal instance. Every option has an answer node; the correct
// option additionally owns a single high-relevance signal node carrying its
// option role, linked to that option's answer node.
struct PlantedExample {
    ElementGraph graph;
    Vector context;
    std::size_t gold = 0;
    std::uint32_t signal_node = 0;  // local index in graph
};

std::vector<PlantedExample> planted_signal(std::size_t count, std::uint64_t seed, const PlantedConfig& cfg = {});

}  // namespace xplain::synth
