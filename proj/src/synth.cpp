#include "xplain/synth.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace xplain::synth {

ElementGraph random_element_graph(std::mt19937_64& rng, std::size_t nodes, std::size_t edges, std::size_t options,
                                  std::size_t relation_types) {
    ElementGraph eg;
    eg.question = "synthetic question";
    for (std::size_t k = 0; k < options; ++k) eg.options.push_back("option " + std::to_string(k));
    eg.node_type_count = role_type_count(options);
    for (std::size_t r = 0; r < relation_types; ++r) eg.relation_names.push_back("rel" + std::to_string(r));
    std::uniform_int_distribution<std::uint32_t> type(0, eg.node_type_count - 1);
    std::uniform_real_distribution<double> rel(0.05, 0.95);
    for (std::size_t i = 0; i < nodes; ++i) {
        eg.nodes.push_back({static_cast<kg::NodeId>(i), "node" + std::to_string(i), type(rng), rel(rng)});
    }
    if (nodes == 0) return eg;
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(nodes - 1));
    std::uniform_int_distribution<std::uint32_t> relation(0, static_cast<std::uint32_t>(relation_types - 1));
    for (std::size_t e = 0; e < edges; ++e) eg.edges.push_back({pick(rng), pick(rng), relation(rng)});
    return eg;
}

Vector random_context(std::mt19937_64& rng, std::size_t dim, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    Vector v(dim);
    for (double& x : v) x = n(rng);
    return v;
}

std::vector<PlantedExample> planted_signal(std::size_t count, std::uint64_t seed, const PlantedConfig& cfg) {
    std::mt19937_64 rng(seed);
    std::vector<PlantedExample> out;
    out.reserve(count);
    std::uniform_int_distribution<std::size_t> gold_dist(0, cfg.options - 1);
    std::uniform_real_distribution<double> low(0.05, 0.6);
    std::uniform_real_distribution<double> mid(0.3, 0.7);
    std::uniform_real_distribution<double> high(0.85, 0.99);
    std::uniform_int_distribution<std::uint32_t> relation(0, static_cast<std::uint32_t>(cfg.relation_types - 1));

    for (std::size_t n = 0; n < count; ++n) {
        PlantedExample ex;
        ex.gold = gold_dist(rng);
        auto& eg = ex.graph;
        eg.question = "planted question " + std::to_string(n);
        for (std::size_t k = 0; k < cfg.options; ++k) eg.options.push_back("choice " + std::to_string(k));
        eg.node_type_count = role_type_count(cfg.options);
        for (std::size_t r = 0; r < cfg.relation_types; ++r) eg.relation_names.push_back("rel" + std::to_string(r));

        struct Proto {
            std::string label;
            std::uint32_t type;
            double relevance;
        };
        std::vector<Proto> protos;
        for (std::size_t k = 0; k < cfg.options; ++k) {
            protos.push_back({"answer_" + std::to_string(k),
                              static_cast<std::uint32_t>(NodeRole::kFirstOption) + static_cast<std::uint32_t>(k), mid(rng)});
        }
        for (std::size_t q = 0; q < cfg.question_nodes; ++q) {
            protos.push_back({"question_" + std::to_string(q), static_cast<std::uint32_t>(NodeRole::kQuestion), mid(rng)});
        }
        for (std::size_t f = 0; f < cfg.filler_nodes; ++f) {
            protos.push_back({"filler_" + std::to_string(f), static_cast<std::uint32_t>(NodeRole::kOther), low(rng)});
        }
        protos.push_back({"signal_" + std::to_string(ex.gold),
                          static_cast<std::uint32_t>(NodeRole::kFirstOption) + static_cast<std::uint32_t>(ex.gold),
                          high(rng)});
        std::vector<std::uint32_t> perm(protos.size());
        std::iota(perm.begin(), perm.end(), 0u);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::uint32_t> where(protos.size());
        for (std::uint32_t pos = 0; pos < perm.size(); ++pos) {
            const auto& p = protos[perm[pos]];
            where[perm[pos]] = pos;
            eg.nodes.push_back({pos, p.label, p.type, p.relevance});
        }
        ex.signal_node = where.back();
        ex.context = random_context(rng, cfg.lm_dim);

        // Random spanning tree, the signal-answer link, then extra random edges.
        const auto total = static_cast<std::uint32_t>(protos.size());
        for (std::uint32_t v = 1; v < total; ++v) {
            std::uniform_int_distribution<std::uint32_t> parent(0, v - 1);
            eg.edges.push_back({v, parent(rng), relation(rng)});
        }
        eg.edges.push_back({ex.signal_node, where[ex.gold], relation(rng)});
        std::uniform_int_distribution<std::uint32_t> pick(0, total - 1);
        for (std::size_t e = 0; e < cfg.extra_edges; ++e) {
            auto a = pick(rng), b = pick(rng);
            if (a != b) eg.edges.push_back({a, b, relation(rng)});
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace xplain::synth
