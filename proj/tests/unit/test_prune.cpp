#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "../support.hpp"
#include "xplain/errors.hpp"
#include "xplain/prune.hpp"
#include "xplain/text.hpp"

using namespace xplain;
using xplain::testing::graph_from;

namespace {

double logit_of(double p) { return std::log(p / (1.0 - p)); }

QAContext qa(std::string q, std::vector<std::string> opts) { return {std::move(q), std::move(opts), {}}; }

// Independent re-implementation of the hash scorer for space-separated lowercase words.
struct HashScorerOracle {
    std::uint64_t seed;
    std::size_t dim;

    static std::uint64_t fnv(const std::string& s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
        return h;
    }
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double score(const std::string& words) const {
        std::vector<double> b(dim, 0.0);
        std::size_t start = 0;
        while (start < words.size()) {
            auto end = words.find(' ', start);
            if (end == std::string::npos) end = words.size();
            if (end > start) {
                auto h = fnv(words.substr(start, end - start));
                b[h % dim] += (h >> 63) ? -1.0 : 1.0;
            }
            start = end + 1;
        }
        long double logit = 0;
        for (std::size_t k = 0; k < dim; ++k) {
            double w = static_cast<double>(mix(seed + k) >> 11) / 9007199254740992.0 * 2.0 - 1.0;
            logit += b[k] * w;
        }
        return 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
    }
};

std::set<std::string> labels_of(const ElementGraph& eg) {
    std::set<std::string> out;
    for (const auto& n : eg.nodes) out.insert(n.label);
    return out;
}

}  // namespace

TEST_CASE("score_node: sigmoid of the scorer logit") {
    auto g = graph_from("isa\tcat\tanimal\n");
    auto q = qa("a cat", {"animal", "plant"});
    FunctionScorer zero([](std::string_view, const QAContext&) { return 0.0; });
    CHECK(score_node(g, 0, q, zero) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(score_node(g, 0, q, zero) == score_node(g, 1, q, zero));
    FunctionScorer bad([](std::string_view, const QAContext&) { return std::nan(""); });
    CHECK_THROWS_AS(score_node(g, 0, q, bad), NumericalError);
    FunctionScorer huge([](std::string_view, const QAContext&) { return 1e6; });
    double s = score_node(g, 0, q, huge);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
}

TEST_CASE("HashScorer agrees with an independent re-implementation") {
    auto g = graph_from("r\tapple\tfruit\nr\tbanana\tfruit\nr\tcar\tvehicle\n");
    auto q = qa("which one is a fruit", {"apple", "car"});
    HashScorer scorer(42, 64);
    HashScorerOracle oracle{42, 64};
    std::vector<std::pair<double, std::string>> mine, theirs;
    for (kg::NodeId id = 0; id < g.node_count(); ++id) {
        const auto& label = g.nodes()[id].label;
        double s = score_node(g, id, q, scorer);
        double o = oracle.score(label + " which one is a fruit apple car");
        CHECK(s == doctest::Approx(o).epsilon(1e-12));
        mine.emplace_back(-s, label);
        theirs.emplace_back(-o, label);
    }
    std::sort(mine.begin(), mine.end());
    std::sort(theirs.begin(), theirs.end());
    for (std::size_t i = 0; i < mine.size(); ++i) CHECK(mine[i].second == theirs[i].second);
}

TEST_CASE("prune_kg keeps the top-N of a scored pool with induced edges") {
    auto g = graph_from("r\ta\tb\nr\tb\tc\nr\tc\td\nr\td\te\nr\ta\te\nr\ta\tc\n");
    std::map<std::string, double> score{{"a", 0.9}, {"b", 0.7}, {"c", 0.6}, {"d", 0.2}, {"e", 0.1}};
    FunctionScorer scorer([&](std::string_view label, const QAContext&) { return logit_of(score.at(std::string(label))); });
    auto q = qa("what about a", {"b", "e"});

    PruneOptions opts;
    opts.max_nodes = 3;
    opts.hops = 2;
    auto eg = prune_kg(q, g, scorer, opts);
    CHECK(labels_of(eg) == std::set<std::string>{"a", "b", "c"});
    REQUIRE(eg.edges.size() == 3);  // a-b, b-c, a-c
    for (const auto& n : eg.nodes) CHECK(n.relevance == doctest::Approx(score.at(n.label)));
    CHECK(eg.node_type_count == 4);
    CHECK(eg.nodes[0].type == static_cast<std::uint32_t>(NodeRole::kQuestion));
    CHECK(eg.nodes[1].type == static_cast<std::uint32_t>(NodeRole::kFirstOption));

    opts.max_nodes = 200;
    auto all = prune_kg(q, g, scorer, opts);
    CHECK(all.nodes.size() == 5);
    CHECK(all.edges.size() == 6);
}

TEST_CASE("prune_kg errors") {
    auto g = graph_from("r\ta\tb\n");
    HashScorer scorer;
    CHECK_THROWS_AS(prune_kg(qa("nothing here", {"x", "y"}), g, scorer), NoSeedEntities);
    PruneOptions opts;
    opts.max_nodes = 0;
    CHECK_THROWS_AS(prune_kg(qa("a", {"b", "c"}), g, scorer, opts), ArgumentError);
    CHECK_THROWS_AS(prune_kg(qa("a", {"b"}), g, scorer), ArgumentError);
    CHECK_THROWS_AS(prune_kg(qa("a", {"b", "b"}), g, scorer), ArgumentError);
}

TEST_CASE("prune_kg equals the brute-force sort oracle on random graphs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        std::size_t n = 10 + rng() % 490;
        auto g = xplain::testing::random_graph(rng, n, n + rng() % (2 * n));
        std::uint64_t salt = rng();
        // Coarse score levels force ties so the id tie-break is exercised.
        FunctionScorer scorer([salt](std::string_view label, const QAContext&) {
            auto h = xplain::text::splitmix64(xplain::text::fnv1a64(label) ^ salt);
            return static_cast<double>(h % 7) - 3.0;
        });
        auto q = qa("n" + std::to_string(rng() % n) + " and n" + std::to_string(rng() % n),
                    {"n" + std::to_string(rng() % n), "zz"});
        PruneOptions opts;
        opts.max_nodes = 1 + rng() % 60;
        opts.hops = static_cast<int>(rng() % 3);
        auto eg = prune_kg(q, g, scorer, opts);

        std::vector<kg::NodeId> seeds;
        for (const auto& text : {q.question, q.options[0], q.options[1]}) {
            auto s = kg::ground_entities(text, g);
            seeds.insert(seeds.end(), s.begin(), s.end());
        }
        auto pool = kg::neighborhood(g, seeds, opts.hops);
        std::vector<std::pair<double, kg::NodeId>> scored;
        for (auto id : pool.nodes) scored.emplace_back(score_node(g, id, q, scorer), id);
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        std::size_t keep = std::min(opts.max_nodes, scored.size());
        std::set<kg::NodeId> expected;
        for (std::size_t i = 0; i < keep; ++i) expected.insert(scored[i].second);

        std::set<kg::NodeId> got;
        for (const auto& node : eg.nodes) got.insert(node.kg_id);
        REQUIRE(got == expected);
        CHECK(eg.nodes.size() == keep);

        double min_kept = 1.0, max_dropped = 0.0;
        for (std::size_t i = 0; i < scored.size(); ++i) {
            if (i < keep) min_kept = std::min(min_kept, scored[i].first);
            else max_dropped = std::max(max_dropped, scored[i].first);
        }
        CHECK(min_kept >= max_dropped);

        std::size_t induced = 0;
        for (const auto& e : g.edges()) induced += expected.count(e.src) && expected.count(e.dst);
        CHECK(eg.edges.size() == induced);
    }
}

TEST_CASE("prune_kg is deterministic, including with parallel scoring") {
    std::mt19937_64 rng(5);
    auto g = xplain::testing::random_graph(rng, 400, 1200);
    HashScorer scorer(9);
    auto q = qa("n1 n2 n3", {"n4", "n5"});
    PruneOptions opts;
    opts.max_nodes = 50;
    auto a = prune_kg(q, g, scorer, opts).to_json().dump();
    auto b = prune_kg(q, g, scorer, opts).to_json().dump();
    opts.threads = 4;
    auto c = prune_kg(q, g, scorer, opts).to_json().dump();
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("element graph file round trip") {
    xplain::testing::TempDir dir;
    auto g = graph_from("isa\tcat\tanimal\nisa\tdog\tanimal\nrelatedto\tcat\tdog\n");
    HashScorer scorer(1);
    auto eg = prune_kg(qa("is a cat an animal", {"dog", "animal"}), g, scorer);
    eg.save(dir / "eg.json");
    auto back = ElementGraph::load(dir / "eg.json");
    CHECK(back.to_json() == eg.to_json());
    xplain::testing::write_file(dir / "bad.json", "{\"version\": 1}");
    CHECK_THROWS_AS(ElementGraph::load(dir / "bad.json"), ParseError);
}
