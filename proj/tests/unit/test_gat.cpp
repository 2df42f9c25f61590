#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../support.hpp"
#include "xplain/errors.hpp"
#include "xplain/gat.hpp"
#include "xplain/synth.hpp"

using namespace xplain;
using namespace xplain::gat;

namespace {

GatConfig small_config(std::size_t options = 3, std::size_t relations = 2, std::uint64_t seed = 1) {
    GatConfig c;
    c.layers = 2;
    c.hidden = 6;
    c.node_types = role_type_count(options);
    c.relation_types = relations;
    c.lm_dim = 4;
    c.options = options;
    c.pool_size = 4;
    c.attention_dim = 5;
    c.message_dim = 7;
    c.head_hidden = 5;
    c.dropout = 0.2;
    c.seed = seed;
    return c;
}

// Randomizes every parameter (including biases) so no term is trivially zero.
void randomize(GatModel& m, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& p : m.parameters()) p = u(rng);
}

struct Toy {
    ElementGraph graph;
    Vector context;
};

Toy toy(std::uint64_t seed, std::size_t nodes, std::size_t edges, const GatConfig& cfg) {
    std::mt19937_64 rng(seed);
    Toy t;
    t.graph = synth::random_element_graph(rng, nodes, edges, cfg.options, cfg.relation_types);
    t.context = synth::random_context(rng, cfg.lm_dim, 0.5);
    return t;
}

// ---------------------------------------------------------------------------
// Scalar-loop reference implementation of the whole network.

struct Neighbor {
    std::uint32_t node;
    std::uint32_t relation;
};

struct NaiveResult {
    std::vector<std::vector<std::vector<double>>> alpha;  // [layer][target][k]
    std::vector<std::vector<double>> h;                   // final states [node][d]
    std::vector<double> mass;
    std::vector<double> probs;
};

double at(const GatModel& m, const std::string& block, std::size_t r, std::size_t c) {
    return m.view(block)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

double ramp(double x) { return x > 0 ? x : 0; }

NaiveResult naive_forward(const GatModel& m, const ElementGraph& eg, const Vector& ctx, std::size_t layers_to_run) {
    const auto& cfg = m.config();
    const std::size_t N = eg.nodes.size(), D = cfg.hidden, T = cfg.node_types, R = cfg.relation_types;
    const std::size_t Da = cfg.att_dim(), Dm = cfg.msg_dim(), Dr = cfg.rel_dim();
    std::vector<std::vector<Neighbor>> nbrs(N);
    for (const auto& e : eg.edges) {
        nbrs[e.src].push_back({e.dst, e.relation});
        if (e.src != e.dst) nbrs[e.dst].push_back({e.src, e.relation + static_cast<std::uint32_t>(R)});
    }
    std::vector<std::vector<double>> h(N, std::vector<double>(D));
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t d = 0; d < D; ++d) {
            h[i][d] = at(m, "in_w", d, eg.nodes[i].type) + at(m, "in_w", d, T) * eg.nodes[i].relevance + at(m, "in_b", d, 0);
        }
    }
    NaiveResult out;
    for (std::size_t l = 0; l < layers_to_run; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        std::vector<std::vector<double>> next = h;
        std::vector<std::vector<double>> layer_alpha(N);
        for (std::size_t i = 0; i < N; ++i) {
            if (nbrs[i].empty()) continue;
            std::vector<long double> logits;
            for (const auto& nb : nbrs[i]) {
                long double s = 0;
                for (std::size_t k = 0; k < Da; ++k) {
                    long double pre = at(m, p + "att_c", k, 0);
                    for (std::size_t d = 0; d < D; ++d) {
                        pre += at(m, p + "att_a1", k, d) * h[i][d] + at(m, p + "att_a2", k, d) * h[nb.node][d];
                    }
                    s += at(m, p + "att_v", k, 0) * std::tanh(pre);
                }
                logits.push_back(s);
            }
            long double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
            for (auto& x : logits) z += (x = std::exp(x - mx));
            std::vector<double> msg(D, 0.0);
            for (std::size_t k = 0; k < nbrs[i].size(); ++k) {
                const auto& nb = nbrs[i][k];
                double alpha = static_cast<double>(logits[k] / z);
                layer_alpha[i].push_back(alpha);
                std::vector<double> r(Dr);
                for (std::size_t q = 0; q < Dr; ++q) {
                    r[q] = std::tanh(at(m, "rel_w", q, nb.relation) + at(m, "rel_w", q, 2 * R + eg.nodes[i].type) +
                                     at(m, "rel_w", q, 2 * R + T + eg.nodes[nb.node].type) + at(m, "rel_b", q, 0));
                }
                std::vector<double> a(Dm);
                for (std::size_t u = 0; u < Dm; ++u) {
                    double g = at(m, p + "msg_b1", u, 0) + at(m, p + "msg_w1", u, D + eg.nodes[i].type);
                    for (std::size_t d = 0; d < D; ++d) g += at(m, p + "msg_w1", u, d) * h[nb.node][d];
                    for (std::size_t q = 0; q < Dr; ++q) g += at(m, p + "msg_w1", u, D + T + q) * r[q];
                    a[u] = ramp(g);
                }
                std::vector<double> fm(D);
                for (std::size_t d = 0; d < D; ++d) {
                    fm[d] = at(m, p + "msg_b2", d, 0);
                    for (std::size_t u = 0; u < Dm; ++u) fm[d] += at(m, p + "msg_w2", d, u) * a[u];
                }
                for (std::size_t d = 0; d < D; ++d) {
                    double y = 0;
                    for (std::size_t d2 = 0; d2 < D; ++d2) y += at(m, p + "w", d, d2) * fm[d2];
                    msg[d] += alpha * y;
                }
            }
            for (std::size_t d = 0; d < D; ++d) next[i][d] = ramp(msg[d]) + h[i][d];
        }
        out.alpha.push_back(std::move(layer_alpha));
        h = std::move(next);
    }
    out.h = h;
    if (layers_to_run < cfg.layers) return out;

    out.mass.assign(N, 0.0);
    std::size_t targets = 0;
    for (std::size_t i = 0; i < N; ++i) {
        if (nbrs[i].empty()) continue;
        ++targets;
        for (std::size_t k = 0; k < nbrs[i].size(); ++k) out.mass[nbrs[i][k].node] += out.alpha.back()[i][k];
    }
    for (auto& x : out.mass) x = targets ? x / static_cast<double>(targets) : 1.0 / static_cast<double>(N);
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return out.mass[a] > out.mass[b]; });
    std::vector<double> x(ctx.begin(), ctx.end());
    for (std::size_t d = 0; d < D; ++d) {
        double s = 0;
        for (std::size_t i = 0; i < N; ++i) s += out.mass[i] * h[i][d];
        x.push_back(s);
    }
    for (std::size_t r = 0; r < cfg.pool_size; ++r) x.push_back(r < N ? out.mass[order[r]] : 0.0);
    std::vector<double> hid(cfg.head_dim());
    for (std::size_t u = 0; u < hid.size(); ++u) {
        double s = at(m, "head_b1", u, 0);
        for (std::size_t k = 0; k < x.size(); ++k) s += at(m, "head_w1", u, k) * x[k];
        hid[u] = ramp(s);
    }
    std::vector<long double> logits(cfg.options);
    for (std::size_t o = 0; o < cfg.options; ++o) {
        long double s = at(m, "head_b2", o, 0);
        for (std::size_t u = 0; u < hid.size(); ++u) s += at(m, "head_w2", o, u) * hid[u];
        logits[o] = s;
    }
    long double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
    for (auto& v : logits) z += (v = std::exp(v - mx));
    for (auto v : logits) out.probs.push_back(static_cast<double>(v / z));
    return out;
}

}  // namespace

TEST_CASE("relation_embed") {
    auto cfg = small_config(2, 2);
    GatModel zero(cfg);
    std::fill(zero.parameters().begin(), zero.parameters().end(), 0.0);
    for (std::uint32_t r = 0; r < 4; ++r) CHECK(zero.relation_embed(1, 2, r).isZero(0.0));

    GatModel m(cfg);
    randomize(m, 3);
    auto forward = m.relation_embed(1, 3, 0);
    auto swapped = m.relation_embed(3, 1, 0);
    CHECK((forward - swapped).norm() > 1e-6);

    CHECK_THROWS_AS(m.relation_embed(9, 0, 0), ArgumentError);
    CHECK_THROWS_AS(m.relation_embed(0, 0, 4), ArgumentError);

    // One relation type and one node type: every edge gets the same embedding.
    GatConfig single = cfg;
    single.node_types = 1;
    single.relation_types = 1;
    GatModel s(single);
    randomize(s, 4);
    CHECK(s.relation_embed(0, 0, 0) == s.relation_embed(0, 0, 0));
}

TEST_CASE("attention_layer: single neighbor, symmetric pair, three-logit softmax") {
    auto cfg = small_config(2, 1);
    cfg.hidden = 2;
    cfg.attention_dim = 1;
    GatModel m(cfg);
    std::fill(m.parameters().begin(), m.parameters().end(), 0.0);
    m.view("layer0.att_a2")(0, 0) = 1.0;
    m.view("layer0.att_v")(0, 0) = 4.0;

    ElementGraph eg;
    eg.options = {"x", "y"};
    eg.node_type_count = cfg.node_types;
    eg.relation_names = {"r"};
    for (std::uint32_t i = 0; i < 4; ++i) eg.nodes.push_back({i, "n" + std::to_string(i), 0, 0.5});
    eg.edges = {{0, 1, 0}, {0, 2, 0}, {0, 3, 0}};
    auto in = GatInput::build(eg, Vector(cfg.lm_dim, 0.0), cfg.relation_types);

    // v * tanh(h_j[0]) = 1, 2, 3 for neighbors 1, 2, 3.
    MatrixXd h = MatrixXd::Zero(2, 4);
    h(0, 1) = std::atanh(0.25);
    h(0, 2) = std::atanh(0.5);
    h(0, 3) = std::atanh(0.75);
    auto alpha = m.attention_layer(h, in, 0);
    long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
    std::vector<double> expected = {static_cast<double>(std::exp(1.0L) / z), static_cast<double>(std::exp(2.0L) / z),
                                    static_cast<double>(std::exp(3.0L) / z)};
    REQUIRE(in.row_offsets[1] == 3);
    for (int k = 0; k < 3; ++k) CHECK(alpha[k] == doctest::Approx(expected[k]).epsilon(1e-12));
    // Leaves each see the hub only.
    for (std::size_t e = 3; e < alpha.size(); ++e) CHECK(alpha[e] == 1.0);

    // Two neighbors with identical states split attention evenly.
    h(0, 2) = h(0, 1);
    eg.edges = {{0, 1, 0}, {0, 2, 0}};
    auto in2 = GatInput::build(eg, Vector(cfg.lm_dim, 0.0), cfg.relation_types);
    auto alpha2 = m.attention_layer(h, in2, 0);
    CHECK(alpha2[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(alpha2[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("layer_forward: residual identity when W = 0") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto cfg = small_config(3, 2, trial);
        GatModel m(cfg);
        randomize(m, trial + 100);
        for (std::size_t l = 0; l < cfg.layers; ++l) m.view("layer" + std::to_string(l) + ".w").setZero();
        auto t = toy(trial, 3 + rng() % 10, rng() % 20, cfg);
        auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
        MatrixXd h = m.initial_states(in);
        MatrixXd out = m.layer_forward(h, in, 0);
        CHECK(out.rows() == h.rows());
        CHECK(out.cols() == h.cols());
        CHECK((out.array() == h.array()).all());
    }
}

TEST_CASE("layer_forward matches the scalar-loop reference on a 3-node path") {
    auto cfg = small_config(3, 2, 5);
    GatModel m(cfg);
    randomize(m, 55);
    ElementGraph eg;
    eg.options = {"a", "b", "c"};
    eg.node_type_count = cfg.node_types;
    eg.relation_names = {"r0", "r1"};
    eg.nodes = {{0, "x", 1, 0.3}, {1, "y", 2, 0.8}, {2, "z", 0, 0.6}};
    eg.edges = {{0, 1, 0}, {1, 2, 1}};
    Vector ctx(cfg.lm_dim, 0.1);
    auto in = GatInput::build(eg, ctx, cfg.relation_types);
    MatrixXd h0 = m.initial_states(in);
    MatrixXd h1 = m.layer_forward(h0, in, 0);
    auto ref = naive_forward(m, eg, ctx, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t d = 0; d < cfg.hidden; ++d) {
            CHECK(h1(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) == doctest::Approx(ref.h[i][d]).epsilon(1e-10));
        }
    }
}

TEST_CASE("forward agrees with the scalar-loop reference on random toys") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto cfg = small_config(5, 3, seed);
        cfg.layers = 3;
        GatModel m(cfg);
        randomize(m, seed + 7, 0.4);
        auto t = toy(seed, 4 + seed, 3 + 2 * seed, cfg);
        auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
        auto res = m.forward(in);
        auto ref = naive_forward(m, t.graph, t.context, cfg.layers);
        for (std::size_t o = 0; o < cfg.options; ++o) {
            CHECK(std::abs(res.answer.probabilities[o] - ref.probs[o]) < 1e-8);
        }
        for (std::size_t i = 0; i < t.graph.nodes.size(); ++i) CHECK(std::abs(res.node_mass[i] - ref.mass[i]) < 1e-10);
        // Attention per target in construction order.
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            for (std::uint32_t i = 0; i < in.node_count; ++i) {
                std::size_t k = 0;
                for (auto e = in.row_offsets[i]; e < in.row_offsets[i + 1]; ++e, ++k) {
                    CHECK(std::abs(res.attention.alpha[l][e] - ref.alpha[l][i][k]) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("forward: distribution invariants") {
    auto cfg = small_config(5, 2, 3);
    GatModel m(cfg);
    randomize(m, 8);
    auto t = toy(3, 9, 14, cfg);
    auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
    auto a = m.forward(in);
    auto b = m.forward(in);
    CHECK(a.answer.probabilities == b.answer.probabilities);
    CHECK(a.states.h.back() == b.states.h.back());
    double sum = std::accumulate(a.answer.probabilities.begin(), a.answer.probabilities.end(), 0.0);
    CHECK(std::abs(sum - 1.0) < 1e-9);
    for (double p : a.answer.probabilities) CHECK(p > 0.0);

    // Adding a constant to every logit keeps the argmax.
    GatModel shifted = m;
    shifted.view("head_b2").array() += 3.5;
    CHECK(shifted.forward(in).answer.predicted == a.answer.predicted);

    // An answer head that ignores its input yields the uniform distribution.
    GatModel flat = m;
    flat.view("head_w2").setZero();
    flat.view("head_b2").setZero();
    for (double p : flat.forward(in).answer.probabilities) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

    // Option-count mismatch with the answer head.
    auto cfg3 = small_config(3, 2, 3);
    GatModel three(cfg3);
    CHECK_THROWS_AS(three.forward(in), ConfigurationError);
}

TEST_CASE("attention rows sum to one for every node with neighbors") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto cfg = small_config(4, 3, seed);
        cfg.layers = 5;
        GatModel m(cfg);
        randomize(m, seed * 31 + 1, 1.5);
        auto t = toy(seed, 5 + seed % 20, 30, cfg);
        auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
        auto res = m.forward(in);
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            for (std::uint32_t i = 0; i < in.node_count; ++i) {
                if (in.row_offsets[i + 1] == in.row_offsets[i]) continue;
                CHECK(std::abs(res.attention.row_sum(l, i) - 1.0) < 1e-6);
                for (auto e = in.row_offsets[i]; e < in.row_offsets[i + 1]; ++e) {
                    CHECK(res.attention.alpha[l][e] >= 0.0);
                    CHECK(res.attention.alpha[l][e] <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("extract_reason_elements") {
    auto cfg = small_config(2, 1, 2);
    GatModel m(cfg);
    randomize(m, 4);

    SUBCASE("star graph: hub collects the most mass") {
        ElementGraph eg;
        eg.options = {"a", "b"};
        eg.node_type_count = cfg.node_types;
        eg.relation_names = {"r"};
        for (std::uint32_t i = 0; i < 6; ++i) eg.nodes.push_back({i, "n" + std::to_string(i), 0, 0.5});
        for (std::uint32_t leaf = 0; leaf < 6; ++leaf) {
            if (leaf != 3) eg.edges.push_back({3, leaf, 0});
        }
        auto in = GatInput::build(eg, Vector(cfg.lm_dim, 0.0), 1);
        auto res = m.forward(in);
        auto re = extract_reason_elements(res.attention, eg, 50);
        REQUIRE(re.ranked.size() == 6);
        CHECK(re.ranked[0].label == "n3");
        double total = 0;
        for (const auto& r : re.ranked) total += r.mass;
        CHECK(std::abs(total - 1.0) < 1e-12);
    }

    SUBCASE("uniform attention on a cycle: equal masses, id order") {
        GatModel flat = m;
        for (std::size_t l = 0; l < cfg.layers; ++l) flat.view("layer" + std::to_string(l) + ".att_v").setZero();
        ElementGraph eg;
        eg.options = {"a", "b"};
        eg.node_type_count = cfg.node_types;
        eg.relation_names = {"r"};
        for (std::uint32_t i = 0; i < 7; ++i) eg.nodes.push_back({i, "c" + std::to_string(i), 0, 0.5});
        for (std::uint32_t i = 0; i < 7; ++i) eg.edges.push_back({i, (i + 1) % 7, 0});
        auto in = GatInput::build(eg, Vector(cfg.lm_dim, 0.0), 1);
        auto re = extract_reason_elements(flat.forward(in).attention, eg, 5);
        REQUIRE(re.ranked.size() == 5);
        for (std::uint32_t k = 0; k < 5; ++k) {
            CHECK(re.ranked[k].node == k);
            CHECK(re.ranked[k].mass == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
        }
    }

    SUBCASE("seeded graphs match per-edge summation") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(seed);
            auto eg = synth::random_element_graph(rng, 10 + seed * 4, 25 + seed * 6, 2, 1);
            auto in = GatInput::build(eg, Vector(cfg.lm_dim, 0.0), 1);
            auto res = m.forward(in);
            std::vector<double> mass(eg.nodes.size(), 0.0);
            std::vector<char> has(eg.nodes.size(), 0);
            const auto& last = res.attention.alpha.back();
            for (std::size_t e = 0; e < in.edges.size(); ++e) {
                mass[in.edges[e].source] += last[e];
                has[in.edges[e].target] = 1;
            }
            double targets = std::accumulate(has.begin(), has.end(), 0.0);
            for (auto& x : mass) x /= targets;
            std::vector<std::uint32_t> order(mass.size());
            std::iota(order.begin(), order.end(), 0u);
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return mass[a] != mass[b] ? mass[a] > mass[b] : a < b; });
            auto re = extract_reason_elements(res.attention, eg, 50);
            REQUIRE(re.ranked.size() == std::min<std::size_t>(50, eg.nodes.size()));
            double total = 0;
            for (std::size_t r = 0; r < re.ranked.size(); ++r) {
                CHECK(re.ranked[r].node == order[r]);
                CHECK(re.ranked[r].mass == doctest::Approx(mass[order[r]]).epsilon(1e-12));
                total += re.ranked[r].mass;
            }
            if (re.ranked.size() == eg.nodes.size()) CHECK(std::abs(total - 1.0) < 1e-6);
            CHECK(re.top(5).size() == 5);
            CHECK(re.top(5)[0] == re.ranked[0].label);
        }
    }

    SUBCASE("edgeless graph gets uniform mass; empty graph is an error") {
        ElementGraph eg;
        eg.options = {"a", "b"};
        eg.node_type_count = cfg.node_types;
        eg.relation_names = {"r"};
        eg.nodes = {{0, "p", 0, 0.5}, {1, "q", 0, 0.5}};
        auto in = GatInput::build(eg, Vector(cfg.lm_dim, 0.0), 1);
        auto re = extract_reason_elements(m.forward(in).attention, eg, 50);
        CHECK(re.ranked[0].mass == 0.5);
        CHECK(re.ranked[0].label == "p");
        ElementGraph empty;
        CHECK_THROWS_AS(extract_reason_elements(AttentionMap{}, empty, 5), ArgumentError);
    }
}

TEST_CASE("grad_check: analytic gradients match central differences") {
    auto cfg = small_config(3, 2, 9);
    GatModel m(cfg);
    randomize(m, 99, 0.5);
    auto t = toy(4, 6, 9, cfg);
    auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
    auto res = grad_check(m, in, 1, 1e-5, 400, 3);
    INFO("worst index " << res.worst_index << " analytic " << res.worst_analytic << " numeric " << res.worst_numeric);
    CHECK(res.checked == 400);
    CHECK(res.max_relative_error < 1e-4);
}

TEST_CASE("grad_check: constant-loss head gives zero graph gradients") {
    auto cfg = small_config(3, 2, 9);
    GatModel m(cfg);
    randomize(m, 5);
    m.view("head_w1").setZero();
    m.view("head_b1").setConstant(-1.0);
    auto t = toy(2, 6, 8, cfg);
    auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
    std::vector<double> grad;
    m.loss_and_gradient(in, 0, grad);
    const auto& b2 = m.block("head_b2");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (i >= b2.offset && i < b2.offset + b2.size()) continue;
        CHECK(std::abs(grad[i]) <= 1e-10);
    }
    CHECK(grad_check(m, in, 0, 1e-5, 200, 1).max_relative_error < 1e-4);
}

TEST_CASE("grad_check: linear model matches the closed-form softmax-regression gradient") {
    auto cfg = small_config(3, 2, 4);
    cfg.activation = Activation::kIdentity;
    GatModel m(cfg);
    randomize(m, 21);
    for (std::size_t l = 0; l < cfg.layers; ++l) m.view("layer" + std::to_string(l) + ".att_v").setZero();
    auto t = toy(6, 7, 10, cfg);
    auto in = GatInput::build(t.graph, t.context, cfg.relation_types);
    const std::size_t gold = 2;
    std::vector<double> grad;
    AnswerDistribution ans;
    m.loss_and_gradient(in, gold, grad, nullptr, &ans);

    // Head input x, hidden = W1 x + b1 (identity activation), logits = W2 hidden + b2.
    auto fwd = m.forward(in);
    VectorXd x(cfg.lm_dim + cfg.hidden + cfg.pool_size);
    x.setZero();
    for (std::size_t k = 0; k < cfg.lm_dim; ++k) x(static_cast<Eigen::Index>(k)) = t.context[k];
    VectorXd mass = Eigen::Map<const VectorXd>(fwd.node_mass.data(), static_cast<Eigen::Index>(fwd.node_mass.size()));
    x.segment(static_cast<Eigen::Index>(cfg.lm_dim), static_cast<Eigen::Index>(cfg.hidden)) = fwd.states.h.back() * mass;
    std::vector<double> sorted = fwd.node_mass;
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t r = 0; r < cfg.pool_size && r < sorted.size(); ++r) {
        x(static_cast<Eigen::Index>(cfg.lm_dim + cfg.hidden + r)) = sorted[r];
    }
    VectorXd hidden = m.view("head_w1") * x + m.view("head_b1");
    VectorXd residual = Eigen::Map<const VectorXd>(ans.probabilities.data(), static_cast<Eigen::Index>(cfg.options));
    residual(gold) -= 1.0;
    MatrixXd expected_w2 = residual * hidden.transpose();
    MatrixXd expected_w1 = (m.view("head_w2").transpose() * residual) * x.transpose();

    const auto& bw2 = m.block("head_w2");
    const auto& bw1 = m.block("head_w1");
    const auto& bb2 = m.block("head_b2");
    Eigen::Map<const MatrixXd> got_w2(grad.data() + bw2.offset, static_cast<Eigen::Index>(bw2.rows), static_cast<Eigen::Index>(bw2.cols));
    Eigen::Map<const MatrixXd> got_w1(grad.data() + bw1.offset, static_cast<Eigen::Index>(bw1.rows), static_cast<Eigen::Index>(bw1.cols));
    Eigen::Map<const VectorXd> got_b2(grad.data() + bb2.offset, static_cast<Eigen::Index>(bb2.rows));
    CHECK((got_w2 - expected_w2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got_w1 - expected_w1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got_b2 - residual).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("train: zero epochs leaves parameters unchanged and reports the initial loss") {
    auto cfg = small_config(4, 3, 2);
    GatModel m(cfg);
    synth::PlantedConfig pc;
    pc.lm_dim = cfg.lm_dim;
    auto planted = synth::planted_signal(10, 3, pc);
    std::vector<TrainExample> data;
    double expected = 0;
    for (const auto& ex : planted) {
        data.push_back({GatInput::build(ex.graph, ex.context, cfg.relation_types), ex.gold});
        expected += m.loss(data.back().input, ex.gold);
    }
    auto before = m.parameters();
    TrainHyper hyper;
    hyper.epochs = 0;
    auto res = train(m, data, hyper);
    CHECK(m.parameters() == before);
    CHECK(res.epochs.empty());
    CHECK(res.initial_loss == doctest::Approx(expected / 10.0).epsilon(1e-12));
    CHECK_THROWS_AS(train(m, {}, hyper), ArgumentError);
}

TEST_CASE("train is deterministic under a fixed seed and reduces the loss") {
    auto cfg = small_config(4, 3, 2);
    synth::PlantedConfig pc;
    pc.lm_dim = cfg.lm_dim;
    auto planted = synth::planted_signal(40, 8, pc);
    std::vector<TrainExample> data;
    for (const auto& ex : planted) data.push_back({GatInput::build(ex.graph, ex.context, cfg.relation_types), ex.gold});
    TrainHyper hyper;
    hyper.epochs = 15;
    hyper.batch_size = 8;
    hyper.learning_rate = 1e-2;
    hyper.seed = 77;
    GatModel a(cfg), b(cfg);
    auto ra = train(a, data, hyper);
    auto rb = train(b, data, hyper);
    CHECK(a.parameters() == b.parameters());
    REQUIRE(ra.epochs.size() == 15);
    CHECK(ra.epochs.back().train_loss == rb.epochs.back().train_loss);
    CHECK(ra.epochs.back().train_loss < ra.initial_loss);
}

TEST_CASE("checkpoint round trip") {
    xplain::testing::TempDir dir;
    auto cfg = small_config(5, 2, 12);
    GatModel m(cfg);
    randomize(m, 12);
    m.save(dir / "m.ckpt");
    auto back = GatModel::load(dir / "m.ckpt");
    CHECK(back.parameters() == m.parameters());
    CHECK(back.config().hidden == cfg.hidden);
    CHECK(back.config().pool_size == cfg.pool_size);
    CHECK(back.config().seed == cfg.seed);
    xplain::testing::write_file(dir / "bad.ckpt", "XGAT");
    CHECK_THROWS_AS(GatModel::load(dir / "bad.ckpt"), ParseError);
}
