#include "xplain/gat.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "xplain/errors.hpp"
#include "xplain/optim.hpp"
#include "xplain/text.hpp"

namespace xplain::gat {

namespace {

using Eigen::Map;

inline double act(Activation a, double x) { return (a == Activation::kRamp && x < 0.0) ? 0.0 : x; }
inline double act_grad(Activation a, double x) { return (a == Activation::kRamp && x <= 0.0) ? 0.0 : 1.0; }

MatrixXd apply(Activation a, const MatrixXd& m) {
    if (a == Activation::kIdentity) return m;
    return m.cwiseMax(0.0);
}

MatrixXd apply_grad(Activation a, const MatrixXd& pre) {
    if (a == Activation::kIdentity) return MatrixXd::Ones(pre.rows(), pre.cols());
    return (pre.array() > 0.0).cast<double>().matrix();
}

void softmax_inplace(std::span<double> xs) {
    if (xs.empty()) return;
    double mx = *std::max_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double& x : xs) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : xs) x /= sum;
}

void check_finite(const MatrixXd& m, const std::string& where) {
    if (!m.allFinite()) throw NumericalError("non-finite values in " + where);
}

// Ranks nodes by mass descending, lower index first on ties.
std::vector<std::uint32_t> rank_by_mass(const std::vector<double>& mass) {
    std::vector<std::uint32_t> order(mass.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return mass[a] > mass[b]; });
    return order;
}

std::string activation_name(Activation a) { return a == Activation::kRamp ? "ramp" : "identity"; }

Activation activation_from(const std::string& s) {
    if (s == "ramp") return Activation::kRamp;
    if (s == "identity") return Activation::kIdentity;
    throw ParseError("unknown activation: " + s);
}

constexpr std::array<char, 4> kMagic = {'X', 'G', 'A', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t example_seed(std::uint64_t seed, std::size_t epoch, std::size_t index) {
    std::uint64_t x = text::splitmix64(seed ^ 0xD1B54A32D192ED03ULL);
    x = text::splitmix64(x ^ static_cast<std::uint64_t>(epoch));
    return text::splitmix64(x ^ static_cast<std::uint64_t>(index));
}

}  // namespace

void GatConfig::validate() const {
    if (layers < 1) throw ConfigurationError("GAT needs at least one layer");
    if (hidden < 1 || node_types < 1 || relation_types < 1 || options < 1 || pool_size < 1) {
        throw ConfigurationError("GAT dimensions must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigurationError("dropout must be in [0, 1)");
}

GatInput GatInput::build(const ElementGraph& eg, const Vector& context_embedding, std::size_t relation_types) {
    GatInput in;
    in.node_count = eg.nodes.size();
    for (const auto& n : eg.nodes) {
        in.node_types.push_back(n.type);
        in.relevance.push_back(n.relevance);
    }
    const auto R = static_cast<std::uint32_t>(relation_types);
    std::vector<MessageEdge> edges;
    for (const auto& e : eg.edges) {
        if (e.relation >= R) throw ConfigurationError("relation index exceeds the model's relation-type count");
        edges.push_back({e.src, e.dst, e.relation, 0});
        if (e.src != e.dst) edges.push_back({e.dst, e.src, e.relation + R, 0});
    }
    std::stable_sort(edges.begin(), edges.end(),
                     [](const MessageEdge& a, const MessageEdge& b) { return a.target < b.target; });
    for (auto& e : edges) {
        RelationKey key{e.relation, in.node_types[e.target], in.node_types[e.source]};
        auto it = std::find(in.relation_keys.begin(), in.relation_keys.end(), key);
        if (it == in.relation_keys.end()) {
            e.key = static_cast<std::uint32_t>(in.relation_keys.size());
            in.relation_keys.push_back(key);
        } else {
            e.key = static_cast<std::uint32_t>(it - in.relation_keys.begin());
        }
    }
    in.row_offsets.assign(in.node_count + 1, 0);
    for (const auto& e : edges) ++in.row_offsets[e.target + 1];
    for (std::size_t i = 1; i < in.row_offsets.size(); ++i) in.row_offsets[i] += in.row_offsets[i - 1];
    in.edges = std::move(edges);
    in.context = Eigen::Map<const VectorXd>(context_embedding.data(), static_cast<Eigen::Index>(context_embedding.size()));
    in.option_count = eg.options.size();
    return in;
}

double AttentionMap::row_sum(std::size_t layer, std::uint32_t node) const {
    double s = 0.0;
    for (auto e = row_offsets.at(node); e < row_offsets.at(node + 1); ++e) s += alpha.at(layer)[e];
    return s;
}

std::vector<std::string> ReasonElements::labels() const {
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(r.label);
    return out;
}

std::vector<std::string> ReasonElements::top(std::size_t k) const {
    auto all = labels();
    if (all.size() > k) all.resize(k);
    return all;
}

std::vector<double> node_attention_mass(const AttentionMap& att, std::size_t node_count) {
    if (node_count == 0) throw ArgumentError("empty graph has no attention mass");
    std::vector<double> mass(node_count, 0.0);
    if (att.alpha.empty()) throw ArgumentError("attention map has no layers");
    const auto& last = att.alpha.back();
    std::size_t targets = 0;
    for (std::size_t i = 0; i < node_count; ++i) {
        if (att.row_offsets[i + 1] > att.row_offsets[i]) ++targets;
    }
    if (targets == 0) {
        std::fill(mass.begin(), mass.end(), 1.0 / static_cast<double>(node_count));
        return mass;
    }
    for (std::size_t e = 0; e < att.edges.size(); ++e) mass[att.edges[e].source] += last[e];
    for (double& m : mass) m /= static_cast<double>(targets);
    return mass;
}

ReasonElements extract_reason_elements(const AttentionMap& att, const ElementGraph& eg, std::size_t n) {
    if (eg.nodes.empty()) throw ArgumentError("cannot extract reason-elements from an empty graph");
    auto mass = node_attention_mass(att, eg.nodes.size());
    auto order = rank_by_mass(mass);
    ReasonElements out;
    for (std::size_t r = 0; r < std::min(n, order.size()); ++r) {
        auto i = order[r];
        out.ranked.push_back({eg.nodes[i].label, mass[i], i});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters

GatModel::GatModel(GatConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    layout();
    std::mt19937_64 rng(cfg_.seed);
    for (const auto& b : blocks_) {
        bool is_bias = b.cols == 1 && b.name.find("_v") == std::string::npos;
        if (is_bias) continue;
        double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t k = 0; k < b.size(); ++k) params_[b.offset + k] = dist(rng);
    }
}

void GatModel::layout() {
    blocks_.clear();
    layer_blocks_.clear();
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
        blocks_.push_back({std::move(name), rows, cols, offset});
        offset += rows * cols;
        return blocks_.size() - 1;
    };
    const std::size_t D = cfg_.hidden, T = cfg_.node_types, R2 = 2 * cfg_.relation_types;
    const std::size_t Da = cfg_.att_dim(), Dm = cfg_.msg_dim(), Dr = cfg_.rel_dim(), H = cfg_.head_dim();
    add("in_w", D, T + 1);
    add("in_b", D, 1);
    add("rel_w", Dr, R2 + 2 * T);
    add("rel_b", Dr, 1);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        auto p = "layer" + std::to_string(l) + ".";
        LayerBlocks lb{};
        lb.att_a1 = add(p + "att_a1", Da, D);
        lb.att_a2 = add(p + "att_a2", Da, D);
        lb.att_c = add(p + "att_c", Da, 1);
        lb.att_v = add(p + "att_v", Da, 1);
        lb.msg_w1 = add(p + "msg_w1", Dm, D + T + Dr);
        lb.msg_b1 = add(p + "msg_b1", Dm, 1);
        lb.msg_w2 = add(p + "msg_w2", D, Dm);
        lb.msg_b2 = add(p + "msg_b2", D, 1);
        lb.w = add(p + "w", D, D);
        layer_blocks_.push_back(lb);
    }
    add("head_w1", H, cfg_.lm_dim + D + cfg_.pool_size);
    add("head_b1", H, 1);
    add("head_w2", cfg_.options, H);
    add("head_b2", cfg_.options, 1);
    params_.assign(offset, 0.0);
}

const Block& GatModel::block(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw ArgumentError("unknown parameter block: " + name);
}

Eigen::Map<MatrixXd> GatModel::view(const std::string& name) {
    const auto& b = block(name);
    return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

Eigen::Map<const MatrixXd> GatModel::view(const std::string& name) const {
    const auto& b = block(name);
    return {params_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}

namespace {

template <typename Ptr>
auto map_block(Ptr base, const Block& b) {
    using Scalar = std::remove_pointer_t<Ptr>;
    using M = std::conditional_t<std::is_const_v<Scalar>, const MatrixXd, MatrixXd>;
    return Eigen::Map<M>(base + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
}

}  // namespace

VectorXd GatModel::relation_embed(std::uint32_t target_type, std::uint32_t source_type, std::uint32_t relation) const {
    const auto T = static_cast<std::uint32_t>(cfg_.node_types);
    const auto R2 = static_cast<std::uint32_t>(2 * cfg_.relation_types);
    if (target_type >= T || source_type >= T) throw ArgumentError("node type index out of range");
    if (relation >= R2) throw ArgumentError("relation index out of range");
    auto w = map_block(params_.data(), blocks_[2]);
    auto b = map_block(params_.data(), blocks_[3]);
    VectorXd pre = w.col(relation) + w.col(R2 + target_type) + w.col(R2 + T + source_type) + b.col(0);
    return pre.array().tanh().matrix();
}

MatrixXd GatModel::initial_states(const GatInput& in) const {
    const auto T = cfg_.node_types;
    auto w = map_block(params_.data(), blocks_[0]);
    auto b = map_block(params_.data(), blocks_[1]);
    MatrixXd h(cfg_.hidden, in.node_count);
    for (std::size_t i = 0; i < in.node_count; ++i) {
        if (in.node_types[i] >= T) throw ConfigurationError("element node type exceeds the model's node-type count");
        auto c = static_cast<Eigen::Index>(i);
        h.col(c) = w.col(in.node_types[i]) + w.col(static_cast<Eigen::Index>(T)) * in.relevance[i] + b.col(0);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct GatModel::Cache {
    struct Layer {
        MatrixXd t;                  // Da x E, tanh of attention pre-activation
        std::vector<double> alpha;   // E
        MatrixXd g;                  // Dm x E, message pre-activation
        MatrixXd agg;                // Dm x N, sum_e alpha_e act(g_e)
        MatrixXd f;                  // D x N, aggregated message MLP output
        MatrixXd z;                  // D x N, W f after dropout
        MatrixXd mask;               // D x N dropout scale; empty when inactive
    };
    std::vector<MatrixXd> h;
    MatrixXd rel;                    // Dr x |keys|
    std::vector<Layer> layers;
    std::vector<double> mass;
    bool uniform_mass = false;
    std::size_t targets = 0;
    std::vector<std::uint32_t> order;
    VectorXd x, head_pre, logits, probs;
};

void GatModel::run(const GatInput& in, std::mt19937_64* rng, Cache& c) const {
    const auto D = static_cast<Eigen::Index>(cfg_.hidden);
    const auto T = static_cast<Eigen::Index>(cfg_.node_types);
    const auto R2 = static_cast<Eigen::Index>(2 * cfg_.relation_types);
    const auto N = static_cast<Eigen::Index>(in.node_count);
    const auto E = in.edges.size();
    const Activation A = cfg_.activation;
    if (in.node_count == 0) throw ArgumentError("element graph is empty");
    if (static_cast<std::size_t>(in.context.size()) != cfg_.lm_dim) {
        throw ConfigurationError("context embedding has width " + std::to_string(in.context.size()) + ", model expects " +
                                 std::to_string(cfg_.lm_dim));
    }
    if (in.option_count != cfg_.options) {
        throw ConfigurationError("question has " + std::to_string(in.option_count) + " options, answer head expects " +
                                 std::to_string(cfg_.options));
    }
    const double* P = params_.data();

    c.h.assign(1, initial_states(in));
    // Relation embeddings, one per distinct (relation, target type, source type).
    {
        auto w = map_block(P, blocks_[2]);
        auto b = map_block(P, blocks_[3]);
        c.rel.resize(static_cast<Eigen::Index>(cfg_.rel_dim()), static_cast<Eigen::Index>(in.relation_keys.size()));
        for (std::size_t k = 0; k < in.relation_keys.size(); ++k) {
            const auto& key = in.relation_keys[k];
            if (key.relation >= R2) throw ConfigurationError("relation feature out of range");
            c.rel.col(static_cast<Eigen::Index>(k)) =
                (w.col(key.relation) + w.col(R2 + key.target_type) + w.col(R2 + T + key.source_type) + b.col(0))
                    .array()
                    .tanh()
                    .matrix();
        }
    }

    c.layers.assign(cfg_.layers, {});
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const auto& lb = layer_blocks_[l];
        const MatrixXd& h = c.h.back();
        auto& L = c.layers[l];
        auto a1 = map_block(P, blocks_[lb.att_a1]);
        auto a2 = map_block(P, blocks_[lb.att_a2]);
        auto ac = map_block(P, blocks_[lb.att_c]);
        auto av = map_block(P, blocks_[lb.att_v]);
        auto w1 = map_block(P, blocks_[lb.msg_w1]);
        auto b1 = map_block(P, blocks_[lb.msg_b1]);
        auto w2 = map_block(P, blocks_[lb.msg_w2]);
        auto b2 = map_block(P, blocks_[lb.msg_b2]);
        auto W = map_block(P, blocks_[lb.w]);

        MatrixXd p1 = a1 * h;
        MatrixXd p2 = a2 * h;
        L.t.resize(a1.rows(), static_cast<Eigen::Index>(E));
        L.alpha.resize(E);
        for (std::size_t e = 0; e < E; ++e) {
            const auto& me = in.edges[e];
            auto col = static_cast<Eigen::Index>(e);
            L.t.col(col) = (p1.col(me.target) + p2.col(me.source) + ac.col(0)).array().tanh().matrix();
            L.alpha[e] = av.col(0).dot(L.t.col(col));
        }
        for (Eigen::Index i = 0; i < N; ++i) {
            auto b = in.row_offsets[i], e = in.row_offsets[i + 1];
            softmax_inplace(std::span<double>(L.alpha.data() + b, e - b));
        }

        MatrixXd wh = w1.leftCols(D) * h;
        MatrixXd wr = w1.rightCols(static_cast<Eigen::Index>(cfg_.rel_dim())) * c.rel;
        auto wu = w1.middleCols(D, T);
        L.g.resize(w1.rows(), static_cast<Eigen::Index>(E));
        L.agg = MatrixXd::Zero(w1.rows(), N);
        for (std::size_t e = 0; e < E; ++e) {
            const auto& me = in.edges[e];
            auto col = static_cast<Eigen::Index>(e);
            L.g.col(col) = wh.col(me.source) + wu.col(in.node_types[me.target]) + wr.col(me.key) + b1.col(0);
            for (Eigen::Index r = 0; r < L.g.rows(); ++r) L.agg(r, me.target) += L.alpha[e] * act(A, L.g(r, col));
        }
        L.f = w2 * L.agg;
        for (Eigen::Index i = 0; i < N; ++i) {
            if (in.row_offsets[i + 1] > in.row_offsets[i]) L.f.col(i) += b2.col(0);
        }
        L.z = W * L.f;
        if (rng && cfg_.dropout > 0.0) {
            std::bernoulli_distribution keep(1.0 - cfg_.dropout);
            const double scale = 1.0 / (1.0 - cfg_.dropout);
            L.mask.resize(D, N);
            for (Eigen::Index k = 0; k < L.mask.size(); ++k) L.mask.data()[k] = keep(*rng) ? scale : 0.0;
            L.z = L.z.cwiseProduct(L.mask);
        } else {
            L.mask.resize(0, 0);
        }
        MatrixXd next = apply(A, L.z) + h;
        check_finite(next, "GAT layer " + std::to_string(l));
        c.h.push_back(std::move(next));
    }

    // Pool final states and attention for the answer head.
    const MatrixXd& hk = c.h.back();
    c.targets = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
        if (in.row_offsets[i + 1] > in.row_offsets[i]) ++c.targets;
    }
    c.mass.assign(in.node_count, 0.0);
    c.uniform_mass = c.targets == 0;
    if (c.uniform_mass) {
        std::fill(c.mass.begin(), c.mass.end(), 1.0 / static_cast<double>(N));
    } else {
        const auto& alpha = c.layers.back().alpha;
        for (std::size_t e = 0; e < E; ++e) c.mass[in.edges[e].source] += alpha[e];
        for (double& m : c.mass) m /= static_cast<double>(c.targets);
    }
    c.order = rank_by_mass(c.mass);
    Eigen::Map<const VectorXd> mass(c.mass.data(), N);
    const auto L = static_cast<Eigen::Index>(cfg_.lm_dim);
    const auto Pn = static_cast<Eigen::Index>(cfg_.pool_size);
    c.x = VectorXd::Zero(L + D + Pn);
    c.x.head(L) = in.context;
    c.x.segment(L, D) = hk * mass;
    for (Eigen::Index r = 0; r < std::min<Eigen::Index>(Pn, N); ++r) c.x(L + D + r) = c.mass[c.order[r]];

    std::size_t hb = blocks_.size() - 4;
    auto hw1 = map_block(P, blocks_[hb]);
    auto hb1 = map_block(P, blocks_[hb + 1]);
    auto hw2 = map_block(P, blocks_[hb + 2]);
    auto hb2 = map_block(P, blocks_[hb + 3]);
    c.head_pre = hw1 * c.x + hb1.col(0);
    c.logits = hw2 * apply(A, c.head_pre) + hb2.col(0);
    check_finite(c.logits, "answer head");
    c.probs = c.logits;
    softmax_inplace(std::span<double>(c.probs.data(), static_cast<std::size_t>(c.probs.size())));
}

void GatModel::backward(const GatInput& in, std::size_t gold, const Cache& c, std::vector<double>& grad) const {
    const auto D = static_cast<Eigen::Index>(cfg_.hidden);
    const auto T = static_cast<Eigen::Index>(cfg_.node_types);
    const auto R2 = static_cast<Eigen::Index>(2 * cfg_.relation_types);
    const auto N = static_cast<Eigen::Index>(in.node_count);
    const auto E = in.edges.size();
    const Activation A = cfg_.activation;
    const double* P = params_.data();
    double* G = grad.data();

    // Answer head.
    std::size_t hb = blocks_.size() - 4;
    auto hw1 = map_block(P, blocks_[hb]);
    auto hw2 = map_block(P, blocks_[hb + 2]);
    VectorXd dlogits = c.probs;
    dlogits(static_cast<Eigen::Index>(gold)) -= 1.0;
    VectorXd head_act = apply(A, c.head_pre);
    map_block(G, blocks_[hb + 2]) += dlogits * head_act.transpose();
    map_block(G, blocks_[hb + 3]).col(0) += dlogits;
    VectorXd dpre = (hw2.transpose() * dlogits).cwiseProduct(apply_grad(A, c.head_pre));
    map_block(G, blocks_[hb]) += dpre * c.x.transpose();
    map_block(G, blocks_[hb + 1]).col(0) += dpre;
    VectorXd dx = hw1.transpose() * dpre;

    const auto L = static_cast<Eigen::Index>(cfg_.lm_dim);
    const auto Pn = static_cast<Eigen::Index>(cfg_.pool_size);
    VectorXd dpooled = dx.segment(L, D);
    const MatrixXd& hk = c.h.back();
    Eigen::Map<const VectorXd> mass(c.mass.data(), N);
    MatrixXd dh = dpooled * mass.transpose();
    std::vector<double> extra_dalpha;
    if (!c.uniform_mass) {
        VectorXd dmass = hk.transpose() * dpooled;
        for (Eigen::Index r = 0; r < std::min<Eigen::Index>(Pn, N); ++r) dmass(c.order[r]) += dx(L + D + r);
        extra_dalpha.resize(E);
        for (std::size_t e = 0; e < E; ++e) {
            extra_dalpha[e] = dmass(in.edges[e].source) / static_cast<double>(c.targets);
        }
    }

    MatrixXd drel = MatrixXd::Zero(c.rel.rows(), c.rel.cols());
    for (std::size_t li = cfg_.layers; li-- > 0;) {
        const auto& lb = layer_blocks_[li];
        const auto& Lc = c.layers[li];
        const MatrixXd& h = c.h[li];
        auto a1 = map_block(P, blocks_[lb.att_a1]);
        auto a2 = map_block(P, blocks_[lb.att_a2]);
        auto av = map_block(P, blocks_[lb.att_v]);
        auto w1 = map_block(P, blocks_[lb.msg_w1]);
        auto w2 = map_block(P, blocks_[lb.msg_w2]);
        auto b2 = map_block(P, blocks_[lb.msg_b2]);
        auto W = map_block(P, blocks_[lb.w]);
        auto gw1 = map_block(G, blocks_[lb.msg_w1]);

        MatrixXd dh_in = dh;
        MatrixXd dz = dh.cwiseProduct(apply_grad(A, Lc.z));
        if (Lc.mask.size()) dz = dz.cwiseProduct(Lc.mask);
        map_block(G, blocks_[lb.w]) += dz * Lc.f.transpose();
        MatrixXd df = W.transpose() * dz;
        MatrixXd dagg = w2.transpose() * df;
        map_block(G, blocks_[lb.msg_w2]) += df * Lc.agg.transpose();
        {
            auto gb2 = map_block(G, blocks_[lb.msg_b2]);
            for (Eigen::Index i = 0; i < N; ++i) {
                if (in.row_offsets[i + 1] > in.row_offsets[i]) gb2.col(0) += df.col(i);
            }
        }

        const bool last = li + 1 == cfg_.layers;
        std::vector<double> dalpha(E, 0.0);
        MatrixXd dwh = MatrixXd::Zero(w1.rows(), N);
        MatrixXd dwr = MatrixXd::Zero(w1.rows(), c.rel.cols());
        auto gwu = gw1.middleCols(D, T);
        auto gb1 = map_block(G, blocks_[lb.msg_b1]);
        VectorXd a_e(w1.rows()), dg(w1.rows());
        for (std::size_t e = 0; e < E; ++e) {
            const auto& me = in.edges[e];
            auto col = static_cast<Eigen::Index>(e);
            for (Eigen::Index r = 0; r < a_e.size(); ++r) a_e(r) = act(A, Lc.g(r, col));
            dalpha[e] = dagg.col(me.target).dot(a_e) + df.col(me.target).dot(b2.col(0));
            if (last && !extra_dalpha.empty()) dalpha[e] += extra_dalpha[e];
            for (Eigen::Index r = 0; r < dg.size(); ++r) {
                dg(r) = Lc.alpha[e] * dagg(r, me.target) * act_grad(A, Lc.g(r, col));
            }
            dwh.col(me.source) += dg;
            gwu.col(in.node_types[me.target]) += dg;
            dwr.col(me.key) += dg;
            gb1.col(0) += dg;
        }
        gw1.leftCols(D) += dwh * h.transpose();
        dh_in += w1.leftCols(D).transpose() * dwh;
        const auto Dr = static_cast<Eigen::Index>(cfg_.rel_dim());
        gw1.rightCols(Dr) += dwr * c.rel.transpose();
        drel += w1.rightCols(Dr).transpose() * dwr;

        // Softmax and attention scorer.
        MatrixXd dp1 = MatrixXd::Zero(a1.rows(), N);
        MatrixXd dp2 = MatrixXd::Zero(a2.rows(), N);
        auto gv = map_block(G, blocks_[lb.att_v]);
        auto gc = map_block(G, blocks_[lb.att_c]);
        VectorXd dt(a1.rows());
        for (Eigen::Index i = 0; i < N; ++i) {
            auto b = in.row_offsets[i], e_end = in.row_offsets[i + 1];
            double s = 0.0;
            for (auto e = b; e < e_end; ++e) s += Lc.alpha[e] * dalpha[e];
            for (auto e = b; e < e_end; ++e) {
                double dlogit = Lc.alpha[e] * (dalpha[e] - s);
                auto col = static_cast<Eigen::Index>(e);
                gv.col(0) += dlogit * Lc.t.col(col);
                dt = (dlogit * av.col(0)).cwiseProduct((1.0 - Lc.t.col(col).array().square()).matrix());
                gc.col(0) += dt;
                dp1.col(i) += dt;
                dp2.col(in.edges[e].source) += dt;
            }
        }
        map_block(G, blocks_[lb.att_a1]) += dp1 * h.transpose();
        map_block(G, blocks_[lb.att_a2]) += dp2 * h.transpose();
        dh_in += a1.transpose() * dp1 + a2.transpose() * dp2;
        dh = std::move(dh_in);
    }

    // Input map.
    {
        auto gw = map_block(G, blocks_[0]);
        auto gb = map_block(G, blocks_[1]);
        for (Eigen::Index i = 0; i < N; ++i) {
            gw.col(in.node_types[i]) += dh.col(i);
            gw.col(T) += dh.col(i) * in.relevance[i];
            gb.col(0) += dh.col(i);
        }
    }
    // Relation embedder.
    {
        auto gw = map_block(G, blocks_[2]);
        auto gb = map_block(G, blocks_[3]);
        MatrixXd dpre_rel = drel.cwiseProduct((1.0 - c.rel.array().square()).matrix());
        for (std::size_t k = 0; k < in.relation_keys.size(); ++k) {
            const auto& key = in.relation_keys[k];
            auto col = static_cast<Eigen::Index>(k);
            gw.col(key.relation) += dpre_rel.col(col);
            gw.col(R2 + key.target_type) += dpre_rel.col(col);
            gw.col(R2 + T + key.source_type) += dpre_rel.col(col);
            gb.col(0) += dpre_rel.col(col);
        }
    }
}

std::vector<double> GatModel::attention_layer(const MatrixXd& h, const GatInput& in, std::size_t layer) const {
    if (layer >= cfg_.layers) throw ArgumentError("layer index out of range");
    check_finite(h, "attention input");
    const auto& lb = layer_blocks_[layer];
    const double* P = params_.data();
    auto a1 = map_block(P, blocks_[lb.att_a1]);
    auto a2 = map_block(P, blocks_[lb.att_a2]);
    auto ac = map_block(P, blocks_[lb.att_c]);
    auto av = map_block(P, blocks_[lb.att_v]);
    MatrixXd p1 = a1 * h, p2 = a2 * h;
    std::vector<double> alpha(in.edges.size());
    for (std::size_t e = 0; e < in.edges.size(); ++e) {
        const auto& me = in.edges[e];
        alpha[e] = av.col(0).dot((p1.col(me.target) + p2.col(me.source) + ac.col(0)).array().tanh().matrix());
    }
    for (std::size_t i = 0; i < in.node_count; ++i) {
        auto b = in.row_offsets[i], e = in.row_offsets[i + 1];
        softmax_inplace(std::span<double>(alpha.data() + b, e - b));
    }
    return alpha;
}

MatrixXd GatModel::layer_forward(const MatrixXd& h, const GatInput& in, std::size_t layer,
                                 std::mt19937_64* dropout_rng) const {
    if (layer >= cfg_.layers) throw ArgumentError("layer index out of range");
    if (h.rows() != static_cast<Eigen::Index>(cfg_.hidden) || h.cols() != static_cast<Eigen::Index>(in.node_count)) {
        throw ConfigurationError("node state shape does not match the model");
    }
    const auto D = static_cast<Eigen::Index>(cfg_.hidden);
    const auto T = static_cast<Eigen::Index>(cfg_.node_types);
    const auto N = static_cast<Eigen::Index>(in.node_count);
    const Activation A = cfg_.activation;
    const auto& lb = layer_blocks_[layer];
    const double* P = params_.data();
    auto w1 = map_block(P, blocks_[lb.msg_w1]);
    auto b1 = map_block(P, blocks_[lb.msg_b1]);
    auto w2 = map_block(P, blocks_[lb.msg_w2]);
    auto b2 = map_block(P, blocks_[lb.msg_b2]);
    auto W = map_block(P, blocks_[lb.w]);
    auto alpha = attention_layer(h, in, layer);

    MatrixXd rel(static_cast<Eigen::Index>(cfg_.rel_dim()), static_cast<Eigen::Index>(in.relation_keys.size()));
    for (std::size_t k = 0; k < in.relation_keys.size(); ++k) {
        const auto& key = in.relation_keys[k];
        rel.col(static_cast<Eigen::Index>(k)) = relation_embed(key.target_type, key.source_type, key.relation);
    }
    MatrixXd wh = w1.leftCols(D) * h;
    MatrixXd wr = w1.rightCols(static_cast<Eigen::Index>(cfg_.rel_dim())) * rel;
    MatrixXd agg = MatrixXd::Zero(w1.rows(), N);
    for (std::size_t e = 0; e < in.edges.size(); ++e) {
        const auto& me = in.edges[e];
        VectorXd g = wh.col(me.source) + w1.middleCols(D, T).col(in.node_types[me.target]) + wr.col(me.key) + b1.col(0);
        for (Eigen::Index r = 0; r < g.size(); ++r) agg(r, me.target) += alpha[e] * act(A, g(r));
    }
    MatrixXd f = w2 * agg;
    for (Eigen::Index i = 0; i < N; ++i) {
        if (in.row_offsets[i + 1] > in.row_offsets[i]) f.col(i) += b2.col(0);
    }
    MatrixXd z = W * f;
    if (dropout_rng && cfg_.dropout > 0.0) {
        std::bernoulli_distribution keep(1.0 - cfg_.dropout);
        const double scale = 1.0 / (1.0 - cfg_.dropout);
        for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] *= keep(*dropout_rng) ? scale : 0.0;
    }
    MatrixXd out = apply(A, z) + h;
    check_finite(out, "GAT layer " + std::to_string(layer));
    return out;
}

ForwardResult GatModel::forward(const GatInput& in, std::mt19937_64* dropout_rng) const {
    Cache c;
    run(in, dropout_rng, c);
    ForwardResult out;
    out.answer.logits.assign(c.logits.data(), c.logits.data() + c.logits.size());
    out.answer.probabilities.assign(c.probs.data(), c.probs.data() + c.probs.size());
    out.answer.predicted = static_cast<std::size_t>(
        std::max_element(out.answer.probabilities.begin(), out.answer.probabilities.end()) -
        out.answer.probabilities.begin());
    out.states.h = std::move(c.h);
    out.attention.edges = in.edges;
    out.attention.row_offsets = in.row_offsets;
    for (auto& l : c.layers) out.attention.alpha.push_back(std::move(l.alpha));
    out.node_mass = std::move(c.mass);
    return out;
}

double GatModel::loss_and_gradient(const GatInput& in, std::size_t gold, std::vector<double>& grad,
                                   std::mt19937_64* dropout_rng, AnswerDistribution* answer) const {
    if (gold >= cfg_.options) throw ArgumentError("gold index out of range");
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
    Cache c;
    run(in, dropout_rng, c);
    double loss = -std::log(std::max(c.probs(static_cast<Eigen::Index>(gold)), 1e-300));
    if (!std::isfinite(loss)) throw NumericalError("loss is not finite");
    if (answer) {
        answer->logits.assign(c.logits.data(), c.logits.data() + c.logits.size());
        answer->probabilities.assign(c.probs.data(), c.probs.data() + c.probs.size());
        answer->predicted = static_cast<std::size_t>(
            std::max_element(answer->probabilities.begin(), answer->probabilities.end()) - answer->probabilities.begin());
    }
    backward(in, gold, c, grad);
    return loss;
}

double GatModel::loss(const GatInput& in, std::size_t gold) const {
    if (gold >= cfg_.options) throw ArgumentError("gold index out of range");
    Cache c;
    run(in, nullptr, c);
    // log-softmax computed from logits keeps finite differences accurate.
    double mx = c.logits.maxCoeff();
    double lse = mx + std::log((c.logits.array() - mx).exp().sum());
    return lse - c.logits(static_cast<Eigen::Index>(gold));
}

void GatModel::save(const std::filesystem::path& path) const {
    nlohmann::json header = {
        {"format", "xplain-gat"},
        {"layers", cfg_.layers},
        {"hidden", cfg_.hidden},
        {"node_types", cfg_.node_types},
        {"relation_types", cfg_.relation_types},
        {"lm_dim", cfg_.lm_dim},
        {"options", cfg_.options},
        {"pool_size", cfg_.pool_size},
        {"attention_dim", cfg_.attention_dim},
        {"message_dim", cfg_.message_dim},
        {"head_hidden", cfg_.head_hidden},
        {"dropout", cfg_.dropout},
        {"activation", activation_name(cfg_.activation)},
        {"seed", cfg_.seed},
        {"parameter_count", params_.size()},
    };
    std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(kMagic.data(), kMagic.size());
    auto version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    auto hlen = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(params_.data()), static_cast<std::streamsize>(params_.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + path.string());
}

GatModel GatModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path.string());
    std::array<char, 4> magic{};
    std::uint32_t version = 0, hlen = 0;
    if (!in.read(magic.data(), 4) || magic != kMagic) throw ParseError("not a GAT checkpoint: " + path.string());
    if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version");
    }
    if (!in.read(reinterpret_cast<char*>(&hlen), sizeof hlen)) throw ParseError("truncated checkpoint");
    std::string hs(hlen, '\0');
    if (!in.read(hs.data(), hlen)) throw ParseError("truncated checkpoint");
    GatConfig cfg;
    std::size_t count = 0;
    try {
        auto h = nlohmann::json::parse(hs);
        cfg.layers = h.at("layers");
        cfg.hidden = h.at("hidden");
        cfg.node_types = h.at("node_types");
        cfg.relation_types = h.at("relation_types");
        cfg.lm_dim = h.at("lm_dim");
        cfg.options = h.at("options");
        cfg.pool_size = h.at("pool_size");
        cfg.attention_dim = h.at("attention_dim");
        cfg.message_dim = h.at("message_dim");
        cfg.head_hidden = h.at("head_hidden");
        cfg.dropout = h.at("dropout");
        cfg.activation = activation_from(h.at("activation"));
        cfg.seed = h.at("seed");
        count = h.at("parameter_count");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad checkpoint header: ") + e.what());
    }
    GatModel model(cfg);
    if (count != model.params_.size()) throw ParseError("checkpoint parameter count does not match its dimensions");
    if (!in.read(reinterpret_cast<char*>(model.params_.data()), static_cast<std::streamsize>(count * sizeof(double)))) {
        throw ParseError("truncated checkpoint tensors");
    }
    return model;
}

// ---------------------------------------------------------------------------
// Training

double accuracy(const GatModel& model, const std::vector<TrainExample>& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : data) {
        if (model.forward(ex.input).answer.predicted == ex.gold) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(GatModel& model, const std::vector<TrainExample>& data, const TrainHyper& hyper,
                  const std::vector<TrainExample>* dev, const std::function<bool(const EpochMetrics&)>& on_epoch) {
    if (data.empty()) throw ArgumentError("training set is empty");
    if (hyper.batch_size == 0) throw ArgumentError("batch size must be positive");
    TrainResult result;
    {
        double total = 0.0;
        for (const auto& ex : data) total += model.loss(ex.input, ex.gold);
        result.initial_loss = total / static_cast<double>(data.size());
    }
    RAdam opt(model.parameters().size(), hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.eps, hyper.weight_decay);
    std::mt19937_64 shuffle_rng(hyper.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad, batch_grad;

    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            std::size_t end = std::min(order.size(), start + hyper.batch_size);
            batch_grad.assign(model.parameters().size(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = data[order[k]];
                // Per-example dropout stream: independent of batch composition.
                std::mt19937_64 drop(example_seed(hyper.seed, epoch, order[k]));
                grad.assign(model.parameters().size(), 0.0);
                AnswerDistribution ans;
                double l = model.loss_and_gradient(ex.input, ex.gold, grad, &drop, &ans);
                if (!std::isfinite(l)) {
                    throw NumericalError("NaN loss at epoch " + std::to_string(epoch) + ", example " + std::to_string(order[k]));
                }
                loss_sum += l;
                if (ans.predicted == ex.gold) ++correct;
                for (std::size_t p = 0; p < grad.size(); ++p) batch_grad[p] += grad[p];
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (double& g : batch_grad) g *= scale;
            opt.step(model.parameters(), batch_grad);
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(data.size());
        m.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        if (dev && !dev->empty()) m.dev_accuracy = accuracy(model, *dev);
        result.epochs.push_back(m);
        if (on_epoch && !on_epoch(m)) break;
    }
    return result;
}

GradCheckResult grad_check(const GatModel& model, const GatInput& in, std::size_t gold, double epsilon,
                           std::size_t samples, std::uint64_t seed) {
    std::vector<double> analytic;
    model.loss_and_gradient(in, gold, analytic);
    const std::size_t n = model.parameters().size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (samples < n) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(samples);
        std::sort(idx.begin(), idx.end());
    }
    GatModel probe = model;
    GradCheckResult out;
    for (std::size_t i : idx) {
        double orig = probe.parameters()[i];
        probe.parameters()[i] = orig + epsilon;
        double up = probe.loss(in, gold);
        probe.parameters()[i] = orig - epsilon;
        double down = probe.loss(in, gold);
        probe.parameters()[i] = orig;
        double numeric = (up - down) / (2.0 * epsilon);
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        double rel = std::abs(analytic[i] - numeric) / denom;
        if (out.checked++ == 0 || rel > out.max_relative_error) {
            out.max_relative_error = rel;
            out.worst_index = i;
            out.worst_analytic = analytic[i];
            out.worst_numeric = numeric;
        }
    }
    return out;
}

}  // namespace xplain::gat
