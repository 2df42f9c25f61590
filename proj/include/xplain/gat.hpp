#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xplain/prune.hpp"

namespace xplain::gat {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kRamp, kIdentity };

struct GatConfig {
    std::size_t layers = 5;          // K
    std::size_t hidden = 200;        // D
    std::size_t node_types = 7;      // T (context roles for 5 options)
    std::size_t relation_types = 1;  // R; edges are fed in both directions, so 2R relation features
    std::size_t lm_dim = 256;        // width of the pooled LM context vector
    std::size_t options = 5;         // answer-head outputs
    std::size_t pool_size = 16;      // P, top node masses fed to the answer head
    std::size_t attention_dim = 0;   // 0 -> hidden
    std::size_t message_dim = 0;     // 0 -> hidden
    std::size_t head_hidden = 0;     // 0 -> hidden
    double dropout = 0.2;
    Activation activation = Activation::kRamp;
    std::uint64_t seed = 0;

    std::size_t att_dim() const { return attention_dim ? attention_dim : hidden; }
    std::size_t msg_dim() const { return message_dim ? message_dim : hidden; }
    std::size_t rel_dim() const { return hidden; }
    std::size_t head_dim() const { return head_hidden ? head_hidden : hidden; }
    void validate() const;
};

// Message-passing edge: `target` attends to `source`.
struct MessageEdge {
    std::uint32_t target;
    std::uint32_t source;
    std::uint32_t relation;  // relation feature index in [0, 2R)
    std::uint32_t key;       // index into GatInput::relation_keys
};

// (relation feature, target type, source type): everything f_theta sees.
struct RelationKey {
    std::uint32_t relation;
    std::uint32_t target_type;
    std::uint32_t source_type;
    bool operator==(const RelationKey&) const = default;
};

// Element graph flattened for the network. Each stored edge (s, d, r)
// yields s<-d with feature r and d<-s with feature r + R.
struct GatInput {
    std::size_t node_count = 0;
    std::vector<std::uint32_t> node_types;
    std::vector<double> relevance;
    std::vector<MessageEdge> edges;          // grouped by target, ascending
    std::vector<std::uint32_t> row_offsets;  // node_count + 1 offsets into edges
    std::vector<RelationKey> relation_keys;
    VectorXd context;                        // H^LM
    std::size_t option_count = 0;

    static GatInput build(const ElementGraph& eg, const Vector& context_embedding, std::size_t relation_types);
};

// Per-layer attention coefficients aligned with GatInput::edges.
struct AttentionMap {
    std::vector<MessageEdge> edges;
    std::vector<std::uint32_t> row_offsets;
    std::vector<std::vector<double>> alpha;  // [layer][edge]

    std::size_t layers() const { return alpha.size(); }
    double row_sum(std::size_t layer, std::uint32_t node) const;
};

struct AnswerDistribution {
    std::vector<double> logits;
    std::vector<double> probabilities;
    std::size_t predicted = 0;
};

struct NodeStates {
    std::vector<MatrixXd> h;  // h[k] is D x |V|, k = 0..K
};

struct ForwardResult {
    AnswerDistribution answer;
    NodeStates states;
    AttentionMap attention;
    std::vector<double> node_mass;  // normalized incoming attention at layer K
};

struct ReasonElement {
    std::string label;
    double mass = 0.0;
    std::uint32_t node = 0;  // local element-graph index
};

struct ReasonElements {
    std::vector<ReasonElement> ranked;

    std::vector<std::string> labels() const;
    std::vector<std::string> top(std::size_t k = 5) const;
};

// Incoming attention mass of every node at the last layer, normalized to 1.
// Graphs without edges get uniform mass.
std::vector<double> node_attention_mass(const AttentionMap& att, std::size_t node_count);

// Ranked by mass descending, lower node index first on ties; min(n, |V|) entries.
ReasonElements extract_reason_elements(const AttentionMap& att, const ElementGraph& eg, std::size_t n = 50);

// Parameter block inside the flat parameter vector.
struct Block {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return rows * cols; }
};

struct LayerBlocks {
    std::size_t att_a1, att_a2, att_c, att_v;
    std::size_t msg_w1, msg_b1, msg_w2, msg_b2;
    std::size_t w;
};

class GatModel {
public:
    GatModel() = default;
    // Seeded Glorot-uniform initialization; biases start at zero.
    explicit GatModel(GatConfig cfg);

    const GatConfig& config() const { return cfg_; }
    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const Block& block(const std::string& name) const;
    Eigen::Map<MatrixXd> view(const std::string& name);
    Eigen::Map<const MatrixXd> view(const std::string& name) const;

    // f_theta(relation one-hot, u_i || u_j).
    VectorXd relation_embed(std::uint32_t target_type, std::uint32_t source_type, std::uint32_t relation) const;

    // Initial states: input map over [type one-hot; relevance].
    MatrixXd initial_states(const GatInput& in) const;

    // Softmax-normalized attention of one layer, aligned with in.edges.
    std::vector<double> attention_layer(const MatrixXd& h, const GatInput& in, std::size_t layer) const;

    // One residual GAT update. `dropout_rng` non-null enables training-mode dropout.
    MatrixXd layer_forward(const MatrixXd& h, const GatInput& in, std::size_t layer,
                           std::mt19937_64* dropout_rng = nullptr) const;

    ForwardResult forward(const GatInput& in, std::mt19937_64* dropout_rng = nullptr) const;

    // Cross-entropy of the gold option; accumulates d(loss)/d(params) into grad
    // (resized and zeroed if empty). Returns the loss.
    double loss_and_gradient(const GatInput& in, std::size_t gold, std::vector<double>& grad,
                             std::mt19937_64* dropout_rng = nullptr, AnswerDistribution* answer = nullptr) const;

    double loss(const GatInput& in, std::size_t gold) const;

    void save(const std::filesystem::path& path) const;
    static GatModel load(const std::filesystem::path& path);

private:
    struct Cache;
    void layout();
    void run(const GatInput& in, std::mt19937_64* rng, Cache& cache) const;
    void backward(const GatInput& in, std::size_t gold, const Cache& cache, std::vector<double>& grad) const;

    GatConfig cfg_;
    std::vector<double> params_;
    std::vector<Block> blocks_;
    std::vector<LayerBlocks> layer_blocks_;
};

struct TrainExample {
    GatInput input;
    std::size_t gold = 0;
};

struct TrainHyper {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> dev_accuracy;
};

struct TrainResult {
    double initial_loss = 0.0;
    std::vector<EpochMetrics> epochs;
};

// Mini-batch RAdam on mean cross-entropy. Deterministic for a fixed seed.
// `on_epoch` may return false to stop early.
TrainResult train(GatModel& model, const std::vector<TrainExample>& data, const TrainHyper& hyper,
                  const std::vector<TrainExample>* dev = nullptr,
                  const std::function<bool(const EpochMetrics&)>& on_epoch = {});

double accuracy(const GatModel& model, const std::vector<TrainExample>& data);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central finite differences on a random sample of `samples` parameters
// (all parameters when there are fewer). Relative error uses
// max(|analytic|, |numeric|, 1e-6) as the denominator.
GradCheckResult grad_check(const GatModel& model, const GatInput& in, std::size_t gold, double epsilon = 1e-5,
                           std::size_t samples = 200, std::uint64_t seed = 0);

}  // namespace xplain::gat
