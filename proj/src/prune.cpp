#include "xplain/prune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_map>

#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain {

void QAContext::validate() const {
    if (options.size() < 2) throw ArgumentError("a question needs at least two options");
    std::set<std::string> unique(options.begin(), options.end());
    if (unique.size() != options.size()) throw ArgumentError("answer options must be unique");
    for (double x : context_embedding) {
        if (!std::isfinite(x)) throw ArgumentError("context embedding is not finite");
    }
}

std::string QAContext::scoring_text() const { return question + " " + text::join(options, " "); }

void ElementGraph::validate() const {
    for (const auto& n : nodes) {
        if (n.type >= node_type_count) throw ArgumentError("element node type out of range: " + n.label);
        if (!(n.relevance > 0.0 && n.relevance < 1.0)) throw ArgumentError("relevance outside (0,1): " + n.label);
    }
    for (const auto& e : edges) {
        if (e.src >= nodes.size() || e.dst >= nodes.size()) throw ArgumentError("element edge endpoint out of range");
        if (e.relation >= relation_type_count()) throw ArgumentError("element edge relation out of range");
    }
}

nlohmann::json ElementGraph::to_json() const {
    nlohmann::json j;
    j["format"] = "xplain-element-graph";
    j["version"] = 1;
    j["question"] = question;
    j["options"] = options;
    j["node_type_count"] = node_type_count;
    j["relation_names"] = relation_names;
    auto& jn = j["nodes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        jn.push_back({{"id", i}, {"kg_id", n.kg_id}, {"label", n.label}, {"type", n.type}, {"score", n.relevance}});
    }
    auto& je = j["edges"] = nlohmann::json::array();
    for (const auto& e : edges) je.push_back({e.src, e.dst, e.relation});
    return j;
}

ElementGraph ElementGraph::from_json(const nlohmann::json& j) {
    try {
        if (j.value("version", 0) != 1) throw ParseError("unsupported element-graph version");
        ElementGraph g;
        g.question = j.at("question").get<std::string>();
        g.options = j.at("options").get<std::vector<std::string>>();
        g.node_type_count = j.at("node_type_count").get<std::uint32_t>();
        g.relation_names = j.at("relation_names").get<std::vector<std::string>>();
        for (const auto& jn : j.at("nodes")) {
            g.nodes.push_back({jn.at("kg_id").get<kg::NodeId>(), jn.at("label").get<std::string>(),
                               jn.at("type").get<std::uint32_t>(), jn.at("score").get<double>()});
        }
        for (const auto& je : j.at("edges")) {
            g.edges.push_back({je.at(0).get<std::uint32_t>(), je.at(1).get<std::uint32_t>(), je.at(2).get<std::uint32_t>()});
        }
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed element graph: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ParseError(std::string("invalid element graph: ") + e.what());
    }
}

void ElementGraph::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << to_json().dump(1) << '\n';
}

ElementGraph ElementGraph::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open element graph: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed element graph: ") + e.what());
    }
    return from_json(j);
}

HashScorer::HashScorer(std::uint64_t seed, std::size_t dim) : seed_(seed), weights_(dim) {
    if (dim == 0) throw ArgumentError("hash scorer dimension must be positive");
    for (std::size_t k = 0; k < dim; ++k) weights_[k] = text::unit_symmetric(text::splitmix64(seed_ + k));
}

Vector HashScorer::encode(std::string_view input) const {
    Vector b(weights_.size(), 0.0);
    for (const auto& tok : text::tokenize(input)) {
        auto h = text::fnv1a64(tok);
        b[h % b.size()] += (h >> 63) ? -1.0 : 1.0;
    }
    return b;
}

double HashScorer::head(const Vector& encoded) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) acc += encoded[k] * weights_[k];
    return acc;
}

double HashScorer::logit(std::string_view node_label, const QAContext& qa) const {
    std::string input(node_label);
    input += ' ';
    input += qa.scoring_text();
    return head(encode(input));
}

EmbeddingScorer::EmbeddingScorer(std::shared_ptr<const Embedder> embedder, double scale, double bias)
    : embedder_(std::move(embedder)), scale_(scale), bias_(bias) {
    if (!embedder_) throw ArgumentError("embedding scorer needs an embedder");
}

double EmbeddingScorer::logit(std::string_view node_label, const QAContext& qa) const {
    std::string qa_text = qa.scoring_text();
    Vector node = embedder_->embed(std::string(node_label) + " " + qa_text);
    Vector ctx = embedder_->embed(qa_text);
    double dot = 0.0, nn = 0.0, nc = 0.0;
    for (std::size_t k = 0; k < node.size() && k < ctx.size(); ++k) {
        dot += node[k] * ctx[k];
        nn += node[k] * node[k];
        nc += ctx[k] * ctx[k];
    }
    double cos = (nn > 0.0 && nc > 0.0) ? dot / std::sqrt(nn * nc) : 0.0;
    return scale_ * cos + bias_;
}

double relevance_from_logit(double logit) {
    if (!std::isfinite(logit)) throw NumericalError("relevance logit is not finite");
    double s = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
    constexpr double kFloor = 1e-15;
    return std::clamp(s, kFloor, 1.0 - kFloor);
}

double score_node(const kg::KnowledgeGraph& graph, kg::NodeId node, const QAContext& qa,
                  const RelevanceScorer& scorer) {
    if (node >= graph.node_count()) throw ArgumentError("node id out of range: " + std::to_string(node));
    return relevance_from_logit(scorer.logit(graph.nodes()[node].label, qa));
}

ElementGraph prune_kg(const QAContext& qa, const kg::KnowledgeGraph& graph, const RelevanceScorer& scorer,
                      const PruneOptions& opts) {
    if (opts.max_nodes < 1) throw ArgumentError("prune budget N must be at least 1");
    qa.validate();

    auto question_seeds = kg::ground_entities(qa.question, graph);
    std::vector<std::vector<kg::NodeId>> option_seeds;
    std::set<kg::NodeId> seeds(question_seeds.begin(), question_seeds.end());
    for (const auto& opt : qa.options) {
        option_seeds.push_back(kg::ground_entities(opt, graph));
        seeds.insert(option_seeds.back().begin(), option_seeds.back().end());
    }
    if (seeds.empty()) throw NoSeedEntities("no knowledge-graph entity found in the question or options");

    std::vector<kg::NodeId> seed_list(seeds.begin(), seeds.end());
    auto pool = kg::neighborhood(graph, seed_list, opts.hops);

    std::vector<double> scores(pool.nodes.size());
    auto score_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) scores[i] = score_node(graph, pool.nodes[i], qa, scorer);
    };
    std::size_t workers = std::max<std::size_t>(1, std::min(opts.threads, pool.nodes.size()));
    if (workers == 1) {
        score_range(0, pool.nodes.size());
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(workers);
        std::size_t chunk = (pool.nodes.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    score_range(w * chunk, std::min(pool.nodes.size(), (w + 1) * chunk));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::vector<std::size_t> order(pool.nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto ranks_before = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return pool.nodes[a] < pool.nodes[b];
    };
    std::size_t keep = std::min(opts.max_nodes, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), ranks_before);
    order.resize(keep);
    // Pool nodes are sorted by KG id, so sorting pool positions sorts by KG id.
    std::sort(order.begin(), order.end());

    ElementGraph eg;
    eg.question = qa.question;
    eg.options = qa.options;
    eg.node_type_count = role_type_count(qa.options.size());
    eg.relation_names = graph.relation_names();

    std::unordered_map<kg::NodeId, std::uint32_t> local;
    std::set<kg::NodeId> question_set(question_seeds.begin(), question_seeds.end());
    for (std::size_t pos : order) {
        kg::NodeId id = pool.nodes[pos];
        std::uint32_t role = static_cast<std::uint32_t>(NodeRole::kOther);
        if (question_set.count(id)) role = static_cast<std::uint32_t>(NodeRole::kQuestion);
        for (std::size_t k = 0; k < option_seeds.size(); ++k) {
            if (std::binary_search(option_seeds[k].begin(), option_seeds[k].end(), id)) {
                role = static_cast<std::uint32_t>(NodeRole::kFirstOption) + static_cast<std::uint32_t>(k);
                break;
            }
        }
        local.emplace(id, static_cast<std::uint32_t>(eg.nodes.size()));
        eg.nodes.push_back({id, graph.nodes()[id].label, role, scores[pos]});
    }
    for (std::uint32_t ei : pool.edges) {
        const auto& e = graph.edges()[ei];
        auto s = local.find(e.src);
        auto d = local.find(e.dst);
        if (s == local.end() || d == local.end()) continue;
        eg.edges.push_back({s->second, d->second, e.relation});
    }
    return eg;
}

}  // namespace xplain
