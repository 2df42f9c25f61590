// xplain command line: graph ingestion, pruning, GAT training/inference,
// explanation generation, retrieval, scoring, dataset tooling and the HTTP service.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "xplain/dataset.hpp"
#include "xplain/debugger.hpp"
#include "xplain/errors.hpp"
#include "xplain/evalkit.hpp"
#include "xplain/gat.hpp"
#include "xplain/gat_data.hpp"
#include "xplain/kg.hpp"
#include "xplain/pipeline.hpp"
#include "xplain/retriever.hpp"
#include "xplain/review.hpp"
#include "xplain/service.hpp"
#include "xplain/synth.hpp"
#include "xplain/text.hpp"

using namespace xplain;
using json = nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(text::trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!text::trim(cur).empty() || !out.empty()) out.push_back(text::trim(cur));
    return out;
}

// Binary graph if it carries the magic, triples TSV otherwise.
kg::KnowledgeGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open graph: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::string(magic, 3) == "XKG" && magic[3] == '\0') return kg::KnowledgeGraph::load(path);
    return kg::load_triples(path);
}

std::ostream* open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return &std::cout;
    file.open(path, std::ios::trunc);
    if (!file) throw Error("cannot open for writing: " + path);
    return &file;
}

struct LlmFlags {
    std::string base_url = LlmClientConfig{}.base_url;
    std::string model = LlmClientConfig{}.model;
    std::string key_env = LlmClientConfig{}.credential_env;
    std::size_t concurrency = 4;
    bool mock = false;
    bool debug = false;

    void add(CLI::App* app) {
        app->add_option("--llm-base-url", base_url, "OpenAI-compatible endpoint");
        app->add_option("--llm-model", model);
        app->add_option("--llm-key-env", key_env, "environment variable holding the API key");
        app->add_option("--llm-concurrency", concurrency);
        app->add_flag("--mock", mock, "offline client, no network");
        app->add_flag("--llm-debug", debug, "log request/response bodies");
    }
    std::shared_ptr<LlmClient> client() const {
        if (mock) return offline_client();
        LlmClientConfig cfg;
        cfg.base_url = base_url;
        cfg.model = model;
        cfg.credential_env = key_env;
        cfg.concurrency = concurrency;
        cfg.debug = debug;
        return std::make_shared<HttpChatClient>(cfg);
    }
};

struct EmbedFlags {
    std::string kind = "hash";
    std::size_t dim = HashEmbedder::kDefaultDimension;
    std::string base_url = EmbeddingClientConfig{}.base_url;
    std::string model = EmbeddingClientConfig{}.model;
    std::string key_env = EmbeddingClientConfig{}.credential_env;

    void add(CLI::App* app) {
        app->add_option("--embedder", kind, "hash | http")->check(CLI::IsMember({"hash", "http"}));
        app->add_option("--embed-dim", dim, "hash embedder width");
        app->add_option("--embed-base-url", base_url);
        app->add_option("--embed-model", model);
        app->add_option("--embed-key-env", key_env);
    }
    std::shared_ptr<const Embedder> make() const {
        if (kind == "hash") return std::make_shared<HashEmbedder>(dim);
        EmbeddingClientConfig cfg;
        cfg.base_url = base_url;
        cfg.model = model;
        cfg.credential_env = key_env;
        return std::make_shared<HttpEmbedder>(cfg);
    }
};

std::shared_ptr<const RelevanceScorer> make_scorer(const std::string& kind, std::uint64_t seed, const EmbedFlags& emb) {
    if (kind == "hash") return std::make_shared<HashScorer>(seed);
    return std::make_shared<EmbeddingScorer>(emb.make());
}

json answer_json(const gat::AnswerDistribution& a, const std::vector<std::string>& options) {
    json j{{"probabilities", a.probabilities}, {"predicted", a.predicted}};
    if (a.predicted < options.size()) j["predicted_label"] = options[a.predicted];
    return j;
}

json elements_json(const gat::ReasonElements& el) {
    json arr = json::array();
    for (const auto& e : el.ranked) arr.push_back({{"label", e.label}, {"mass", e.mass}, {"node", e.node}});
    return arr;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xplain: knowledge-graph grounded explanations"};
    app.require_subcommand(1);

    // ingest-kg
    std::string triples, out_path;
    auto* ingest = app.add_subcommand("ingest-kg", "triples TSV to binary graph");
    ingest->add_option("--triples", triples)->required();
    ingest->add_option("--out", out_path)->required();

    // import-conceptnet
    std::string cn_csv, language = "en";
    auto* cn = app.add_subcommand("import-conceptnet", "ConceptNet assertions CSV to triples TSV");
    cn->add_option("--csv", cn_csv)->required();
    cn->add_option("--out", out_path)->required();
    cn->add_option("--language", language);

    // prune
    std::string graph_path, question, options_csv, scorer_kind = "hash";
    std::size_t max_nodes = 200;
    int hops = 2;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    EmbedFlags emb;
    auto* prune = app.add_subcommand("prune", "QA-conditioned element graph");
    prune->add_option("--graph", graph_path)->required();
    prune->add_option("--question", question)->required();
    prune->add_option("--options", options_csv, "comma separated")->required();
    prune->add_option("--n", max_nodes);
    prune->add_option("--hops", hops);
    prune->add_option("--scorer", scorer_kind)->check(CLI::IsMember({"hash", "lm"}));
    prune->add_option("--scorer-seed", seed);
    prune->add_option("--threads", threads);
    prune->add_option("--out", out_path);
    emb.add(prune);

    // synth
    std::size_t synth_count = 200, synth_options = 4, synth_lm_dim = 8;
    auto* synth = app.add_subcommand("synth", "planted-signal training data");
    synth->add_option("--count", synth_count);
    synth->add_option("--options", synth_options);
    synth->add_option("--lm-dim", synth_lm_dim);
    synth->add_option("--seed", seed);
    synth->add_option("--out", out_path)->required();

    // train-gat
    std::string data_path, dev_path;
    gat::GatConfig gcfg;
    gat::TrainHyper hyper;
    double target_dev = 0.0;
    auto* train = app.add_subcommand("train-gat", "train the reasoner on labeled element graphs (JSONL)");
    train->add_option("--data", data_path)->required();
    train->add_option("--dev", dev_path);
    train->add_option("--epochs", hyper.epochs);
    train->add_option("--lr", hyper.learning_rate);
    train->add_option("--batch", hyper.batch_size);
    train->add_option("--dropout", gcfg.dropout);
    train->add_option("--layers", gcfg.layers);
    train->add_option("--dim", gcfg.hidden);
    train->add_option("--pool", gcfg.pool_size);
    train->add_option("--seed", seed);
    train->add_option("--stop-at-dev", target_dev, "stop once dev accuracy reaches this");
    train->add_option("--out", out_path)->required();

    // infer
    std::string model_path, eg_path;
    std::size_t n_elements = 50;
    auto* infer = app.add_subcommand("infer", "answer distribution and reason elements for an element graph");
    infer->add_option("--model", model_path)->required();
    infer->add_option("--element-graph", eg_path)->required();
    infer->add_option("--top", n_elements);

    // explain
    std::string label;
    LlmFlags llm;
    bool no_score = false;
    auto* explain = app.add_subcommand("explain", "full pipeline for one question, prints an instance record");
    explain->add_option("--model-ckpt", model_path)->required();
    explain->add_option("--graph", graph_path)->required();
    explain->add_option("--question", question)->required();
    explain->add_option("--options", options_csv)->required();
    explain->add_option("--label", label);
    explain->add_option("--n", max_nodes);
    explain->add_option("--hops", hops);
    explain->add_option("--scorer", scorer_kind)->check(CLI::IsMember({"hash", "lm"}));
    explain->add_option("--scorer-seed", seed);
    explain->add_flag("--no-score", no_score, "skip the debugger score");
    llm.add(explain);
    emb.add(explain);

    // build-index
    std::string dataset_path;
    bool embed_text = false;
    auto* bindex = app.add_subcommand("build-index", "question embedding index over a dataset");
    bindex->add_option("--dataset", dataset_path)->required();
    bindex->add_option("--out", out_path)->required();
    bindex->add_flag("--embed-text", embed_text, "ignore stored embeddings");
    emb.add(bindex);

    // retrieve
    std::string index_path, weights_csv = "1,1,1,0";
    std::size_t m = 3;
    auto* retrieve = app.add_subcommand("retrieve", "top-m demonstrations and the ICL prompt");
    retrieve->add_option("--index", index_path)->required();
    retrieve->add_option("--dataset", dataset_path, "defaults to the path recorded in the index");
    retrieve->add_option("--question", question)->required();
    retrieve->add_option("--options", options_csv)->required();
    retrieve->add_option("-m", m);
    retrieve->add_option("--weights", weights_csv, "f,c,a,o");
    emb.add(retrieve);

    // debug-score
    bool only_missing = false;
    auto* dscore = app.add_subcommand("debug-score", "fill debugger scores for a dataset");
    dscore->add_option("--dataset", dataset_path)->required();
    dscore->add_option("--out", out_path)->required();
    dscore->add_flag("--only-missing", only_missing);
    llm.add(dscore);

    // stats / validate / split
    std::string manifest_path, out_dir;
    auto* stats = app.add_subcommand("stats", "word-count statistics");
    stats->add_option("--dataset", dataset_path)->required();
    stats->add_option("--manifest", manifest_path);
    auto* validate = app.add_subcommand("validate", "schema and invariant checks");
    validate->add_option("--dataset", dataset_path)->required();
    auto* split = app.add_subcommand("split", "partition a dataset by manifest");
    split->add_option("--dataset", dataset_path)->required();
    split->add_option("--manifest", manifest_path)->required();
    split->add_option("--out-dir", out_dir)->required();

    // eval
    std::string responses_path, report_path;
    std::vector<std::string> correlate;
    auto* evalc = app.add_subcommand("eval", "aggregate Likert responses");
    evalc->add_option("--responses", responses_path)->required();
    evalc->add_option("--report", report_path, "JSON report path; text goes to stdout");
    evalc->add_option("--correlate", correlate, "metric pairs as a~b");

    // serve
    std::string host = "127.0.0.1", store_dir;
    int port = 8080;
    std::size_t bound = 3;
    auto* serve = app.add_subcommand("serve", "HTTP API under /v1");
    serve->add_option("--graph", graph_path);
    serve->add_option("--model", model_path);
    serve->add_option("--index", index_path);
    serve->add_option("--dataset", dataset_path, "defaults to the path recorded in the index");
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--review-store", store_dir);
    serve->add_option("--refinement-bound", bound);
    serve->add_option("--scorer", scorer_kind)->check(CLI::IsMember({"hash", "lm"}));
    serve->add_option("--scorer-seed", seed);
    serve->add_option("--threads", threads);
    llm.add(serve);
    emb.add(serve);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            auto g = kg::load_triples(triples);
            g.save(out_path);
            std::cout << "nodes " << g.node_count() << " edges " << g.edge_count() << " relations "
                      << g.relation_type_count() << '\n';
        } else if (*cn) {
            std::ifstream in(cn_csv);
            if (!in) throw Error("cannot open " + cn_csv);
            std::ofstream out(out_path, std::ios::trunc);
            std::cout << "triples " << kg::convert_conceptnet(in, out, language) << '\n';
        } else if (*prune) {
            auto g = load_graph(graph_path);
            QAContext qa{question, split_csv(options_csv), {}};
            PruneOptions po{max_nodes, hops, threads};
            auto eg = prune_kg(qa, g, *make_scorer(scorer_kind, seed, emb), po);
            std::ofstream f;
            *open_out(out_path, f) << eg.to_json().dump(1) << '\n';
        } else if (*synth) {
            synth::PlantedConfig pc;
            pc.options = synth_options;
            pc.lm_dim = synth_lm_dim;
            std::vector<gat::LabeledGraph> data;
            for (auto& ex : synth::planted_signal(synth_count, seed, pc))
                data.push_back({std::move(ex.graph), std::move(ex.context), ex.gold});
            gat::write_labeled_graphs(out_path, data);
        } else if (*train) {
            // contexts missing from the records get the hash embedding of the QA text
            HashEmbedder fallback(64);
            auto raw = gat::read_labeled_graphs(data_path, &fallback);
            if (raw.empty()) throw ArgumentError("no training records");
            std::vector<gat::LabeledGraph> raw_dev;
            if (!dev_path.empty()) raw_dev = gat::read_labeled_graphs(dev_path, &fallback);
            std::size_t rel = 0, opts = 0;
            for (const auto* set : {&raw, &raw_dev})
                for (const auto& r : *set) {
                    rel = std::max<std::size_t>(rel, r.graph.relation_type_count());
                    opts = std::max(opts, r.graph.options.size());
                }
            gcfg.relation_types = std::max<std::size_t>(rel, 1);
            gcfg.options = opts;
            gcfg.node_types = role_type_count(opts);
            gcfg.lm_dim = raw.front().context.size();
            gcfg.seed = seed;
            hyper.seed = seed;
            auto convert = [&](const std::vector<gat::LabeledGraph>& v) {
                std::vector<gat::TrainExample> out;
                for (const auto& r : v)
                    out.push_back({gat::GatInput::build(r.graph, r.context, gcfg.relation_types), r.gold});
                return out;
            };
            auto tr = convert(raw), dv = convert(raw_dev);
            gat::GatModel model(gcfg);
            auto res = gat::train(model, tr, hyper, dv.empty() ? nullptr : &dv, [&](const gat::EpochMetrics& e) {
                std::fprintf(stderr, "epoch %zu loss %.4f train_acc %.3f", e.epoch, e.train_loss, e.train_accuracy);
                if (e.dev_accuracy) std::fprintf(stderr, " dev_acc %.3f", *e.dev_accuracy);
                std::fputc('\n', stderr);
                return !(target_dev > 0 && e.dev_accuracy && *e.dev_accuracy >= target_dev);
            });
            model.save(out_path);
            std::cout << "initial_loss " << res.initial_loss << " epochs " << res.epochs.size() << '\n';
        } else if (*infer) {
            auto model = gat::GatModel::load(model_path);
            std::ifstream in(eg_path);
            if (!in) throw Error("cannot open " + eg_path);
            auto j = json::parse(in);
            ElementGraph eg;
            Vector ctx;
            if (j.contains("graph")) {
                eg = ElementGraph::from_json(j.at("graph"));
                if (j.contains("context")) ctx = j.at("context").get<Vector>();
            } else {
                eg = ElementGraph::from_json(j);
            }
            if (ctx.empty()) ctx = HashEmbedder(model.config().lm_dim).embed(qa_embedding_text(eg.question, eg.options));
            auto fr = model.forward(gat::GatInput::build(eg, ctx, model.config().relation_types));
            auto el = gat::extract_reason_elements(fr.attention, eg, n_elements);
            json outj = answer_json(fr.answer, eg.options);
            outj["reason_elements"] = elements_json(el);
            std::cout << outj.dump(1) << '\n';
        } else if (*explain) {
            PipelineComponents parts;
            parts.graph = std::make_shared<kg::KnowledgeGraph>(load_graph(graph_path));
            parts.model = std::make_shared<gat::GatModel>(gat::GatModel::load(model_path));
            parts.scorer = make_scorer(scorer_kind, seed, emb);
            parts.context_embedder = std::make_shared<HashEmbedder>(parts.model->config().lm_dim);
            parts.instance_embedder = emb.make();
            parts.generator = llm.client();
            if (!no_score) parts.evaluator = parts.generator;
            PipelineConfig pc;
            pc.prune.max_nodes = max_nodes;
            pc.prune.hops = hops;
            if (llm.mock) pc.explainer.backoff = pc.scoring.backoff = std::chrono::milliseconds(0);
            Pipeline p(parts, pc);
            auto out = p.run(question, split_csv(options_csv),
                             label.empty() ? std::nullopt : std::optional<std::string>(label));
            std::cout << to_json(out.instance).dump() << '\n';
        } else if (*bindex) {
            auto data = dataset::read_instances(dataset_path);
            auto idx = build_index(data, *emb.make(), !embed_text);
            idx.dataset_path = std::filesystem::absolute(dataset_path);
            idx.save(out_path);
            std::cout << "entries " << idx.size() << " dimension " << idx.dimension() << '\n';
        } else if (*retrieve) {
            auto idx = RetrievalIndex::load(index_path);
            std::filesystem::path dp = dataset_path.empty() ? idx.dataset_path : std::filesystem::path(dataset_path);
            if (dp.empty()) throw ArgumentError("index records no dataset; pass --dataset");
            auto data = dataset::read_instances(dp);
            Retriever r(std::move(idx), std::move(data), emb.make());
            QAContext qa{question, split_csv(options_csv), {}};
            auto res = r.retrieve(qa, m, SelectionWeights::parse(weights_csv));
            json demos = json::array();
            for (const auto& d : res.demos)
                demos.push_back({{"rank", d.rank}, {"similarity", d.similarity}, {"explanation_id", d.explanation_id}});
            std::cout << json{{"demos", demos}, {"prompt", res.prompt}}.dump(1) << '\n';
        } else if (*dscore) {
            auto data = dataset::read_instances(dataset_path);
            auto client = llm.client();
            ScoringOptions so;
            if (llm.mock) so.backoff = std::chrono::milliseconds(0);
            std::size_t failed = 0;
            for (auto& inst : data) {
                if (only_missing && !inst.debugger_score.empty()) continue;
                try {
                    inst.debugger_score = render(score_instance(inst, *client, so));
                } catch (const Error& e) {
                    ++failed;
                    std::cerr << (inst.id.empty() ? dataset::question_id(inst) : inst.id) << ": " << e.what() << '\n';
                }
            }
            dataset::write_instances(out_path, data);
            std::cout << "scored " << data.size() - failed << " failed " << failed << '\n';
            return failed ? 1 : 0;
        } else if (*stats) {
            auto data = dataset::read_instances(dataset_path);
            std::vector<std::string> split_of;
            if (!manifest_path.empty()) {
                auto man = dataset::read_manifest(manifest_path);
                for (const auto& inst : data) {
                    auto it = man.find(dataset::question_id(inst));
                    split_of.push_back(it == man.end() ? "unmapped" : it->second);
                }
            }
            auto st = dataset::word_count_stats(data, split_of);
            auto row = [](const std::string& name, const dataset::WordMeans& w) {
                std::printf("%-10s n=%zu why=%.2f why_not=%.2f whole=%.2f\n", name.c_str(), w.count, w.why, w.why_not,
                            w.whole);
            };
            for (const auto& [name, w] : st.splits) row(name, w);
            row("overall", st.overall);
        } else if (*validate) {
            auto data = dataset::read_instances(dataset_path);
            std::size_t bad = 0;
            for (std::size_t i = 0; i < data.size(); ++i)
                for (const auto& v : dataset::validate(data[i])) {
                    ++bad;
                    std::printf("row %zu %s %s: %s\n", i + 1, v.code.c_str(), v.field.c_str(), v.message.c_str());
                }
            std::printf("%zu records, %zu violations\n", data.size(), bad);
            return bad ? 1 : 0;
        } else if (*split) {
            auto parts = dataset::split_dataset(dataset::read_instances(dataset_path),
                                                dataset::read_manifest(manifest_path));
            std::filesystem::create_directories(out_dir);
            for (const auto& [name, rows] : parts) {
                dataset::write_instances(std::filesystem::path(out_dir) / (name + ".jsonl"), rows);
                std::printf("%s %zu\n", name.c_str(), rows.size());
            }
        } else if (*evalc) {
            std::vector<std::pair<std::string, std::string>> pairs;
            for (const auto& c : correlate) {
                auto pos = c.find('~');
                if (pos == std::string::npos) throw ArgumentError("correlation pair must be a~b: " + c);
                pairs.emplace_back(c.substr(0, pos), c.substr(pos + 1));
            }
            auto rep = eval::build_report(eval::read_responses(responses_path), pairs);
            std::cout << rep.to_text();
            if (!report_path.empty()) {
                std::ofstream f(report_path, std::ios::trunc);
                f << rep.to_json().dump(2) << '\n';
            }
        } else if (*serve) {
            service::ServiceDeps deps;
            auto client = llm.client();
            deps.evaluator = client;
            auto instance_embedder = emb.make();
            if (!graph_path.empty() && !model_path.empty()) {
                PipelineComponents parts;
                parts.graph = std::make_shared<kg::KnowledgeGraph>(load_graph(graph_path));
                parts.model = std::make_shared<gat::GatModel>(gat::GatModel::load(model_path));
                parts.scorer = make_scorer(scorer_kind, seed, emb);
                parts.context_embedder = std::make_shared<HashEmbedder>(parts.model->config().lm_dim);
                parts.instance_embedder = instance_embedder;
                parts.generator = client;
                parts.evaluator = client;
                PipelineConfig pc;
                pc.prune.threads = threads;
                deps.pipeline = std::make_shared<Pipeline>(parts, pc);
            }
            if (!index_path.empty()) {
                auto idx = RetrievalIndex::load(index_path);
                std::filesystem::path dp = dataset_path.empty() ? idx.dataset_path : std::filesystem::path(dataset_path);
                auto data = dp.empty() ? std::vector<ExplanationInstance>{} : dataset::read_instances(dp);
                deps.retriever = std::make_shared<Retriever>(std::move(idx), std::move(data), instance_embedder);
            }
            if (!store_dir.empty()) {
                review::StoreOptions so;
                so.refinement_bound = bound;
                deps.store = std::make_shared<review::ReviewStore>(store_dir, so);
            }
            service::Service svc(deps);
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            int bound_port = svc.start(host, port);
            std::printf("listening on %s:%d\n", host.c_str(), bound_port);
            std::fflush(stdout);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            svc.stop();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
