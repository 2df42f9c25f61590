// pybind11 bindings. Structured values cross the boundary as JSON text;
// the Python package decodes them.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

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
#include "xplain/synth.hpp"

namespace py = pybind11;
using namespace xplain;
using nlohmann::json;

namespace {

json forward_json(const gat::GatModel& model, const ElementGraph& eg, const Vector& context, std::size_t top) {
    auto fr = model.forward(gat::GatInput::build(eg, context, model.config().relation_types));
    auto el = gat::extract_reason_elements(fr.attention, eg, top);
    json elements = json::array();
    for (const auto& e : el.ranked) elements.push_back({{"label", e.label}, {"mass", e.mass}, {"node", e.node}});
    return {{"probabilities", fr.answer.probabilities},
            {"logits", fr.answer.logits},
            {"predicted", fr.answer.predicted},
            {"reason_elements", elements},
            {"attention", fr.attention.alpha}};
}

gat::GatConfig config_from(const json& j) {
    gat::GatConfig c;
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.options = j.value("options", c.options);
    c.node_types = j.value("node_types", static_cast<std::size_t>(role_type_count(c.options)));
    c.relation_types = j.value("relation_types", c.relation_types);
    c.lm_dim = j.value("lm_dim", c.lm_dim);
    c.pool_size = j.value("pool_size", c.pool_size);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    if (j.value("activation", std::string("ramp")) == "identity") c.activation = gat::Activation::kIdentity;
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    auto base = py::register_exception<Error>(m, "XplainError");
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<NoSeedEntities>(m, "NoSeedEntities", base.ptr());
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());

    py::class_<kg::KnowledgeGraph, std::shared_ptr<kg::KnowledgeGraph>>(m, "KnowledgeGraph")
        .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<kg::KnowledgeGraph>(kg::KnowledgeGraph::load(p)); })
        .def_static("from_triples", [](const std::filesystem::path& p) { return std::make_shared<kg::KnowledgeGraph>(kg::load_triples(p)); })
        .def("save", &kg::KnowledgeGraph::save)
        .def_property_readonly("node_count", &kg::KnowledgeGraph::node_count)
        .def_property_readonly("edge_count", &kg::KnowledgeGraph::edge_count)
        .def_property_readonly("relation_names", &kg::KnowledgeGraph::relation_names);

    // scorer: None -> HashScorer(seed); otherwise a callable (label, question, options) -> logit
    m.def(
        "prune",
        [](const kg::KnowledgeGraph& g, const std::string& question, const std::vector<std::string>& options,
           std::size_t n, int hops, py::object scorer, std::uint64_t seed) {
            QAContext qa{question, options, {}};
            PruneOptions opts{n, hops, 1};
            ElementGraph eg;
            if (scorer.is_none()) {
                eg = prune_kg(qa, g, HashScorer(seed), opts);
            } else {
                FunctionScorer fs([scorer](std::string_view label, const QAContext& q) {
                    py::gil_scoped_acquire gil;
                    return scorer(std::string(label), q.question, q.options).cast<double>();
                });
                eg = prune_kg(qa, g, fs, opts);
            }
            return eg.to_json().dump();
        },
        py::arg("graph"), py::arg("question"), py::arg("options"), py::arg("n") = 200, py::arg("hops") = 2,
        py::arg("scorer") = py::none(), py::arg("seed") = 0);

    py::class_<gat::GatModel, std::shared_ptr<gat::GatModel>>(m, "GatModel")
        .def(py::init([](const std::string& cfg) { return std::make_shared<gat::GatModel>(config_from(json::parse(cfg))); }))
        .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<gat::GatModel>(gat::GatModel::load(p)); })
        .def("save", &gat::GatModel::save)
        .def_property_readonly("parameter_count", [](const gat::GatModel& g) { return g.parameters().size(); })
        .def_property_readonly("lm_dim", [](const gat::GatModel& g) { return g.config().lm_dim; })
        .def(
            "forward",
            [](const gat::GatModel& g, const std::string& eg, const Vector& context, std::size_t top) {
                return forward_json(g, ElementGraph::from_json(json::parse(eg)), context, top).dump();
            },
            py::arg("element_graph"), py::arg("context"), py::arg("top") = 50)
        .def(
            "grad_check",
            [](const gat::GatModel& g, const std::string& eg, const Vector& context, std::size_t gold,
               std::size_t samples) {
                auto in = gat::GatInput::build(ElementGraph::from_json(json::parse(eg)), context, g.config().relation_types);
                return gat::grad_check(g, in, gold, 1e-5, samples).max_relative_error;
            },
            py::arg("element_graph"), py::arg("context"), py::arg("gold"), py::arg("samples") = 200);

    // data: JSONL path of {"graph", "gold", "context"} records
    m.def(
        "train",
        [](gat::GatModel& model, const std::filesystem::path& data, std::size_t epochs, double lr,
           std::size_t batch, std::uint64_t seed) {
            auto raw = gat::read_labeled_graphs(data);
            std::vector<gat::TrainExample> ex;
            for (const auto& r : raw)
                ex.push_back({gat::GatInput::build(r.graph, r.context, model.config().relation_types), r.gold});
            gat::TrainHyper h;
            h.epochs = epochs;
            h.learning_rate = lr;
            h.batch_size = batch;
            h.seed = seed;
            py::gil_scoped_release nogil;
            auto res = gat::train(model, ex, h);
            std::vector<double> losses;
            for (const auto& e : res.epochs) losses.push_back(e.train_loss);
            return std::make_pair(gat::accuracy(model, ex), losses);
        },
        py::arg("model"), py::arg("data"), py::arg("epochs") = 10, py::arg("lr") = 1e-3, py::arg("batch") = 64,
        py::arg("seed") = 0);

    m.def("write_planted", [](const std::filesystem::path& out, std::size_t count, std::uint64_t seed) {
        std::vector<gat::LabeledGraph> data;
        for (auto& ex : synth::planted_signal(count, seed)) data.push_back({ex.graph, ex.context, ex.gold});
        gat::write_labeled_graphs(out, data);
    });

    m.def("overall", py::overload_cast<double, double, double>(&overall));
    m.def("render_scores", [](double f, double c, double a) { return render(DebuggerScore{f, c, a}); });
    m.def("parse_scores", [](const std::string& s) {
        auto d = parse_scores(s);
        return py::make_tuple(d.faithfulness, d.completeness, d.accuracy);
    });

    m.def("read_instances", [](const std::filesystem::path& p) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& inst : dataset::read_instances(p)) arr.push_back(to_json(inst));
        return arr.dump();
    });
    m.def("write_instances", [](const std::filesystem::path& p, const std::string& records) {
        std::vector<ExplanationInstance> v;
        for (const auto& j : json::parse(records)) v.push_back(instance_from_json(j));
        dataset::write_instances(p, v);
    });
    m.def("validate_instance", [](const std::string& record) {
        std::vector<std::string> codes;
        for (const auto& v : dataset::validate(instance_from_json(json::parse(record)))) codes.push_back(v.code);
        return codes;
    });

    m.def("cosine", &cosine);
    m.def("normalize_likert", &eval::normalize_likert);
    m.def("pearson", &eval::pearson);

    // Offline end-to-end run: hash scorer, hash embeddings, echoing mock LLM.
    m.def(
        "explain_offline",
        [](std::shared_ptr<kg::KnowledgeGraph> g, std::shared_ptr<gat::GatModel> model, const std::string& question,
           const std::vector<std::string>& options, std::optional<std::string> label, std::size_t n) {
            PipelineComponents parts;
            parts.graph = g;
            parts.model = model;
            parts.scorer = std::make_shared<HashScorer>(0);
            parts.context_embedder = std::make_shared<HashEmbedder>(model->config().lm_dim);
            parts.instance_embedder = std::make_shared<HashEmbedder>();
            auto llm = offline_client();
            parts.generator = llm;
            parts.evaluator = llm;
            PipelineConfig cfg;
            cfg.prune.max_nodes = n;
            cfg.explainer.backoff = cfg.scoring.backoff = std::chrono::milliseconds(0);
            return to_json(Pipeline(parts, cfg).run(question, options, label).instance).dump();
        },
        py::arg("graph"), py::arg("model"), py::arg("question"), py::arg("options"), py::arg("label") = py::none(),
        py::arg("n") = 200);
}
