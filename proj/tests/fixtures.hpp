#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "xplain/dataset.hpp"
#include "xplain/embedding.hpp"
#include "xplain/gat.hpp"
#include "xplain/pipeline.hpp"

namespace xplain::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(XPLAIN_FIXTURES) / name; }

inline ExplanationInstance worked_instance() { return dataset::read_instances(fixture("worked_instance.jsonl")).at(0); }

inline const std::string kQuestion = "Where would you put a cup of coffee after you finish drinking it?";
inline const std::vector<std::string> kOptions = {"table", "floor", "sink", "bed", "shelf"};

// Every question/option word is a node; 300 concept nodes hang off them so
// the 2-hop neighborhood comfortably exceeds 50 nodes.
inline kg::KnowledgeGraph pipeline_graph(std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> anchors = {"cup", "coffee", "drinking", "finish"};
    anchors.insert(anchors.end(), kOptions.begin(), kOptions.end());
    std::uniform_int_distribution<int> pick(0, 299), rel(0, 2);
    std::ostringstream tsv;
    for (const auto& a : anchors) {
        for (int k = 0; k < 12; ++k) tsv << "r" << rel(rng) << '\t' << a << "\tconcept_" << pick(rng) << '\n';
    }
    for (int k = 0; k < 600; ++k) {
        tsv << "r" << rel(rng) << "\tconcept_" << pick(rng) << "\tconcept_" << pick(rng) << '\n';
    }
    return graph_from(tsv.str());
}

inline gat::GatConfig pipeline_model_config() {
    gat::GatConfig c;
    c.layers = 2;
    c.hidden = 12;
    c.node_types = role_type_count(kOptions.size());
    c.relation_types = 3;
    c.lm_dim = 32;
    c.options = kOptions.size();
    c.pool_size = 8;
    c.seed = 11;
    return c;
}

struct OfflinePipeline {
    std::shared_ptr<MockChatClient> llm;
    std::shared_ptr<Pipeline> pipeline;
};

inline OfflinePipeline offline_pipeline(std::shared_ptr<MockChatClient> llm = offline_client()) {
    PipelineComponents parts;
    parts.graph = std::make_shared<kg::KnowledgeGraph>(pipeline_graph());
    parts.model = std::make_shared<gat::GatModel>(pipeline_model_config());
    parts.scorer = std::make_shared<HashScorer>(3);
    parts.context_embedder = std::make_shared<HashEmbedder>(32);
    parts.instance_embedder = std::make_shared<HashEmbedder>();
    parts.generator = llm;
    parts.evaluator = llm;
    PipelineConfig cfg;
    cfg.explainer.backoff = std::chrono::milliseconds(0);
    cfg.scoring.backoff = std::chrono::milliseconds(0);
    return {llm, std::make_shared<Pipeline>(parts, cfg)};
}

}  // namespace xplain::testing
