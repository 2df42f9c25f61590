#include "xplain/gat_data.hpp"

#include <fstream>

#include "json.hpp"
#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain::gat {

std::vector<LabeledGraph> read_labeled_graphs(const std::filesystem::path& path, const Embedder* context_embedder) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open training data: " + path.string());
    std::vector<LabeledGraph> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            LabeledGraph lg;
            lg.graph = ElementGraph::from_json(j.at("graph"));
            lg.gold = j.at("gold").get<std::size_t>();
            if (lg.gold >= lg.graph.options.size()) throw ParseError("gold index out of range", lineno);
            if (j.contains("context")) {
                lg.context = j.at("context").get<Vector>();
            } else if (context_embedder) {
                lg.context = context_embedder->embed(qa_embedding_text(lg.graph.question, lg.graph.options));
            } else {
                throw ParseError("record has no context vector", lineno);
            }
            out.push_back(std::move(lg));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), lineno);
        } catch (const ParseError& e) {
            if (e.line()) throw;
            throw ParseError(e.what(), lineno);
        }
    }
    return out;
}

void write_labeled_graphs(const std::filesystem::path& path, const std::vector<LabeledGraph>& data) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    for (const auto& lg : data) {
        nlohmann::json j{{"graph", lg.graph.to_json()}, {"gold", lg.gold}, {"context", lg.context}};
        out << j.dump() << '\n';
    }
}

}  // namespace xplain::gat
