#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "xplain/kg.hpp"

namespace xplain::testing {

// Fresh, empty directory under the system temp dir; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "xplain") {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline kg::KnowledgeGraph graph_from(const std::string& tsv) {
    std::istringstream in(tsv);
    return kg::parse_triples(in);
}

// Random triple graph with labels n0..n{nodes-1}; every node appears in at least one edge
// when edges >= nodes.
inline kg::KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t nodes, std::size_t edges,
                                       std::size_t relations = 3) {
    std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
    std::uniform_int_distribution<std::size_t> rel(0, relations - 1);
    std::ostringstream tsv;
    for (std::size_t i = 0; i < nodes; ++i) {
        tsv << "r" << rel(rng) << "\tn" << i << "\tn" << pick(rng) << "\n";
    }
    for (std::size_t k = nodes; k < edges; ++k) {
        tsv << "r" << rel(rng) << "\tn" << pick(rng) << "\tn" << pick(rng) << "\n";
    }
    return graph_from(tsv.str());
}

}  // namespace xplain::testing
