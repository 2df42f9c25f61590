#include "xplain/embedding.hpp"

#include <cmath>
#include <thread>

#include "json.hpp"
#include "xplain/errors.hpp"
#include "xplain/http.hpp"
#include "xplain/text.hpp"

namespace xplain {

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed) : dim_(dimension), seed_(seed) {
    if (dim_ == 0) throw ArgumentError("embedding dimension must be positive");
}

Vector HashEmbedder::embed(std::string_view input) const {
    Vector v(dim_, 0.0);
    auto tokens = text::tokenize(input);
    auto add = [&](std::string_view feature) {
        std::uint64_t h = text::splitmix64(text::fnv1a64(feature) ^ seed_);
        v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        add(tokens[i]);
        if (i + 1 < tokens.size()) add(tokens[i] + ' ' + tokens[i + 1]);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

std::string HashEmbedder::model_id() const {
    return "hash-" + std::to_string(dim_) + (seed_ ? "-s" + std::to_string(seed_) : std::string());
}

HttpEmbedder::HttpEmbedder(EmbeddingClientConfig cfg) : cfg_(std::move(cfg)) {}

Vector HttpEmbedder::embed(std::string_view input) const {
    nlohmann::json req = {{"model", cfg_.model}, {"input", nlohmann::json::array({std::string(input)})}};
    std::map<std::string, std::string> headers;
    if (auto key = http::credential_from_env(cfg_.credential_env); !key.empty()) {
        headers["Authorization"] = "Bearer " + key;
    }
    for (int attempt = 0;; ++attempt) {
        try {
            auto res = http::post_json(cfg_.base_url, "/embeddings", req.dump(), headers, cfg_.timeout);
            if (res.status >= 500) throw TransportError("embedding endpoint returned " + std::to_string(res.status));
            if (res.status != 200) throw Error("embedding request rejected (" + std::to_string(res.status) + "): " + res.body);
            auto body = nlohmann::json::parse(res.body);
            Vector v = body.at("data").at(0).at("embedding").get<Vector>();
            if (v.empty()) throw Error("empty embedding returned");
            std::size_t expected = 0;
            dim_.compare_exchange_strong(expected, v.size());
            if (v.size() != dim_.load()) throw Error("embedding dimension changed between calls");
            return v;
        } catch (const TransportError&) {
            if (attempt >= cfg_.max_retries) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(200) * (1 << attempt));
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("malformed embedding response: ") + e.what());
        }
    }
}

std::string qa_embedding_text(std::string_view question, const std::vector<std::string>& options) {
    std::string out(question);
    out += ' ';
    out += text::join(options, " ");
    return out;
}

}  // namespace xplain
