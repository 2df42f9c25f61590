#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace xplain {

using Vector = std::vector<double>;

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Vector embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
    // Recorded in index headers so queries and entries come from the same model.
    virtual std::string model_id() const = 0;
};

// Signed feature hashing of word unigrams and bigrams, L2-normalized.
// Empty text embeds to the zero vector.
class HashEmbedder final : public Embedder {
public:
    static constexpr std::size_t kDefaultDimension = 256;

    explicit HashEmbedder(std::size_t dimension = kDefaultDimension, std::uint64_t seed = 0);
    Vector embed(std::string_view text) const override;
    std::size_t dimension() const override { return dim_; }
    std::string model_id() const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

struct EmbeddingClientConfig {
    std::string base_url = "https://api.voyageai.com/v1";
    std::string model = "voyage-large-2";
    std::string credential_env = "VOYAGE_API_KEY";
    std::chrono::milliseconds timeout{30000};
    int max_retries = 2;
};

// OpenAI-compatible POST {base}/embeddings. The dimension is fixed by the
// first successful response.
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(EmbeddingClientConfig cfg);
    Vector embed(std::string_view text) const override;
    std::size_t dimension() const override { return dim_.load(); }
    std::string model_id() const override { return cfg_.model; }

private:
    EmbeddingClientConfig cfg_;
    mutable std::atomic<std::size_t> dim_{0};
};

// Text used on both the index side and the query side: question, a space, then options joined by spaces.
std::string qa_embedding_text(std::string_view question, const std::vector<std::string>& options);

}  // namespace xplain
