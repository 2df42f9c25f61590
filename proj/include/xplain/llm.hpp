#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace xplain {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct LlmClientConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4-turbo";
    std::string credential_env = "OPENAI_API_KEY";
    double temperature = 0.0;
    int max_retries = 3;
    std::chrono::milliseconds timeout{60000};
    std::chrono::milliseconds backoff{500};  // first retry delay, doubled per attempt
    std::size_t concurrency = 4;
    bool debug = false;  // log request/response bodies to stderr

    void validate() const;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    // One completion attempt. TransportError on network/5xx/429, GenerationError on other failures.
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
    virtual std::string id() const = 0;
};

// OpenAI-compatible POST {base_url}/chat/completions with a bearer credential
// taken from the configured environment variable.
class HttpChatClient final : public LlmClient {
public:
    explicit HttpChatClient(LlmClientConfig cfg);
    std::string complete(const std::vector<ChatMessage>& messages) override;
    std::string id() const override { return cfg_.model; }
    const LlmClientConfig& config() const { return cfg_; }

private:
    LlmClientConfig cfg_;
    std::string credential_;
    std::counting_semaphore<1024> slots_;
};

// Offline client. Answers from, in order: the scripted queue, canned
// responses keyed by the hash of the last message, then the responder
// (default: echo the last message).
class MockChatClient final : public LlmClient {
public:
    using Responder = std::function<std::string(const std::vector<ChatMessage>&)>;

    explicit MockChatClient(Responder responder = {}, std::string id = "mock");

    void add_canned(const std::string& prompt, std::string response);
    void push(std::string response);
    void push_failure(std::string message = "scripted transport failure");

    std::string complete(const std::vector<ChatMessage>& messages) override;
    std::string id() const override { return id_; }

    std::size_t calls() const;
    std::vector<std::vector<ChatMessage>> requests() const;

    static std::string echo(const std::vector<ChatMessage>& messages);

private:
    struct Scripted {
        std::string text;
        bool failure = false;
    };
    mutable std::mutex mu_;
    Responder responder_;
    std::string id_;
    std::deque<Scripted> script_;
    std::map<std::uint64_t, std::string> canned_;
    std::vector<std::vector<ChatMessage>> requests_;
};

// Retries TransportError up to `max_retries` times with exponential backoff.
// Throws GenerationError on an empty completion.
std::string complete_with_retry(LlmClient& client, const std::vector<ChatMessage>& messages, int max_retries,
                                std::chrono::milliseconds backoff);

}  // namespace xplain
