#include "xplain/llm.hpp"

#include <iostream>
#include <thread>

#include "json.hpp"
#include "xplain/errors.hpp"
#include "xplain/http.hpp"
#include "xplain/text.hpp"

namespace xplain {

void LlmClientConfig::validate() const {
    if (temperature < 0.0) throw ConfigurationError("temperature must be >= 0");
    if (max_retries < 0) throw ConfigurationError("max_retries must be >= 0");
    if (concurrency == 0 || concurrency > 1024) throw ConfigurationError("concurrency must be in [1, 1024]");
    if (base_url.empty()) throw ConfigurationError("llm base url is empty");
}

HttpChatClient::HttpChatClient(LlmClientConfig cfg)
    : cfg_(std::move(cfg)), slots_(static_cast<std::ptrdiff_t>(cfg_.concurrency)) {
    cfg_.validate();
    credential_ = http::credential_from_env(cfg_.credential_env);
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    std::map<std::string, std::string> headers;
    if (!credential_.empty()) headers["Authorization"] = "Bearer " + credential_;

    std::string payload = body.dump();
    if (cfg_.debug) std::cerr << "[llm] request " << payload << '\n';
    slots_.acquire();
    http::Response res;
    try {
        res = http::post_json(cfg_.base_url, "/chat/completions", payload, headers, cfg_.timeout);
    } catch (...) {
        slots_.release();
        throw;
    }
    slots_.release();
    if (cfg_.debug) std::cerr << "[llm] response " << res.status << ' ' << res.body << '\n';

    if (res.status == 429 || res.status >= 500) {
        throw TransportError("chat completion returned HTTP " + std::to_string(res.status));
    }
    if (res.status != 200) {
        throw GenerationError("chat completion returned HTTP " + std::to_string(res.status) + ": " + res.body);
    }
    try {
        auto j = nlohmann::json::parse(res.body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw GenerationError(std::string("malformed chat completion: ") + e.what());
    }
}

MockChatClient::MockChatClient(Responder responder, std::string id)
    : responder_(responder ? std::move(responder) : Responder(&MockChatClient::echo)), id_(std::move(id)) {}

void MockChatClient::add_canned(const std::string& prompt, std::string response) {
    std::lock_guard lock(mu_);
    canned_[text::fnv1a64(prompt)] = std::move(response);
}

void MockChatClient::push(std::string response) {
    std::lock_guard lock(mu_);
    script_.push_back({std::move(response), false});
}

void MockChatClient::push_failure(std::string message) {
    std::lock_guard lock(mu_);
    script_.push_back({std::move(message), true});
}

std::string MockChatClient::complete(const std::vector<ChatMessage>& messages) {
    Responder responder;
    {
        std::lock_guard lock(mu_);
        requests_.push_back(messages);
        if (!script_.empty()) {
            auto next = std::move(script_.front());
            script_.pop_front();
            if (next.failure) throw TransportError(next.text);
            return next.text;
        }
        if (!messages.empty()) {
            auto it = canned_.find(text::fnv1a64(messages.back().content));
            if (it != canned_.end()) return it->second;
        }
        responder = responder_;
    }
    return responder(messages);
}

std::size_t MockChatClient::calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
}

std::vector<std::vector<ChatMessage>> MockChatClient::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

std::string MockChatClient::echo(const std::vector<ChatMessage>& messages) {
    return messages.empty() ? std::string() : messages.back().content;
}

std::string complete_with_retry(LlmClient& client, const std::vector<ChatMessage>& messages, int max_retries,
                                std::chrono::milliseconds backoff) {
    if (max_retries < 0) throw ArgumentError("max_retries must be >= 0");
    for (int attempt = 0;; ++attempt) {
        try {
            std::string out = client.complete(messages);
            if (text::trim(out).empty()) throw GenerationError("empty completion from " + client.id());
            return out;
        } catch (const TransportError&) {
            if (attempt >= max_retries) throw;
            if (backoff.count() > 0) std::this_thread::sleep_for(backoff * (1LL << std::min(attempt, 20)));
        }
    }
}

}  // namespace xplain
