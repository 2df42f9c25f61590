#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xplain/instance.hpp"
#include "xplain/llm.hpp"
#include "xplain/pipeline.hpp"
#include "xplain/retriever.hpp"
#include "xplain/review.hpp"

namespace xplain::service {

// Produces a new instance for a flagged item from its current instance and all reviewer notes.
using Regenerator =
    std::function<ExplanationInstance(const ExplanationInstance& current, const std::vector<std::string>& notes)>;

struct ServiceDeps {
    std::shared_ptr<const Pipeline> pipeline;    // null: /v1/explain answers 503
    std::shared_ptr<const Retriever> retriever;  // null: /v1/retrieve answers 409
    std::shared_ptr<review::ReviewStore> store;  // null: review endpoints answer 503
    std::shared_ptr<LlmClient> evaluator;        // for /v1/score; falls back to the pipeline's
    Regenerator regenerate;                      // defaults to the pipeline's
};

struct ServiceOptions {
    bool review_mode = true;  // enqueue /v1/explain results
    std::size_t default_m = 3;
    std::size_t threads = 8;
};

// HTTP/1.1 JSON API under /v1.
class Service {
public:
    Service(ServiceDeps deps, ServiceOptions opts = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds (port 0 picks a free port), resumes pending regenerations and
    // serves on a background thread. Returns the bound port.
    int start(const std::string& host, int port);
    // Same, but serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

    // Blocks until the regeneration queue is empty and idle.
    void wait_for_regenerations();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace xplain::service
