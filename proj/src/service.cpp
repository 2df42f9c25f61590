#include "xplain/service.hpp"

#include <condition_variable>
#include <deque>
#include <iostream>
#include <set>
#include <thread>

#include "httplib.h"
#include "xplain/errors.hpp"

namespace xplain::service {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reply(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, ordered_json{{"error", message}});
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const json::exception& e) {
            fail(res, 400, std::string("malformed body: ") + e.what());
        } catch (const ArgumentError& e) {
            fail(res, 400, e.what());
        } catch (const ParseError& e) {
            fail(res, 400, e.what());
        } catch (const SchemaError& e) {
            fail(res, 400, e.what());
        } catch (const NoSeedEntities& e) {
            fail(res, 422, e.what());
        } catch (const NotFoundError& e) {
            fail(res, 404, e.what());
        } catch (const StateError& e) {
            fail(res, 409, e.what());
        } catch (const TransportError& e) {
            fail(res, 502, e.what());
        } catch (const GenerationError& e) {
            fail(res, 502, e.what());
        } catch (const EvaluationError& e) {
            fail(res, 502, e.what());
        } catch (const std::exception& e) {
            fail(res, 500, e.what());
        }
    };
}

json parse_body(const httplib::Request& req) {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw ArgumentError("request body must be an object");
    return j;
}

std::vector<std::string> string_list(const json& j, const char* name) {
    if (!j.contains(name) || !j.at(name).is_array()) throw ArgumentError(std::string(name) + " must be an array");
    return j.at(name).get<std::vector<std::string>>();
}

SelectionWeights weights_from(const json& j) {
    SelectionWeights w;
    if (j.is_array()) {
        if (j.size() != 4) throw ArgumentError("weights array needs four values");
        w = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    } else if (j.is_object()) {
        w.faithfulness = j.value("faithfulness", 0.0);
        w.completeness = j.value("completeness", 0.0);
        w.accuracy = j.value("accuracy", 0.0);
        w.overall = j.value("overall", 0.0);
    } else {
        throw ArgumentError("weights must be an array or an object");
    }
    w.validate();
    return w;
}

}  // namespace

struct Service::Impl {
    ServiceDeps deps;
    ServiceOptions opts;
    httplib::Server server;
    std::thread server_thread;

    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> queue;
    std::set<std::string> queued;
    bool busy = false;
    bool stopping = false;
    std::thread worker;

    Impl(ServiceDeps d, ServiceOptions o) : deps(std::move(d)), opts(o) {
        if (!deps.regenerate && deps.pipeline) {
            auto p = deps.pipeline;
            deps.regenerate = [p](const ExplanationInstance& cur, const std::vector<std::string>& notes) {
                return p->regenerate(cur, notes);
            };
        }
        if (!deps.evaluator && deps.pipeline) deps.evaluator = deps.pipeline->components().evaluator;
        routes();
        worker = std::thread([this] { work(); });
    }

    ~Impl() {
        {
            std::lock_guard lock(mu);
            stopping = true;
        }
        cv.notify_all();
        server.stop();
        if (server_thread.joinable()) server_thread.join();
        if (worker.joinable()) worker.join();
    }

    review::ReviewStore& store() {
        if (!deps.store) throw ConfigurationError("review store not configured");
        return *deps.store;
    }

    void schedule(const std::string& id) {
        {
            std::lock_guard lock(mu);
            if (!queued.insert(id).second) return;  // already waiting
            queue.push_back(id);
        }
        cv.notify_all();
    }

    void work() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (stopping) return;
                id = queue.front();
                queue.pop_front();
                busy = true;
            }
            regenerate_one(id);
            {
                std::lock_guard lock(mu);
                queued.erase(id);
                busy = false;
            }
            cv.notify_all();
        }
    }

    void regenerate_one(const std::string& id) {
        try {
            auto item = store().get(id);
            if (item.status != review::Status::kFlagged) return;
            if (!deps.regenerate) throw ConfigurationError("no regenerator configured");
            auto fresh = deps.regenerate(item.instance, item.flags);
            store().complete_regeneration(id, fresh);
        } catch (const std::exception& e) {
            std::cerr << "[service] regeneration of " << id << " failed: " << e.what() << '\n';
            try {
                store().fail_regeneration(id, e.what());
            } catch (const std::exception&) {
            }
        }
    }

    void routes() {
        server.new_task_queue = [n = opts.threads] { return new httplib::ThreadPool(n); };
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Get("/v1/health", guarded([this](const httplib::Request&, httplib::Response& res) {
            ordered_json j{{"status", "ok"},
                           {"pipeline", static_cast<bool>(deps.pipeline)},
                           {"retriever", static_cast<bool>(deps.retriever)},
                           {"review_items", deps.store ? deps.store->items().size() : 0}};
            reply(res, 200, j);
        }));

        server.Post("/v1/explain", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!deps.pipeline) return fail(res, 503, "no model/graph loaded");
            auto body = parse_body(req);
            std::string question = body.at("question").get<std::string>();
            auto options = string_list(body, "options");
            std::optional<std::string> label;
            if (body.contains("label") && !body["label"].is_null()) label = body["label"].get<std::string>();
            std::optional<PruneOptions> prune;
            if (body.contains("config") && body["config"].is_object()) {
                PruneOptions p = deps.pipeline->config().prune;
                const auto& c = body["config"];
                if (c.contains("n")) p.max_nodes = c["n"].get<std::size_t>();
                if (c.contains("hops")) p.hops = c["hops"].get<int>();
                prune = p;
            }
            auto out = deps.pipeline->run(question, options, label, prune);
            if (opts.review_mode && deps.store) res.set_header("X-Review-Item", deps.store->enqueue(out.instance));
            reply(res, 200, to_json(out.instance));
        }));

        server.Post("/v1/retrieve", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!deps.retriever) return fail(res, 409, "no retrieval index loaded");
            auto body = parse_body(req);
            QAContext qa{body.at("question").get<std::string>(), string_list(body, "options"), {}};
            qa.validate();
            std::size_t m = opts.default_m;
            if (body.contains("m")) {
                auto mv = body["m"].get<long long>();
                if (mv < 1) throw ArgumentError("m must be at least 1");
                m = static_cast<std::size_t>(mv);
            }
            SelectionWeights w;
            if (body.contains("weights")) w = weights_from(body["weights"]);
            auto result = deps.retriever->retrieve(qa, m, w);
            ordered_json demos = ordered_json::array();
            for (const auto& d : result.demos) {
                demos.push_back({{"rank", d.rank},
                                 {"similarity", d.similarity},
                                 {"explanation_id", d.explanation_id},
                                 {"instance", to_json(d.instance)}});
            }
            reply(res, 200, ordered_json{{"demos", demos}, {"prompt", result.prompt}});
        }));

        server.Post("/v1/score", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!deps.evaluator) return fail(res, 503, "no evaluator configured");
            auto inst = instance_from_json(parse_body(req));
            auto s = score_instance(inst, *deps.evaluator);
            reply(res, 200,
                  ordered_json{{"debugger_score", render(s)},
                               {"faithfulness", s.faithfulness},
                               {"completeness", s.completeness},
                               {"accuracy", s.accuracy},
                               {"overall", s.overall()}});
        }));

        server.Get("/v1/review", guarded([this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, ordered_json{{"items", store().state_json()}});
        }));

        server.Get("/v1/review/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto item = store().next(req.get_param_value("reviewer"));
            if (!item) {
                res.status = 204;
                return;
            }
            reply(res, 200, item->to_json());
        }));

        server.Get(R"(/v1/review/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, store().get(req.matches[1]).to_json());
        }));

        server.Post(R"(/v1/review/([^/]+)/scores)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string id = req.matches[1];
            store().get(id);  // 404 before body validation
            auto scores = eval::LikertResponse::from_json(parse_body(req));
            reply(res, 200, store().submit_scores(id, std::move(scores)).to_json());
        }));

        server.Post(R"(/v1/review/([^/]+)/flag)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string id = req.matches[1];
            store().get(id);
            auto body = parse_body(req);
            if (!body.contains("note") || !body["note"].is_string()) throw ArgumentError("flag needs a note");
            std::optional<eval::LikertResponse> scores;
            if (body.contains("scores") && !body["scores"].is_null()) {
                scores = eval::LikertResponse::from_json(body["scores"]);
            }
            auto outcome = store().flag(id, body["note"].get<std::string>(), scores);
            if (outcome.regenerate) schedule(id);
            reply(res, outcome.regenerate ? 202 : 200, outcome.item.to_json());
        }));
    }

    int bind(const std::string& host, int port) {
        if (deps.store) {
            for (const auto& id : deps.store->awaiting_regeneration()) schedule(id);
        }
        if (port == 0) return server.bind_to_any_port(host);
        if (!server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
        return port;
    }
};

Service::Service(ServiceDeps deps, ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(deps), opts)) {}

Service::~Service() = default;

int Service::start(const std::string& host, int port) {
    int bound = impl_->bind(host, port);
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void Service::run(const std::string& host, int port) {
    impl_->bind(host, port);
    impl_->server.listen_after_bind();
}

void Service::stop() { impl_->server.stop(); }

void Service::wait_for_regenerations() {
    std::unique_lock lock(impl_->mu);
    impl_->cv.wait(lock, [&] { return impl_->queue.empty() && !impl_->busy; });
}

}  // namespace xplain::service
