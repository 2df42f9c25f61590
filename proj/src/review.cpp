#include "xplain/review.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xplain/errors.hpp"

namespace xplain::review {

namespace fs = std::filesystem;

std::string to_string(Status s) {
    switch (s) {
        case Status::kPending: return "pending";
        case Status::kApproved: return "approved";
        case Status::kFlagged: return "flagged";
        case Status::kNeedsManualReview: return "needs-manual-review";
    }
    return "pending";
}

Status status_from_string(const std::string& s) {
    if (s == "pending") return Status::kPending;
    if (s == "approved") return Status::kApproved;
    if (s == "flagged") return Status::kFlagged;
    if (s == "needs-manual-review") return Status::kNeedsManualReview;
    throw ParseError("unknown review status: " + s);
}

nlohmann::ordered_json ReviewItem::to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["status"] = to_string(status);
    j["revision"] = revision();
    j["instance"] = xplain::to_json(instance);
    j["scores"] = scores ? scores->to_json() : nlohmann::ordered_json(nullptr);
    j["flags"] = flags;
    j["history"] = nlohmann::ordered_json::array();
    for (const auto& h : history) j["history"].push_back(xplain::to_json(h));
    j["last_error"] = last_error;
    return j;
}

ReviewItem ReviewItem::from_json(const nlohmann::json& j) {
    try {
        ReviewItem it;
        it.id = j.at("id").get<std::string>();
        it.status = status_from_string(j.at("status").get<std::string>());
        it.instance = instance_from_json(j.at("instance"));
        if (!j.at("scores").is_null()) it.scores = eval::LikertResponse::from_json(j.at("scores"));
        it.flags = j.at("flags").get<std::vector<std::string>>();
        for (const auto& h : j.at("history")) it.history.push_back(instance_from_json(h));
        it.last_error = j.value("last_error", std::string());
        return it;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed review item: ") + e.what());
    }
}

ReviewStore::ReviewStore(fs::path dir, StoreOptions opts) : dir_(std::move(dir)), opts_(opts) {
    fs::create_directories(dir_);
    load();
    fd_ = ::open((dir_ / "events.log").c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open review event log: " + std::string(std::strerror(errno)));
}

ReviewStore::~ReviewStore() {
    if (fd_ >= 0) ::close(fd_);
}

void ReviewStore::load() {
    auto snap = dir_ / "snapshot.json";
    if (fs::exists(snap)) {
        std::ifstream in(snap);
        nlohmann::json j;
        try {
            in >> j;
            seq_ = j.at("seq").get<std::uint64_t>();
            next_id_ = j.at("next_id").get<std::uint64_t>();
            for (const auto& item : j.at("items")) {
                auto it = ReviewItem::from_json(item);
                order_.push_back(it.id);
                item_mu_.emplace(it.id, std::make_unique<std::mutex>());
                items_.emplace(it.id, std::move(it));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("corrupt review snapshot: " + std::string(e.what()));
        }
    }
    auto log = dir_ / "events.log";
    if (!fs::exists(log)) return;
    std::ifstream in(log, std::ios::binary);
    std::string line;
    std::uintmax_t good_bytes = 0;
    std::size_t lineno = 0;
    bool torn = false;
    while (std::getline(in, line)) {
        ++lineno;
        bool complete = !in.eof();  // a final line without '\n' was cut short
        nlohmann::json ev;
        try {
            if (!complete) throw std::runtime_error("partial line");
            ev = nlohmann::json::parse(line);
        } catch (const std::exception&) {
            if (in.peek() == EOF) {
                torn = true;
                break;
            }
            throw ParseError("corrupt review event", lineno);
        }
        good_bytes += line.size() + 1;
        if (ev.at("seq").get<std::uint64_t>() <= seq_) continue;
        apply(ev);
        seq_ = ev.at("seq").get<std::uint64_t>();
        ++since_compact_;
    }
    in.close();
    if (torn) fs::resize_file(log, good_bytes);
}

void ReviewStore::apply(const nlohmann::json& ev) {
    const auto op = ev.at("op").get<std::string>();
    const auto id = ev.at("id").get<std::string>();
    if (op == "enqueue") {
        ReviewItem it;
        it.id = id;
        it.instance = instance_from_json(ev.at("instance"));
        order_.push_back(id);
        item_mu_.emplace(id, std::make_unique<std::mutex>());
        items_.emplace(id, std::move(it));
        next_id_ = std::max(next_id_, ev.at("next_id").get<std::uint64_t>());
        return;
    }
    auto& it = find(id);
    if (op == "scores") {
        it.scores = eval::LikertResponse::from_json(ev.at("scores"));
        it.status = Status::kApproved;
    } else if (op == "flag") {
        it.flags.push_back(ev.at("note").get<std::string>());
        if (ev.contains("scores")) it.scores = eval::LikertResponse::from_json(ev.at("scores"));
        it.status = status_from_string(ev.at("status").get<std::string>());
    } else if (op == "regenerated") {
        it.history.push_back(it.instance);
        it.instance = instance_from_json(ev.at("instance"));
        it.status = Status::kPending;
        it.scores.reset();
        it.last_error.clear();
    } else if (op == "regeneration_failed") {
        it.last_error = ev.at("error").get<std::string>();
    } else {
        throw ParseError("unknown review event: " + op);
    }
}

void ReviewStore::append(nlohmann::ordered_json ev) {
    ev["seq"] = ++seq_;
    std::string line = ev.dump() + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
        auto n = ::write(fd_, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error("review event write failed: " + std::string(std::strerror(errno)));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (opts_.sync) ::fdatasync(fd_);
    apply(nlohmann::json::parse(line));
    if (opts_.compact_every && ++since_compact_ >= opts_.compact_every) compact_locked();
}

ReviewItem& ReviewStore::find(const std::string& id) {
    auto it = items_.find(id);
    if (it == items_.end()) throw NotFoundError("no review item " + id);
    return it->second;
}

const ReviewItem& ReviewStore::find(const std::string& id) const {
    auto it = items_.find(id);
    if (it == items_.end()) throw NotFoundError("no review item " + id);
    return it->second;
}

std::unique_lock<std::mutex> ReviewStore::lock_item(const std::string& id) {
    std::mutex* m = nullptr;
    {
        std::lock_guard lock(mu_);
        auto it = item_mu_.find(id);
        if (it == item_mu_.end()) throw NotFoundError("no review item " + id);
        m = it->second.get();
    }
    return std::unique_lock<std::mutex>(*m);
}

std::string ReviewStore::enqueue(const ExplanationInstance& inst) {
    std::lock_guard lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "item-%06llu", static_cast<unsigned long long>(next_id_));
    std::string id = buf;
    append({{"op", "enqueue"}, {"id", id}, {"next_id", next_id_ + 1}, {"instance", xplain::to_json(inst)}});
    return id;
}

std::optional<ReviewItem> ReviewStore::next(const std::string& reviewer) {
    std::lock_guard lock(mu_);
    auto now = std::chrono::steady_clock::now();
    for (const auto& id : order_) {
        const auto& it = items_.at(id);
        if (it.status != Status::kPending) continue;
        auto lease = leases_.find(id);
        if (lease != leases_.end() && lease->second.until > now && lease->second.reviewer != reviewer) continue;
        if (!reviewer.empty()) leases_[id] = {reviewer, now + opts_.lease};
        return it;
    }
    return std::nullopt;
}

ReviewItem ReviewStore::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    return find(id);
}

std::vector<ReviewItem> ReviewStore::items() const {
    std::lock_guard lock(mu_);
    std::vector<ReviewItem> out;
    for (const auto& id : order_) out.push_back(items_.at(id));
    return out;
}

ReviewItem ReviewStore::submit_scores(const std::string& id, eval::LikertResponse scores) {
    auto item_lock = lock_item(id);
    std::lock_guard lock(mu_);
    auto& it = find(id);
    if (scores.instance.empty()) scores.instance = id;
    scores.validate();
    if (it.status != Status::kPending) throw StateError(id + " is " + to_string(it.status) + ", not pending");
    append({{"op", "scores"}, {"id", id}, {"scores", scores.to_json()}});
    leases_.erase(id);
    return find(id);
}

FlagOutcome ReviewStore::flag(const std::string& id, const std::string& note, std::optional<eval::LikertResponse> scores) {
    if (note.find_first_not_of(" \t\r\n") == std::string::npos) throw ArgumentError("flag note is empty");
    auto item_lock = lock_item(id);
    std::lock_guard lock(mu_);
    auto& it = find(id);
    if (it.status != Status::kPending) throw StateError(id + " is " + to_string(it.status) + ", not pending");
    if (scores) {
        if (scores->instance.empty()) scores->instance = id;
        scores->validate();
    }
    bool regenerate = it.revision() < opts_.refinement_bound;
    Status next = regenerate ? Status::kFlagged : Status::kNeedsManualReview;
    nlohmann::ordered_json ev{{"op", "flag"}, {"id", id}, {"note", note}, {"status", to_string(next)}};
    if (scores) ev["scores"] = scores->to_json();
    append(std::move(ev));
    leases_.erase(id);
    return {find(id), regenerate};
}

ReviewItem ReviewStore::complete_regeneration(const std::string& id, const ExplanationInstance& fresh) {
    auto item_lock = lock_item(id);
    std::lock_guard lock(mu_);
    auto& it = find(id);
    if (it.status != Status::kFlagged) throw StateError(id + " is " + to_string(it.status) + ", not flagged");
    append({{"op", "regenerated"}, {"id", id}, {"instance", xplain::to_json(fresh)}});
    return find(id);
}

ReviewItem ReviewStore::fail_regeneration(const std::string& id, const std::string& error) {
    auto item_lock = lock_item(id);
    std::lock_guard lock(mu_);
    find(id);
    append({{"op", "regeneration_failed"}, {"id", id}, {"error", error}});
    return find(id);
}

std::vector<std::string> ReviewStore::awaiting_regeneration() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& id : order_) {
        if (items_.at(id).status == Status::kFlagged) out.push_back(id);
    }
    return out;
}

void ReviewStore::compact() {
    std::lock_guard lock(mu_);
    compact_locked();
}

void ReviewStore::compact_locked() {
    nlohmann::ordered_json snap;
    snap["version"] = 1;
    snap["seq"] = seq_;
    snap["next_id"] = next_id_;
    snap["items"] = nlohmann::ordered_json::array();
    for (const auto& id : order_) snap["items"].push_back(items_.at(id).to_json());
    auto tmp = dir_ / "snapshot.json.tmp";
    {
        std::string body = snap.dump() + "\n";
        int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
        if (fd < 0) throw Error("cannot write review snapshot: " + std::string(std::strerror(errno)));
        const char* p = body.data();
        std::size_t left = body.size();
        while (left > 0) {
            auto n = ::write(fd, p, left);
            if (n < 0 && errno == EINTR) continue;
            if (n < 0) {
                ::close(fd);
                throw Error("review snapshot write failed: " + std::string(std::strerror(errno)));
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        ::fsync(fd);
        ::close(fd);
    }
    fs::rename(tmp, dir_ / "snapshot.json");
    // Events up to seq_ are now in the snapshot; replay skips them if truncation is lost.
    if (::ftruncate(fd_, 0) != 0) throw Error("cannot truncate review event log");
    if (opts_.sync) ::fdatasync(fd_);
    since_compact_ = 0;
}

nlohmann::ordered_json ReviewStore::state_json() const {
    std::lock_guard lock(mu_);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& id : order_) j.push_back(items_.at(id).to_json());
    return j;
}

}  // namespace xplain::review
