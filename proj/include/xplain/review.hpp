#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xplain/evalkit.hpp"
#include "xplain/instance.hpp"

namespace xplain::review {

enum class Status { kPending, kApproved, kFlagged, kNeedsManualReview };

std::string to_string(Status s);  // pending | approved | flagged | needs-manual-review
Status status_from_string(const std::string& s);

struct ReviewItem {
    std::string id;
    ExplanationInstance instance;
    Status status = Status::kPending;
    std::optional<eval::LikertResponse> scores;
    std::vector<std::string> flags;
    std::vector<ExplanationInstance> history;  // instances replaced by regeneration, oldest first
    std::string last_error;                    // most recent regeneration failure

    std::size_t revision() const { return history.size(); }
    nlohmann::ordered_json to_json() const;
    static ReviewItem from_json(const nlohmann::json& j);
};

struct StoreOptions {
    std::size_t refinement_bound = 3;
    std::size_t compact_every = 200;  // events between automatic compactions; 0 disables
    std::chrono::seconds lease{900};
    bool sync = true;  // fdatasync every event
};

struct FlagOutcome {
    ReviewItem item;
    bool regenerate = false;  // caller should regenerate the explanation
};

// Review queue persisted as `snapshot.json` plus an append-only `events.log`
// in `dir`. Reopening the directory restores the exact item states.
// Thread-safe; operations on one item are serialized.
class ReviewStore {
public:
    explicit ReviewStore(std::filesystem::path dir, StoreOptions opts = {});
    ~ReviewStore();
    ReviewStore(const ReviewStore&) = delete;
    ReviewStore& operator=(const ReviewStore&) = delete;

    std::string enqueue(const ExplanationInstance& inst);

    // Oldest pending item not leased to another reviewer. A nonempty reviewer takes a lease.
    std::optional<ReviewItem> next(const std::string& reviewer = {});

    ReviewItem get(const std::string& id) const;  // NotFoundError
    std::vector<ReviewItem> items() const;

    // pending -> approved. ArgumentError on a partial response, StateError otherwise illegal.
    ReviewItem submit_scores(const std::string& id, eval::LikertResponse scores);

    // pending -> flagged, or needs-manual-review once the bound is reached.
    FlagOutcome flag(const std::string& id, const std::string& note,
                     std::optional<eval::LikertResponse> scores = std::nullopt);

    // flagged -> pending with the old instance appended to the history.
    ReviewItem complete_regeneration(const std::string& id, const ExplanationInstance& fresh);
    // Keeps the item flagged and records the error.
    ReviewItem fail_regeneration(const std::string& id, const std::string& error);

    std::vector<std::string> awaiting_regeneration() const;

    void compact();
    const std::filesystem::path& dir() const { return dir_; }
    const StoreOptions& options() const { return opts_; }
    // Canonical dump of every item, for comparisons.
    nlohmann::ordered_json state_json() const;

    // Exclusive lock for one item; serializes its operations.
    std::unique_lock<std::mutex> lock_item(const std::string& id);

private:
    struct Lease {
        std::string reviewer;
        std::chrono::steady_clock::time_point until;
    };

    void load();
    void apply(const nlohmann::json& ev);
    void append(nlohmann::ordered_json ev);
    void compact_locked();
    ReviewItem& find(const std::string& id);
    const ReviewItem& find(const std::string& id) const;

    std::filesystem::path dir_;
    StoreOptions opts_;
    mutable std::mutex mu_;
    std::map<std::string, ReviewItem> items_;
    std::vector<std::string> order_;
    std::map<std::string, std::unique_ptr<std::mutex>> item_mu_;
    std::map<std::string, Lease> leases_;
    std::uint64_t seq_ = 0;
    std::uint64_t next_id_ = 1;
    std::size_t since_compact_ = 0;
    int fd_ = -1;
};

}  // namespace xplain::review
