#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "msstream/engine.hpp"
#include "msstream/error.hpp"
#include "msstream/service/json.hpp"

namespace msstream::service {

struct PushPolicy {
    std::size_t points_per_update = 10;
    double min_interval_s = 0.0;  ///< throttled deltas closer than this to the previous one are held back

    void validate() const {
        if (points_per_update < 1) throw ConfigError("points_per_update must be >= 1");
        if (!(min_interval_s >= 0.0)) throw ConfigError("min_interval must be >= 0");
    }
};

inline json push_policy_to_json(const PushPolicy& p) {
    return {{"points_per_update", p.points_per_update}, {"min_interval", p.min_interval_s}};
}

inline PushPolicy push_policy_from_json(const json& j, PushPolicy p = {}) {
    detail::object(j, "push");
    if (j.contains("points_per_update")) p.points_per_update = detail::count(j, "points_per_update");
    if (j.contains("min_interval")) p.min_interval_s = detail::number(j, "min_interval");
    p.validate();
    return p;
}

/// One server-sent event. `seq` is the SSE id; 0 for messages outside the history (heartbeats, resyncs).
struct PushMessage {
    std::uint64_t seq = 0;
    std::string event;
    std::uint64_t epoch = 0;
    std::string data;
};

inline std::string format_sse(const PushMessage& m) {
    std::string out;
    if (m.seq != 0) out += "id: " + std::to_string(m.seq) + "\n";
    out += "event: " + m.event + "\ndata: " + m.data + "\n\n";
    return out;
}

/// Bounded per-subscriber queue. Overflow marks the subscriber dropped; it must reconnect and resume.
class Subscription {
public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    /// Next message, or nullopt after `timeout` / once dropped or closed and drained.
    std::optional<PushMessage> next(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || dropped_ || closed_; });
        if (queue_.empty() || dropped_) return std::nullopt;
        auto m = std::move(queue_.front());
        queue_.pop_front();
        return m;
    }

    bool dropped() const {
        std::lock_guard lock(mu_);
        return dropped_;
    }

    bool closed() const {
        std::lock_guard lock(mu_);
        return closed_;
    }

    /// Last sequence number handed to this subscriber; the resume point after a drop.
    std::uint64_t last_seq() const {
        std::lock_guard lock(mu_);
        return last_seq_;
    }

private:
    friend class PushHub;

    void push(const PushMessage& m) {
        {
            std::lock_guard lock(mu_);
            if (dropped_ || closed_) return;
            if (queue_.size() >= capacity_) {
                dropped_ = true;
                queue_.clear();
            } else {
                queue_.push_back(m);
                if (m.seq != 0) last_seq_ = m.seq;
            }
        }
        cv_.notify_all();
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<PushMessage> queue_;
    std::uint64_t last_seq_ = 0;
    bool dropped_ = false;
    bool closed_ = false;
};

/// Turns engine notices into push messages and fans them out.
///
/// msplot_delta goes out every `points_per_update` added time points (the
/// counter restarts with each epoch) and right away on series add/remove and
/// explicit time point removal. recompute_done and loaded carry the full
/// snapshot. A bounded history backs Last-Event-ID resume.
class PushHub {
public:
    using Clock = std::chrono::steady_clock;

    explicit PushHub(PushPolicy policy = {}, std::size_t buffer = 256, std::size_t history = 1024,
                     std::function<Clock::time_point()> now = [] { return Clock::now(); })
        : policy_(policy), buffer_(buffer), history_cap_(history), now_(std::move(now)) {
        policy_.validate();
        if (buffer_ < 1) throw ConfigError("subscriber buffer must be >= 1");
    }

    PushPolicy policy() const {
        std::lock_guard lock(mu_);
        return policy_;
    }

    void set_policy(const PushPolicy& p) {
        p.validate();
        std::lock_guard lock(mu_);
        policy_ = p;
    }

    /// Feeds one engine notice together with the snapshot published alongside it.
    void on_notice(const EngineNotice& n, const MsSnapshot& snap) {
        using K = EngineNotice::Kind;
        std::lock_guard lock(mu_);
        if (n.epoch != counter_epoch_) {
            counter_epoch_ = n.epoch;
            counter_ = 0;
        }
        switch (n.kind) {
            case K::time_point_added:
                if (++counter_ >= policy_.points_per_update) {
                    counter_ = 0;
                    const auto now = now_();
                    if (last_delta_ && now - *last_delta_ < min_interval()) {
                        held_ = std::make_shared<MsSnapshot>(snap);
                    } else {
                        emit_delta_locked(snap, "time_points", {}, now);
                    }
                }
                break;
            case K::time_point_removed: emit_delta_locked(snap, "time_point_removed", {}, now_()); break;
            case K::series_added: emit_delta_locked(snap, "series_added", n.detail, now_()); break;
            case K::series_removed: emit_delta_locked(snap, "series_removed", n.detail, now_()); break;
            case K::recompute_started:
                publish_locked("recompute_started", n.epoch,
                               json{{"epoch", n.epoch}, {"t_count", n.t_count}, {"n_series", n.n_series}});
                break;
            case K::recompute_done:
            case K::loaded:
                held_.reset();
                publish_locked(n.kind == K::loaded ? "loaded" : "recompute_done", n.epoch, snapshot_to_json(snap));
                break;
            case K::degenerate_warning:
                publish_locked("degenerate_warning", n.epoch,
                               json{{"epoch", n.epoch}, {"t_count", n.t_count}, {"detail", n.detail}});
                break;
            case K::event_rejected:
                publish_locked("event_rejected", n.epoch, json{{"epoch", n.epoch}, {"detail", n.detail}});
                break;
        }
    }

    /// Releases a held-back delta once min_interval has passed. Call periodically.
    void tick() {
        std::lock_guard lock(mu_);
        if (!held_) return;
        const auto now = now_();
        if (last_delta_ && now - *last_delta_ < min_interval()) return;
        const auto snap = std::move(held_);
        held_.reset();
        emit_delta_locked(*snap, "time_points", {}, now);
    }

    /// New subscriber. A `last_event_id` still in the history replays what was missed;
    /// a stale id or any `since_epoch` starts the stream with a resync carrying `current`.
    std::shared_ptr<Subscription> subscribe(std::optional<std::uint64_t> last_event_id = std::nullopt,
                                            std::optional<std::uint64_t> since_epoch = std::nullopt,
                                            const MsSnapshot* current = nullptr) {
        std::lock_guard lock(mu_);
        bool need_resync = since_epoch.has_value();
        std::vector<const PushMessage*> backlog;
        if (last_event_id) {
            const bool covered = *last_event_id == seq_ ||
                                 (!history_.empty() && history_.front().seq <= *last_event_id + 1 && *last_event_id < seq_);
            if (covered) {
                for (const auto& m : history_)
                    if (m.seq > *last_event_id) backlog.push_back(&m);
                need_resync = false;
            } else {
                need_resync = true;
            }
        }
        // the replayed backlog does not eat into the live buffer
        auto sub = std::make_shared<Subscription>(buffer_ + backlog.size());
        for (const auto* m : backlog) sub->push(*m);
        if (need_resync && current) {
            sub->push(PushMessage{0, "resync", current->epoch, snapshot_to_json(*current).dump()});
        }
        if (closed_) sub->close();
        subs_.insert(sub);
        return sub;
    }

    void unsubscribe(const std::shared_ptr<Subscription>& sub) {
        std::lock_guard lock(mu_);
        subs_.erase(sub);
    }

    /// Closes every subscription; later subscriptions start closed.
    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        for (const auto& s : subs_) s->close();
    }

    std::size_t subscriber_count() const {
        std::lock_guard lock(mu_);
        return subs_.size();
    }

    std::uint64_t last_seq() const {
        std::lock_guard lock(mu_);
        return seq_;
    }

    std::vector<PushMessage> history() const {
        std::lock_guard lock(mu_);
        return {history_.begin(), history_.end()};
    }

    static PushMessage heartbeat() { return PushMessage{0, "heartbeat", 0, "{}"}; }

private:
    Clock::duration min_interval() const {
        return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(policy_.min_interval_s));
    }

    void emit_delta_locked(const MsSnapshot& snap, const char* reason, const std::string& id, Clock::time_point now) {
        held_.reset();
        last_delta_ = now;
        json j = snapshot_to_json(snap);
        j["reason"] = reason;
        if (!id.empty()) j["id"] = id;
        publish_locked("msplot_delta", snap.epoch, j);
    }

    void publish_locked(const char* event, std::uint64_t epoch, const json& data) {
        PushMessage m{++seq_, event, epoch, data.dump()};
        history_.push_back(m);
        while (history_.size() > history_cap_) history_.pop_front();
        for (const auto& s : subs_) s->push(m);
    }

    mutable std::mutex mu_;
    PushPolicy policy_;
    std::size_t buffer_;
    std::size_t history_cap_;
    std::function<Clock::time_point()> now_;
    std::uint64_t seq_ = 0;
    std::deque<PushMessage> history_;
    std::set<std::shared_ptr<Subscription>> subs_;
    std::uint64_t counter_epoch_ = 0;
    std::size_t counter_ = 0;
    std::optional<Clock::time_point> last_delta_;
    std::shared_ptr<MsSnapshot> held_;
    bool closed_ = false;
};

}  // namespace msstream::service
