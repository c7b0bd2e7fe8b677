#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "msstream/classify.hpp"
#include "msstream/drift.hpp"
#include "msstream/event.hpp"
#include "msstream/outlyingness.hpp"
#include "msstream/panel.hpp"

namespace msstream {

/// Immutable MS-plot view taken from a single epoch.
struct MsSnapshot {
    std::uint64_t epoch = 0;
    std::size_t t_count = 0;
    std::vector<MsPoint> points;
    std::size_t approx_pending = 0;
    std::size_t degenerate_columns = 0;

    bool empty() const { return points.empty(); }
    friend bool operator==(const MsSnapshot&, const MsSnapshot&) = default;
};

struct EngineNotice {
    enum class Kind {
        loaded,
        time_point_added,
        time_point_removed,
        series_added,
        series_removed,
        recompute_started,
        recompute_done,
        degenerate_warning,
        event_rejected,
    };
    Kind kind;
    std::uint64_t epoch = 0;
    std::size_t t_count = 0;
    std::size_t n_series = 0;
    std::string detail;
};

inline const char* to_string(EngineNotice::Kind k) {
    using K = EngineNotice::Kind;
    switch (k) {
        case K::loaded: return "loaded";
        case K::time_point_added: return "time_point_added";
        case K::time_point_removed: return "time_point_removed";
        case K::series_added: return "series_added";
        case K::series_removed: return "series_removed";
        case K::recompute_started: return "recompute_started";
        case K::recompute_done: return "recompute_done";
        case K::degenerate_warning: return "degenerate_warning";
        case K::event_rejected: return "event_rejected";
    }
    return "unknown";
}

struct EngineOptions {
    DriftConfig drift;
    ClassifyBands bands;
    std::optional<std::size_t> retention_window;
    /// Run full recomputes on the worker thread. When false they run inline inside apply().
    bool background = true;
    /// Called on the worker right before a recompute starts computing. Test seam.
    std::function<void()> before_recompute;
};

struct ApplyOutcome {
    bool queued = false;               ///< deferred until the in-flight recompute lands
    std::optional<MsPoint> admitted;   ///< approximate point for add_series
    std::optional<DriftScore> drift;   ///< drift score for add_series / remove_series
    bool recompute_triggered = false;
};

/// Thread-safe owner of an MsModel.
///
/// One writer at a time: every mutation takes the writer lock. Readers call
/// snapshot(), which never blocks on a running recompute. A full recompute runs
/// on a worker thread against the frozen panel; events arriving meanwhile are
/// queued and replayed onto the fresh state before it is published, so
/// incremental and progressive updates never interleave.
class Engine {
public:
    using Listener = std::function<void(const EngineNotice&)>;

    explicit Engine(EngineOptions options = {}) : opts_(std::move(options)), model_(opts_.drift) {
        opts_.bands.validate();
        model_.set_retention(opts_.retention_window);
        snapshot_ = std::make_shared<const MsSnapshot>();
        if (opts_.background) worker_ = std::thread([this] { worker_loop(); });
    }

    ~Engine() {
        {
            std::lock_guard lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        if (worker_.joinable()) worker_.join();
    }

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Replaces the whole panel with a batch fit. Waits for any in-flight recompute.
    void load(RawPanel panel) {
        std::unique_lock lock(mu_);
        idle_cv_.wait(lock, [&] { return !in_flight_; });
        queue_.clear();
        panel.retention_window = opts_.retention_window;
        model_.fit(std::move(panel));
        projected_n_ = model_.panel().n_series();
        projected_t_ = model_.panel().n_times();
        publish_locked();
        std::vector<EngineNotice> notices{notice(EngineNotice::Kind::loaded)};
        emit_locked(notices);
    }

    /// Validates and applies one event, or queues it while a recompute is running.
    /// Throws on invalid events without touching state.
    ApplyOutcome apply(const StreamEvent& ev) {
        std::unique_lock lock(mu_);
        if (in_flight_) {
            validate_projected(ev);
            queue_.push_back(ev);
            ApplyOutcome out;
            out.queued = true;
            return out;
        }
        std::vector<EngineNotice> notices;
        auto out = apply_locked(ev, notices);
        publish_locked();
        emit_locked(notices);
        if (model_.recompute_due()) out.recompute_triggered = trigger_locked(lock);
        return out;
    }

    /// Schedules a full recompute. Returns false when one is already in flight (coalesced).
    bool request_recompute() {
        std::unique_lock lock(mu_);
        if (model_.empty()) return false;
        return trigger_locked(lock);
    }

    std::shared_ptr<const MsSnapshot> snapshot() const {
        std::lock_guard lock(snap_mu_);
        return snapshot_;
    }

    bool recomputing() const {
        std::lock_guard lock(mu_);
        return in_flight_;
    }

    /// Blocks until no recompute is running and nothing is queued.
    void wait_idle() {
        std::unique_lock lock(mu_);
        idle_cv_.wait(lock, [&] { return !in_flight_ && queue_.empty(); });
    }

    std::size_t subscribe(Listener listener) {
        std::lock_guard lock(mu_);
        const auto id = next_listener_++;
        listeners_.emplace(id, std::move(listener));
        return id;
    }

    void unsubscribe(std::size_t id) {
        std::lock_guard lock(mu_);
        listeners_.erase(id);
    }

    /// Runs `f(const RawPanel&)` with the panel held stable.
    template <class F>
    auto with_panel(F&& f) const {
        std::lock_guard lock(mu_);
        return std::forward<F>(f)(model_.panel());
    }

    /// Runs `f(const MsModel&)` under the writer lock; panel and state belong to one epoch.
    template <class F>
    auto with_model(F&& f) const {
        std::lock_guard lock(mu_);
        return std::forward<F>(f)(model_);
    }

    ClassifyBands bands() const {
        std::lock_guard lock(mu_);
        return opts_.bands;
    }

    void set_bands(const ClassifyBands& bands) {
        bands.validate();
        std::lock_guard lock(mu_);
        opts_.bands = bands;
        if (!in_flight_) publish_locked();
    }

    DriftConfig drift() const {
        std::lock_guard lock(mu_);
        return model_.drift_config();
    }

    void set_drift(const DriftConfig& cfg) {
        std::lock_guard lock(mu_);
        model_.set_drift_config(cfg);
    }

    std::uint64_t recompute_count() const {
        std::lock_guard lock(mu_);
        return recomputes_;
    }

private:
    EngineNotice notice(EngineNotice::Kind kind, std::string detail = {}) const {
        return EngineNotice{kind, model_.state().epoch, model_.state().t_count, model_.panel().n_series(),
                            std::move(detail)};
    }

    void validate_projected(const StreamEvent& ev) {
        switch (ev.kind) {
            case EventKind::add_time_point:
                if (projected_n_ == 0) throw ConfigError("no series loaded");
                if (ev.values.size() != projected_n_) {
                    throw DataError("time point has " + std::to_string(ev.values.size()) + " readings, expected " +
                                    std::to_string(projected_n_));
                }
                require_finite(ev.values);
                projected_t_ += 1;
                break;
            case EventKind::add_series:
                if (projected_t_ != 0 && ev.values.size() != projected_t_) {
                    throw DataError("series '" + ev.id + "' has " + std::to_string(ev.values.size()) +
                                    " readings, expected " + std::to_string(projected_t_));
                }
                require_finite(ev.values);
                projected_n_ += 1;
                break;
            case EventKind::remove_time_point:
                if (ev.index >= projected_t_) throw ConfigError("time index out of range");
                if (projected_t_ <= 1) throw ConfigError("cannot remove the last remaining time point");
                projected_t_ -= 1;
                break;
            case EventKind::remove_series:
                if (projected_n_ == 0) throw DataError("unknown series id '" + ev.id + "'");
                projected_n_ -= 1;
                break;
        }
    }

    ApplyOutcome apply_locked(const StreamEvent& ev, std::vector<EngineNotice>& notices) {
        using K = EngineNotice::Kind;
        ApplyOutcome out;
        switch (ev.kind) {
            case EventKind::add_time_point: {
                const auto stats = model_.add_time_point(ev.values, ev.ts);
                notices.push_back(notice(K::time_point_added));
                if (stats.degenerate) {
                    notices.push_back(notice(K::degenerate_warning, "cross-section with zero MAD at t_count=" +
                                                                        std::to_string(model_.state().t_count)));
                }
                break;
            }
            case EventKind::remove_time_point:
                model_.remove_time_point(ev.index);
                notices.push_back(notice(K::time_point_removed));
                break;
            case EventKind::add_series: {
                const bool was_empty = model_.empty();
                auto adm = model_.add_series_approx(ev.id, ev.values);
                out.admitted = adm.point;
                if (!was_empty) out.drift = adm.drift;
                notices.push_back(notice(K::series_added, ev.id));
                break;
            }
            case EventKind::remove_series: {
                auto rem = model_.remove_series(ev.id);
                out.drift = rem.drift;
                notices.push_back(notice(K::series_removed, ev.id));
                break;
            }
        }
        projected_n_ = model_.panel().n_series();
        projected_t_ = model_.panel().n_times();
        return out;
    }

    bool trigger_locked(std::unique_lock<std::mutex>& lock) {
        if (in_flight_) return false;
        in_flight_ = true;
        std::vector<EngineNotice> started{notice(EngineNotice::Kind::recompute_started)};
        emit_locked(started);
        if (opts_.background) {
            job_pending_ = true;
            cv_.notify_all();
        } else {
            lock.unlock();
            if (opts_.before_recompute) opts_.before_recompute();
            auto result = batch_fit(model_.panel());
            lock.lock();
            finish_locked(std::move(result), lock);
        }
        return true;
    }

    void worker_loop() {
        std::unique_lock lock(mu_);
        for (;;) {
            cv_.wait(lock, [&] { return stopping_ || job_pending_; });
            if (stopping_) return;
            job_pending_ = false;
            lock.unlock();
            if (opts_.before_recompute) opts_.before_recompute();
            // The panel is frozen while in_flight_ is set: writers queue instead of mutating.
            auto result = batch_fit(model_.panel());
            lock.lock();
            finish_locked(std::move(result), lock);
        }
    }

    void finish_locked(FitResult result, std::unique_lock<std::mutex>& lock) {
        model_.install(std::move(result));
        ++recomputes_;
        std::vector<EngineNotice> replayed;
        while (!queue_.empty()) {
            auto ev = std::move(queue_.front());
            queue_.pop_front();
            try {
                apply_locked(ev, replayed);
            } catch (const std::exception& e) {
                replayed.push_back(notice(EngineNotice::Kind::event_rejected, e.what()));
            }
        }
        projected_n_ = model_.panel().n_series();
        projected_t_ = model_.panel().n_times();
        in_flight_ = false;
        publish_locked();
        std::vector<EngineNotice> done{notice(EngineNotice::Kind::recompute_done)};
        emit_locked(done);
        emit_locked(replayed);
        if (model_.recompute_due()) trigger_locked(lock);
        idle_cv_.notify_all();
    }

    void publish_locked() {
        auto snap = std::make_shared<MsSnapshot>();
        snap->epoch = model_.state().epoch;
        snap->t_count = model_.state().t_count;
        if (!model_.empty()) snap->points = model_.points(opts_.bands);
        snap->approx_pending = model_.approx_count();
        snap->degenerate_columns = model_.degenerate_columns();
        std::lock_guard lock(snap_mu_);
        snapshot_ = std::move(snap);
    }

    void emit_locked(const std::vector<EngineNotice>& notices) {
        for (const auto& n : notices)
            for (auto& [id, l] : listeners_) l(n);
    }

    EngineOptions opts_;
    MsModel model_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    mutable std::mutex snap_mu_;
    std::shared_ptr<const MsSnapshot> snapshot_;
    std::deque<StreamEvent> queue_;
    std::size_t projected_n_ = 0;
    std::size_t projected_t_ = 0;
    bool in_flight_ = false;
    bool job_pending_ = false;
    bool stopping_ = false;
    std::uint64_t recomputes_ = 0;
    std::map<std::size_t, Listener> listeners_;
    std::size_t next_listener_ = 0;
    std::thread worker_;
};

}  // namespace msstream
