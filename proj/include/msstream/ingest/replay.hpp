#pragma once

#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "msstream/event.hpp"
#include "msstream/panel.hpp"

namespace msstream::ingest {

struct LatencySummary {
    double p50_s = 0.0;
    double p90_s = 0.0;
    double p99_s = 0.0;
    double max_s = 0.0;
    double mean_s = 0.0;
};

/// Nearest-rank quantiles of a latency sample.
inline LatencySummary summarize_latencies(std::vector<double> samples) {
    LatencySummary s;
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    auto q = [&](double p) {
        const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
        return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
    };
    s.p50_s = q(0.50);
    s.p90_s = q(0.90);
    s.p99_s = q(0.99);
    s.max_s = samples.back();
    double sum = 0.0;
    for (double v : samples) sum += v;
    s.mean_s = sum / static_cast<double>(samples.size());
    return s;
}

struct ReplayReport {
    std::size_t total = 0;
    std::size_t delivered = 0;
    bool aborted = false;
    std::string error;
    double elapsed_s = 0.0;
    std::vector<double> latencies_s;
    LatencySummary latency;
};

using EventSink = std::function<void(const StreamEvent&)>;

/// Delivers events in order. With a rate, event i is released no earlier than
/// start + i / rate; without one they go back to back. A throwing sink aborts
/// the replay and the partial report is returned.
inline ReplayReport replay(const std::vector<StreamEvent>& events, std::optional<double> rate_per_s,
                           const EventSink& sink) {
    using clock = std::chrono::steady_clock;
    ReplayReport rep;
    rep.total = events.size();
    const auto start = clock::now();
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (rate_per_s) {
            const auto due = start + std::chrono::duration_cast<clock::duration>(
                                         std::chrono::duration<double>(static_cast<double>(i) / *rate_per_s));
            std::this_thread::sleep_until(due);
        }
        const auto t0 = clock::now();
        try {
            sink(events[i]);
        } catch (const std::exception& e) {
            rep.aborted = true;
            rep.error = "event " + std::to_string(i) + ": " + e.what();
            break;
        }
        rep.latencies_s.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        ++rep.delivered;
    }
    rep.elapsed_s = std::chrono::duration<double>(clock::now() - start).count();
    rep.latency = summarize_latencies(rep.latencies_s);
    return rep;
}

/// One add_time_point event per panel column from `first_column` on, carrying timestamps.
inline std::vector<StreamEvent> columns_as_events(const RawPanel& panel, std::size_t first_column = 0) {
    std::vector<StreamEvent> out;
    for (std::size_t t = first_column; t < panel.n_times(); ++t) {
        const auto col = panel.column(t);
        out.push_back(StreamEvent::time_point({col.begin(), col.end()}, panel.timestamps()[t]));
    }
    return out;
}

/// The first `columns` columns of a panel.
inline RawPanel head_columns(const RawPanel& panel, std::size_t columns) {
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < panel.n_series(); ++n) {
        auto r = panel.row(n);
        r.resize(columns);
        rows.push_back(std::move(r));
    }
    std::vector<double> ts(panel.timestamps().begin(), panel.timestamps().begin() + static_cast<std::ptrdiff_t>(columns));
    return RawPanel::from_rows(panel.ids(), rows, std::move(ts));
}

}  // namespace msstream::ingest
