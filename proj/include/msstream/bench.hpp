#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msstream/error.hpp"
#include "msstream/outlyingness.hpp"
#include "msstream/panel.hpp"

namespace msstream::bench {

using Seconds = double;

struct BenchConfig {
    std::size_t n = 1000;
    std::size_t t = 20000;
    std::size_t runs = 10;            ///< samples per timed operation
    std::size_t recompute_runs = 3;   ///< full recomputes are slow; fewer samples
    std::uint64_t seed = 1;

    void validate() const {
        if (n < 3) throw ConfigError("bench needs n >= 3");
        if (t < 2) throw ConfigError("bench needs t >= 2");
        if (runs < 1 || recompute_runs < 1) throw ConfigError("runs must be >= 1");
    }
};

struct BenchReport {
    std::size_t n = 0;
    std::size_t t = 0;
    std::size_t runs = 0;
    std::size_t recompute_runs = 0;
    Seconds initial_fit_s = 0;
    Seconds partial_fit_s = 0;     ///< median add_time_point
    Seconds approx_add_s = 0;      ///< median add_series_approx
    Seconds full_recompute_s = 0;  ///< median batch fit with the extra series
    std::vector<Seconds> partial_fit_samples;
    std::vector<Seconds> approx_add_samples;
    std::vector<Seconds> full_recompute_samples;
};

/// Reference timings for N=1000, T=20000 on the original authors' hardware. Context only.
struct ReferenceRow {
    std::size_t n = 1000;
    std::size_t t = 20000;
    Seconds initial_fit_s = 1.3357;
    Seconds partial_fit_s = 0.0010;
};

inline Seconds median(std::vector<Seconds> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const auto m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

template <class F>
Seconds time_once(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<Seconds>(std::chrono::steady_clock::now() - t0).count();
}

/// N x T panel of standard normal readings.
inline RawPanel random_panel(std::size_t n, std::size_t t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<std::vector<double>> rows(n, std::vector<double>(t));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("s" + std::to_string(i));
        for (auto& v : rows[i]) v = d(rng);
    }
    return RawPanel::from_rows(std::move(ids), rows);
}

/// Latency of `runs` successive add_time_point calls on a fitted model.
inline std::vector<Seconds> time_partial_fits(MsModel& model, std::size_t runs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<double> col(model.panel().n_series());
    std::vector<Seconds> out;
    for (std::size_t r = 0; r < runs; ++r) {
        for (auto& v : col) v = d(rng);
        out.push_back(time_once([&] { model.add_time_point(col); }));
    }
    return out;
}

/// A fresh series drawn like the panel's rows: standard normal readings.
inline std::vector<double> newcomer(std::size_t t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<double> v(t);
    for (auto& x : v) x = d(rng);
    return v;
}

/// Latency of `runs` approximate admissions; each newcomer is removed again (untimed).
inline std::vector<Seconds> time_approx_adds(MsModel& model, std::size_t runs, std::uint64_t seed) {
    std::vector<Seconds> out;
    for (std::size_t r = 0; r < runs; ++r) {
        if (model.recompute_due()) model.fit(model.panel());
        const auto values = newcomer(model.panel().n_times(), seed + r);
        const std::string id = "bench_newcomer_" + std::to_string(r);
        out.push_back(time_once([&] { model.add_series_approx(id, values); }));
        model.remove_series(id);
    }
    if (model.recompute_due()) model.fit(model.panel());
    return out;
}

/// Latency of full batch fits of the panel with one extra series, the exact alternative to approximate admission.
inline std::vector<Seconds> time_full_recomputes(const RawPanel& panel, std::size_t runs, std::uint64_t seed) {
    RawPanel grown = panel;
    grown.append_row("bench_newcomer", newcomer(panel.n_times(), seed));
    std::vector<Seconds> out;
    for (std::size_t r = 0; r < runs; ++r) {
        out.push_back(time_once([&] {
            auto fit = batch_fit(grown);
            if (fit.state.size() != grown.n_series()) throw Error("batch fit size mismatch");
        }));
    }
    return out;
}

inline BenchReport run_bench(const BenchConfig& cfg) {
    cfg.validate();
    BenchReport rep;
    rep.n = cfg.n;
    rep.t = cfg.t;
    rep.runs = cfg.runs;
    rep.recompute_runs = cfg.recompute_runs;
    auto panel = random_panel(cfg.n, cfg.t, cfg.seed);
    MsModel model;
    rep.initial_fit_s = time_once([&] { model.fit(std::move(panel)); });
    rep.full_recompute_samples = time_full_recomputes(model.panel(), cfg.recompute_runs, cfg.seed + 1000);
    rep.approx_add_samples = time_approx_adds(model, cfg.runs, cfg.seed + 2000);
    rep.partial_fit_samples = time_partial_fits(model, cfg.runs, cfg.seed + 3000);
    rep.partial_fit_s = median(rep.partial_fit_samples);
    rep.approx_add_s = median(rep.approx_add_samples);
    rep.full_recompute_s = median(rep.full_recompute_samples);
    return rep;
}

inline nlohmann::json to_json(const BenchReport& r) {
    const ReferenceRow ref;
    return {{"n", r.n},
            {"t", r.t},
            {"runs", r.runs},
            {"recompute_runs", r.recompute_runs},
            {"initial_fit_s", r.initial_fit_s},
            {"partial_fit_s", r.partial_fit_s},
            {"approx_add_s", r.approx_add_s},
            {"full_recompute_s", r.full_recompute_s},
            {"approx_speedup", r.approx_add_s > 0 ? r.full_recompute_s / r.approx_add_s : 0.0},
            {"samples",
             {{"partial_fit_s", r.partial_fit_samples},
              {"approx_add_s", r.approx_add_samples},
              {"full_recompute_s", r.full_recompute_samples}}},
            {"reference",
             {{"n", ref.n},
              {"t", ref.t},
              {"initial_fit_s", ref.initial_fit_s},
              {"partial_fit_s", ref.partial_fit_s},
              {"note", "published figures from different hardware; context only"}}}};
}

}  // namespace msstream::bench
