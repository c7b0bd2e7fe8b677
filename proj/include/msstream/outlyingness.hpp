#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msstream/classify.hpp"
#include "msstream/cross_section.hpp"
#include "msstream/drift.hpp"
#include "msstream/error.hpp"
#include "msstream/panel.hpp"

namespace msstream {

/// Running magnitude/shape outlyingness of every series.
///
/// Each series keeps the sums of O[t] and O[t]^2 over the folded time points, so
/// MO = sum/T and FO = sum_sq/T with uniform weights 1/T. Adding a time point
/// then costs one O evaluation per series: MO' = (T*MO + O)/(T+1), and likewise for FO.
/// Sums are Neumaier-compensated: a degenerate column contributes O of order 1e12,
/// and removing it again must not wipe out the remaining low-order digits.
struct OutlyingnessState {
    std::vector<double> sum_o;
    std::vector<double> sum_o2;
    std::vector<double> comp_o;   ///< compensation terms for sum_o
    std::vector<double> comp_o2;  ///< compensation terms for sum_o2
    std::vector<bool> approx;
    std::size_t t_count = 0;
    std::uint64_t epoch = 0;

    std::size_t size() const { return sum_o.size(); }
    double mo(std::size_t n) const { return (sum_o[n] + comp_o[n]) / static_cast<double>(t_count); }
    double fo(std::size_t n) const { return (sum_o2[n] + comp_o2[n]) / static_cast<double>(t_count); }

    /// Adds `sign`*O to series n.
    void fold(std::size_t n, double o, double sign = 1.0) {
        add(sum_o[n], comp_o[n], sign * o);
        add(sum_o2[n], comp_o2[n], sign * (o * o));
    }

    void resize(std::size_t n) {
        sum_o.assign(n, 0.0);
        sum_o2.assign(n, 0.0);
        comp_o.assign(n, 0.0);
        comp_o2.assign(n, 0.0);
        approx.assign(n, false);
    }

    void push_back(double s1, double c1, double s2, double c2, bool is_approx) {
        sum_o.push_back(s1);
        comp_o.push_back(c1);
        sum_o2.push_back(s2);
        comp_o2.push_back(c2);
        approx.push_back(is_approx);
    }

    void erase(std::size_t n) {
        const auto pos = static_cast<std::ptrdiff_t>(n);
        sum_o.erase(sum_o.begin() + pos);
        sum_o2.erase(sum_o2.begin() + pos);
        comp_o.erase(comp_o.begin() + pos);
        comp_o2.erase(comp_o2.begin() + pos);
        approx.erase(approx.begin() + pos);
    }

    static void add(double& s, double& c, double x) {
        const double t = s + x;
        c += std::fabs(s) >= std::fabs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }

    /// FO - MO^2; may dip below zero by rounding.
    double vo_raw(std::size_t n) const {
        const double m = mo(n);
        return fo(n) - m * m;
    }
    double vo(std::size_t n) const {
        const double v = vo_raw(n);
        return v > 0.0 ? v : 0.0;
    }
};

struct FitResult {
    OutlyingnessState state;
    std::vector<CrossSectionStats> stats;
};

/// Exact MO/FO of every series over the whole panel.
inline FitResult batch_fit(const RawPanel& panel) {
    if (panel.empty()) throw ConfigError("cannot fit an empty panel");
    const std::size_t n = panel.n_series();
    const std::size_t t_count = panel.n_times();
    FitResult out;
    out.state.resize(n);
    out.state.t_count = t_count;
    out.stats.reserve(t_count);
    std::vector<double> scratch;
    for (std::size_t t = 0; t < t_count; ++t) {
        const auto col = panel.column(t);
        const auto stats = cross_section_stats(col, scratch);
        const double denom = stats.denominator();
        for (std::size_t i = 0; i < n; ++i) {
            const double o = (col[i] - stats.z) / denom;
            out.state.fold(i, o);
        }
        out.stats.push_back(stats);
    }
    return out;
}

struct ApproxAdmission {
    MsPoint point;
    DriftScore drift;
    bool recompute_due = false;
};

struct SeriesRemoval {
    DriftScore drift;
    bool recompute_due = false;
};

/// Panel plus its cached cross-sections and outlyingness state. Single-threaded;
/// the engine wraps it for concurrent use.
class MsModel {
public:
    explicit MsModel(DriftConfig drift = {}) : drift_(drift) { drift_.validate(); }

    /// Batch-fits `panel` and installs it. Bumps the epoch.
    void fit(RawPanel panel) {
        if (!panel.retention_window) panel.retention_window = panel_.retention_window;
        auto result = batch_fit(panel);
        panel_ = std::move(panel);
        install(std::move(result));
    }

    /// Replaces state and cache with a batch result computed over the current panel.
    void install(FitResult result) {
        const auto epoch = state_.epoch + 1;
        state_ = std::move(result.state);
        state_.epoch = epoch;
        stats_ = std::move(result.stats);
        degenerate_columns_ = 0;
        for (const auto& s : stats_) degenerate_columns_ += s.degenerate ? 1 : 0;
        approx_count_ = 0;
        recompute_due_ = false;
    }

    bool empty() const { return panel_.empty(); }
    const RawPanel& panel() const { return panel_; }
    const OutlyingnessState& state() const { return state_; }
    std::span<const CrossSectionStats> stats() const { return stats_; }
    const DriftConfig& drift_config() const { return drift_; }
    void set_drift_config(const DriftConfig& cfg) {
        cfg.validate();
        drift_ = cfg;
    }
    std::size_t approx_count() const { return approx_count_; }
    std::size_t degenerate_columns() const { return degenerate_columns_; }
    bool recompute_due() const { return recompute_due_; }
    void set_retention(std::optional<std::size_t> window) { panel_.retention_window = window; }

    /// Folds in one new column. O(N); exact. Returns the new column's stats.
    CrossSectionStats add_time_point(std::span<const double> column, std::optional<double> ts = std::nullopt) {
        if (empty()) throw ConfigError("no series loaded; add a series or load a panel first");
        if (column.size() != panel_.n_series()) {
            throw DataError("time point has " + std::to_string(column.size()) + " readings, expected " +
                            std::to_string(panel_.n_series()));
        }
        const auto stats = cross_section_stats(column, scratch_);
        panel_.append_column(column, ts);  // validates timestamp before any state change
        const double denom = stats.denominator();
        for (std::size_t i = 0; i < column.size(); ++i) {
            const double o = (column[i] - stats.z) / denom;
            state_.fold(i, o);
        }
        ++state_.t_count;
        stats_.push_back(stats);
        degenerate_columns_ += stats.degenerate ? 1 : 0;
        if (panel_.retention_window && panel_.n_times() > *panel_.retention_window) remove_time_point(0);
        return stats;
    }

    /// Removes column `t`, reversing its contribution to every series.
    void remove_time_point(std::size_t t) {
        if (empty()) throw ConfigError("no data loaded");
        if (t >= panel_.n_times()) throw ConfigError("time index " + std::to_string(t) + " out of range");
        if (panel_.n_times() == 1) throw ConfigError("cannot remove the last remaining time point");
        if (stats_.size() != panel_.n_times()) {
            panel_.erase_column(t);
            install_keep_epoch(batch_fit(panel_));
            return;
        }
        const auto col = panel_.column(t);
        const auto& stats = stats_[t];
        const double denom = stats.denominator();
        for (std::size_t i = 0; i < col.size(); ++i) {
            const double o = (col[i] - stats.z) / denom;
            state_.fold(i, o, -1.0);
        }
        degenerate_columns_ -= stats.degenerate ? 1 : 0;
        stats_.erase(stats_.begin() + static_cast<std::ptrdiff_t>(t));
        panel_.erase_column(t);
        --state_.t_count;
    }

    /// Admits a new series against the cached medians (no cross-section update).
    /// On an empty model the series becomes the whole panel, fitted exactly.
    ApproxAdmission add_series_approx(const std::string& id, std::span<const double> values) {
        if (empty()) {
            RawPanel p;
            p.retention_window = panel_.retention_window;
            p.append_row(id, values);
            fit(std::move(p));
            ApproxAdmission a;
            a.point = MsPoint{id, state_.mo(0), state_.vo(0), Label::central, false};
            return a;
        }
        if (recompute_due_) throw ConfigError("a full recompute is pending; approximate admission refused");
        if (values.size() != panel_.n_times()) {
            throw DataError("series '" + id + "' has " + std::to_string(values.size()) + " readings, expected " +
                            std::to_string(panel_.n_times()) + " (full history required)");
        }
        require_finite(values);
        if (panel_.index_of(id)) throw DataError("duplicate series id '" + id + "'");

        ApproxAdmission out;
        out.drift = drift_check(stats_, values, drift_);
        double s1 = 0.0, c1 = 0.0, s2 = 0.0, c2 = 0.0;
        for (std::size_t t = 0; t < values.size(); ++t) {
            const double o = directional_outlyingness(values[t], stats_[t]);
            OutlyingnessState::add(s1, c1, o);
            OutlyingnessState::add(s2, c2, o * o);
        }
        panel_.append_row(id, values);
        state_.push_back(s1, c1, s2, c2, true);
        ++approx_count_;
        const std::size_t n = state_.size() - 1;
        out.point = MsPoint{id, state_.mo(n), state_.vo(n), Label::central, true};
        out.recompute_due = note_approximation(out.drift);
        return out;
    }

    /// Drops a series; the cached medians are kept and the same drift gate applies.
    SeriesRemoval remove_series(const std::string& id) {
        const auto idx = panel_.index_of(id);
        if (!idx) throw DataError("unknown series id '" + id + "'");
        SeriesRemoval out;
        const auto row = panel_.row(*idx);
        if (panel_.n_series() > 1) out.drift = drift_check(stats_, row, drift_);
        panel_.erase_row(*idx);
        state_.erase(*idx);
        if (panel_.empty()) {
            state_.t_count = 0;
            stats_.clear();
            degenerate_columns_ = 0;
            approx_count_ = 0;
            recompute_due_ = false;
            return out;
        }
        ++approx_count_;
        out.recompute_due = note_approximation(out.drift);
        return out;
    }

    /// MS-plot points labelled with `bands`.
    std::vector<MsPoint> points(const ClassifyBands& bands = {}) const {
        std::vector<MsPoint> pts;
        pts.reserve(state_.size());
        const auto& ids = panel_.ids();
        for (std::size_t i = 0; i < state_.size(); ++i) {
            pts.push_back(MsPoint{ids[i], state_.mo(i), state_.vo(i), Label::central, state_.approx[i]});
        }
        classify(pts, bands);
        return pts;
    }

private:
    bool note_approximation(const DriftScore& drift) {
        if (drift.kl > drift_.threshold || approx_count_ >= drift_.approx_budget) recompute_due_ = true;
        return recompute_due_;
    }

    void install_keep_epoch(FitResult result) {
        const auto epoch = state_.epoch;
        install(std::move(result));
        state_.epoch = epoch;
    }

    RawPanel panel_;
    OutlyingnessState state_;
    std::vector<CrossSectionStats> stats_;
    DriftConfig drift_;
    std::size_t approx_count_ = 0;
    std::size_t degenerate_columns_ = 0;
    bool recompute_due_ = false;
    std::vector<double> scratch_;
};

}  // namespace msstream
