#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msstream/cross_section.hpp"
#include "msstream/error.hpp"

namespace msstream {

/// Governs when a series admitted against stale medians forces a full recompute.
struct DriftConfig {
    double threshold = 10.0;      ///< KL bound; above it the cached medians are considered stale
    std::size_t bin_count = 32;   ///< histogram resolution
    std::size_t approx_budget = 64;  ///< approximate admissions tolerated before a forced recompute
    double pseudo_count = 1e-3;   ///< additive smoothing per histogram bin

    void validate() const {
        if (!(threshold > 0.0)) throw ConfigError("drift threshold must be > 0");
        if (bin_count < 2) throw ConfigError("drift bin_count must be >= 2");
        if (!(pseudo_count > 0.0)) throw ConfigError("drift pseudo_count must be > 0");
        if (approx_budget < 1) throw ConfigError("approx_budget must be >= 1");
    }
};

struct DriftScore {
    double kl = 0.0;
    bool low_confidence = false;  ///< fewer samples than bins
};

/// KL(P || Q) between two samples histogrammed over their pooled range with
/// additive smoothing. Both samples must be nonempty.
inline double histogram_kl(std::span<const double> p_sample, std::span<const double> q_sample, std::size_t bins,
                           double pseudo_count) {
    if (p_sample.empty() || q_sample.empty()) return 0.0;
    double lo = p_sample.front();
    double hi = lo;
    for (double v : p_sample) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : q_sample) lo = std::min(lo, v), hi = std::max(hi, v);
    const double width = hi - lo;
    if (!(width > 0.0)) return 0.0;  // every value in one bin on both sides

    auto fill = [&](std::span<const double> sample) {
        std::vector<double> counts(bins, 0.0);
        for (double v : sample) {
            auto b = static_cast<std::size_t>((v - lo) / width * static_cast<double>(bins));
            counts[std::min(b, bins - 1)] += 1.0;
        }
        const double total = static_cast<double>(sample.size()) + static_cast<double>(bins) * pseudo_count;
        for (double& c : counts) c = (c + pseudo_count) / total;
        return counts;
    };
    const auto p = fill(p_sample);
    const auto q = fill(q_sample);
    double kl = 0.0;
    for (std::size_t i = 0; i < bins; ++i) kl += p[i] * std::log(p[i] / q[i]);
    return std::max(0.0, kl);
}

/// Drift of a candidate series against the cached cross-sections: compares the
/// distribution over time of |x[t] - z[t]| with the distribution of the cached mad[t].
inline DriftScore drift_check(std::span<const CrossSectionStats> cached, std::span<const double> series,
                              const DriftConfig& cfg) {
    if (series.size() != cached.size()) {
        throw DataError("series has " + std::to_string(series.size()) + " readings, expected " +
                        std::to_string(cached.size()));
    }
    std::vector<double> deviations(series.size());
    std::vector<double> mads(cached.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        deviations[t] = std::fabs(series[t] - cached[t].z);
        mads[t] = cached[t].mad;
    }
    DriftScore out;
    out.kl = histogram_kl(deviations, mads, cfg.bin_count, cfg.pseudo_count);
    out.low_confidence = series.size() < cfg.bin_count;
    return out;
}

}  // namespace msstream
