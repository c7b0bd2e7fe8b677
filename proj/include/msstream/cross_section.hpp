#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msstream/error.hpp"

namespace msstream {

/// Median and MAD of the N readings observed at one time point.
struct CrossSectionStats {
    double z = 0.0;    ///< cross-sectional median
    double mad = 0.0;  ///< median of |x - z|
    bool degenerate = false;

    /// Floor applied to the MAD so the outlyingness stays finite.
    static double mad_floor(double z) { return 1e-12 * std::max(1.0, std::fabs(z)); }

    double denominator() const { return std::max(mad, mad_floor(z)); }

    friend bool operator==(const CrossSectionStats&, const CrossSectionStats&) = default;
};

namespace detail {

// Median of a scratch buffer; reorders it. Even sizes average the two middle order statistics.
inline double median_inplace(std::span<double> v) {
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace detail

inline void require_finite(std::span<const double> column, const char* what = "reading") {
    for (std::size_t i = 0; i < column.size(); ++i) {
        if (!std::isfinite(column[i])) {
            throw DataError(std::string("non-finite ") + what + " at series index " + std::to_string(i));
        }
    }
}

/// Median/MAD of one column. `scratch` is reused between calls to avoid allocation on the hot path.
inline CrossSectionStats cross_section_stats(std::span<const double> column, std::vector<double>& scratch) {
    if (column.empty()) throw ConfigError("cross-section needs at least one reading");
    require_finite(column);
    scratch.assign(column.begin(), column.end());
    CrossSectionStats s;
    s.z = detail::median_inplace(scratch);
    for (std::size_t i = 0; i < column.size(); ++i) scratch[i] = std::fabs(column[i] - s.z);
    s.mad = detail::median_inplace(scratch);
    s.degenerate = s.mad < CrossSectionStats::mad_floor(s.z);
    return s;
}

inline CrossSectionStats cross_section_stats(std::span<const double> column) {
    std::vector<double> scratch;
    return cross_section_stats(column, scratch);
}

/// Signed, MAD-normalised deviation from the cross-sectional median (univariate
/// Stahel-Donoho outlyingness times the direction of the deviation).
inline double directional_outlyingness(double x, const CrossSectionStats& stats) {
    return (x - stats.z) / stats.denominator();
}

}  // namespace msstream
