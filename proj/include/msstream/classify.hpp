#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "msstream/error.hpp"

namespace msstream {

enum class Label { central, outlying };

inline const char* to_string(Label l) { return l == Label::central ? "central" : "outlying"; }

/// One circle of the MS plot.
struct MsPoint {
    std::string series_id;
    double mo = 0.0;
    double vo = 0.0;  ///< clamped at 0
    Label label = Label::central;
    bool approximate = false;

    friend bool operator==(const MsPoint&, const MsPoint&) = default;
};

/// Central region of the MS plot, as fractions of the observed value ranges.
struct ClassifyBands {
    double mo_low = 0.25;
    double mo_high = 0.75;
    double vo_cap = 0.75;

    void validate() const {
        if (!(mo_low >= 0.0 && mo_low <= mo_high && mo_high <= 1.0)) {
            throw ConfigError("mo band must satisfy 0 <= low <= high <= 1");
        }
        if (!(vo_cap >= 0.0 && vo_cap <= 1.0)) throw ConfigError("vo cap must lie in [0, 1]");
    }
};

/// Labels each point central when its MO lies inside the band and its VO is
/// below the cap. Zero-width ranges put every point in the central region.
inline void classify(std::span<MsPoint> points, const ClassifyBands& bands = {}) {
    if (points.empty()) return;
    double mo_min = points.front().mo, mo_max = mo_min;
    double vo_min = points.front().vo, vo_max = vo_min;
    for (const auto& p : points) {
        mo_min = std::min(mo_min, p.mo), mo_max = std::max(mo_max, p.mo);
        vo_min = std::min(vo_min, p.vo), vo_max = std::max(vo_max, p.vo);
    }
    const double mo_range = mo_max - mo_min;
    const double vo_range = vo_max - vo_min;
    const double lo = mo_min + bands.mo_low * mo_range;
    const double hi = mo_min + bands.mo_high * mo_range;
    const double cap = vo_min + bands.vo_cap * vo_range;
    for (auto& p : points) {
        const bool mo_ok = p.mo >= lo && p.mo <= hi;
        const bool vo_ok = vo_range == 0.0 || p.vo < cap;
        p.label = (mo_ok && vo_ok) ? Label::central : Label::outlying;
    }
}

}  // namespace msstream
