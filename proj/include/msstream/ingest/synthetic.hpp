#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "msstream/error.hpp"
#include "msstream/panel.hpp"

namespace msstream::ingest {

struct ScenarioSpec {
    std::size_t n_central = 20;
    std::size_t n_magnitude_outliers = 2;
    std::size_t n_shape_outliers = 2;
    std::size_t t_points = 100;
    double noise_sd = 0.1;
    std::uint64_t seed = 42;

    /// Offset scale c = 5 * noise_sd * sqrt(T). Also used as the base-curve amplitude.
    double offset_scale() const { return 5.0 * noise_sd * std::sqrt(static_cast<double>(t_points)); }
};

enum class Archetype { central, magnitude, shape };

inline const char* to_string(Archetype a) {
    switch (a) {
        case Archetype::central: return "central";
        case Archetype::magnitude: return "magnitude";
        case Archetype::shape: return "shape";
    }
    return "unknown";
}

struct Scenario {
    RawPanel panel;
    std::vector<Archetype> labels;  ///< ground truth, one per series in panel order
};

/// Simulated panel with three curve archetypes on u in [0, 1]:
///   central   = c sin(2 pi u) + noise
///   magnitude = central shape shifted by +c, -c, +c, ... (alternating sign)
///   shape     = c sin(4 pi u) + noise (doubled frequency; same grid mean, zero)
/// with c = offset_scale() and i.i.d. Gaussian noise of sd noise_sd.
/// Series ids are c##, m##, s## in that order. Deterministic for a given seed.
inline Scenario generate_synthetic(const ScenarioSpec& spec) {
    const std::size_t total = spec.n_central + spec.n_magnitude_outliers + spec.n_shape_outliers;
    if (total < 3) throw ConfigError("scenario needs at least 3 series");
    if (spec.t_points < 1) throw ConfigError("scenario needs at least 1 time point");
    if (!(spec.noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double c = spec.offset_scale();
    const std::size_t t_count = spec.t_points;
    auto u_at = [&](std::size_t t) {
        return t_count == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(t_count - 1);
    };
    auto make = [&](double freq, double shift) {
        std::vector<double> row(t_count);
        for (std::size_t t = 0; t < t_count; ++t) {
            row[t] = c * std::sin(2.0 * std::numbers::pi * freq * u_at(t)) + shift + spec.noise_sd * noise(rng);
        }
        return row;
    };
    auto name = [](char prefix, std::size_t i) {
        std::ostringstream os;
        os << prefix << std::setw(2) << std::setfill('0') << i;
        return os.str();
    };

    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    Scenario out;
    for (std::size_t i = 0; i < spec.n_central; ++i) {
        ids.push_back(name('c', i));
        rows.push_back(make(1.0, 0.0));
        out.labels.push_back(Archetype::central);
    }
    for (std::size_t i = 0; i < spec.n_magnitude_outliers; ++i) {
        ids.push_back(name('m', i));
        rows.push_back(make(1.0, i % 2 == 0 ? c : -c));
        out.labels.push_back(Archetype::magnitude);
    }
    for (std::size_t i = 0; i < spec.n_shape_outliers; ++i) {
        ids.push_back(name('s', i));
        rows.push_back(make(2.0, 0.0));
        out.labels.push_back(Archetype::shape);
    }
    out.panel = RawPanel::from_rows(std::move(ids), rows);
    return out;
}

inline void write_labels_csv(std::ostream& out, const Scenario& s) {
    out << "id,archetype\n";
    for (std::size_t i = 0; i < s.labels.size(); ++i) out << s.panel.ids()[i] << ',' << to_string(s.labels[i]) << '\n';
}

}  // namespace msstream::ingest
