#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "msstream/classify.hpp"
#include "msstream/drift.hpp"
#include "msstream/engine.hpp"
#include "msstream/error.hpp"
#include "msstream/fpca/pipeline.hpp"

// JSON codecs shared by the HTTP service and the CLI.
namespace msstream::service {

using nlohmann::json;

namespace detail {

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline double number(const json& j, const char* key) {
    if (!j.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

inline std::size_t count(const json& j, const char* key) {
    if (!j.at(key).is_number_unsigned()) throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
    return j.at(key).get<std::size_t>();
}

inline const json& object(const json& j, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    return j;
}

}  // namespace detail

inline json point_to_json(const MsPoint& p) {
    return {{"id", p.series_id}, {"mo", p.mo}, {"vo", p.vo}, {"label", to_string(p.label)}, {"approximate", p.approximate}};
}

inline json points_to_json(const std::vector<MsPoint>& points) {
    json arr = json::array();
    for (const auto& p : points) arr.push_back(point_to_json(p));
    return arr;
}

/// `{epoch, t_count, approx_pending, degenerate_columns, points:[{id, mo, vo, label, approximate}]}`
inline json snapshot_to_json(const MsSnapshot& s) {
    return {{"epoch", s.epoch},
            {"t_count", s.t_count},
            {"approx_pending", s.approx_pending},
            {"degenerate_columns", s.degenerate_columns},
            {"points", points_to_json(s.points)}};
}

inline json bands_to_json(const ClassifyBands& b) {
    return {{"mo_low", b.mo_low}, {"mo_high", b.mo_high}, {"vo_cap", b.vo_cap}};
}

inline ClassifyBands bands_from_json(const json& j, ClassifyBands b = {}) {
    detail::object(j, "bands");
    if (j.contains("mo_low")) b.mo_low = detail::number(j, "mo_low");
    if (j.contains("mo_high")) b.mo_high = detail::number(j, "mo_high");
    if (j.contains("vo_cap")) b.vo_cap = detail::number(j, "vo_cap");
    b.validate();
    return b;
}

inline json drift_to_json(const DriftConfig& d) {
    return {{"threshold", d.threshold},
            {"bin_count", d.bin_count},
            {"approx_budget", d.approx_budget},
            {"pseudo_count", d.pseudo_count}};
}

inline DriftConfig drift_from_json(const json& j, DriftConfig d = {}) {
    detail::object(j, "drift");
    if (j.contains("threshold")) d.threshold = detail::number(j, "threshold");
    if (j.contains("bin_count")) d.bin_count = detail::count(j, "bin_count");
    if (j.contains("approx_budget")) d.approx_budget = detail::count(j, "approx_budget");
    if (j.contains("pseudo_count")) d.pseudo_count = detail::number(j, "pseudo_count");
    d.validate();
    return d;
}

inline json basis_to_json(const fpca::BasisSpec& b) {
    json j{{"kind", to_string(b.kind)},
           {"n_basis", b.n_basis},
           {"order", b.order},
           {"penalty_order", b.penalty_order},
           {"domain", nullptr}};
    if (b.domain) j["domain"] = {b.domain->first, b.domain->second};
    return j;
}

inline fpca::BasisSpec basis_from_json(const json& j, fpca::BasisSpec b = {}) {
    detail::object(j, "basis");
    if (j.contains("kind")) {
        if (!j["kind"].is_string()) throw ConfigError("'kind' must be a string");
        b.kind = fpca::basis_kind_from_string(j["kind"].get<std::string>());
    }
    if (j.contains("n_basis")) b.n_basis = detail::count(j, "n_basis");
    if (j.contains("order")) b.order = detail::count(j, "order");
    if (j.contains("penalty_order")) b.penalty_order = detail::count(j, "penalty_order");
    if (j.contains("domain")) {
        const auto& d = j["domain"];
        if (d.is_null()) {
            b.domain.reset();
        } else {
            if (!d.is_array() || d.size() != 2 || !d[0].is_number() || !d[1].is_number()) {
                throw ConfigError("'domain' must be [start, end] or null");
            }
            b.domain = std::pair{d[0].get<double>(), d[1].get<double>()};
        }
    }
    b.validate();
    return b;
}

inline json fpca_config_to_json(const fpca::FpcaConfig& c) {
    return {{"basis", basis_to_json(c.basis)},
            {"lambda", c.lambda ? json(*c.lambda) : json(nullptr)},
            {"lambda_grid", c.lambda_grid},
            {"shown_components", c.shown_components}};
}

inline fpca::FpcaConfig fpca_config_from_json(const json& j, fpca::FpcaConfig c = {}) {
    detail::object(j, "fpca config");
    if (j.contains("basis")) c.basis = basis_from_json(j["basis"], c.basis);
    if (j.contains("lambda")) {
        if (j["lambda"].is_null()) {
            c.lambda.reset();
        } else {
            const double l = detail::number(j, "lambda");
            if (!(l >= 0.0)) throw ConfigError("'lambda' must be >= 0");
            c.lambda = l;
        }
    }
    if (j.contains("lambda_grid")) {
        const auto& g = j["lambda_grid"];
        if (!g.is_array() || g.empty()) throw ConfigError("'lambda_grid' must be a nonempty array");
        std::vector<double> grid;
        for (const auto& v : g) {
            if (!v.is_number() || !(v.get<double>() >= 0.0)) throw ConfigError("'lambda_grid' entries must be >= 0");
            grid.push_back(v.get<double>());
        }
        c.lambda_grid = std::move(grid);
    }
    if (j.contains("shown_components")) {
        c.shown_components = detail::count(j, "shown_components");
        if (c.shown_components < 1) throw ConfigError("'shown_components' must be >= 1");
    }
    return c;
}

/// FPCA response body for a selection. Curves are sampled at the selection's time stamps;
/// `fpcs` and per-series `scores` cover the first `shown` components.
inline json fpca_run_to_json(const fpca::FpcaRun& run, std::uint64_t epoch, std::size_t shown) {
    const auto& m = run.model;
    shown = std::min(shown, m.n_components());
    json j;
    j["epoch"] = epoch;
    j["ids"] = m.series_ids;
    j["sample_times"] = run.basis.sample_times;
    j["basis"] = basis_to_json(run.basis.spec);
    j["lambda"] = run.lambda;
    json gcv = json::array();
    for (const auto& p : run.gcv) {
        gcv.push_back({{"lambda", p.lambda}, {"df", p.df}, {"score", detail::finite_or_null(p.score)}});
    }
    j["gcv"] = gcv;
    j["mean_curve"] = detail::to_std(m.mean_curve());
    j["eigenvalues"] = detail::to_std(m.eigenvalues);
    j["explained"] = detail::to_std(m.explained);
    j["cumulative"] = detail::to_std(m.cumulative);
    json sc = json::array();
    for (const auto& e : fpca::scree(m, m.n_components())) {
        sc.push_back({{"index", e.index}, {"ratio", e.ratio}, {"cumulative_ratio", e.cumulative_ratio}});
    }
    j["scree"] = sc;
    json fpcs = json::array();
    for (std::size_t c = 0; c < shown; ++c) {
        const auto p = fpca::perturbation_curves(m, c);
        fpcs.push_back({{"index", c + 1},
                        {"eigenvalue", m.eigenvalues(static_cast<Eigen::Index>(c))},
                        {"values", detail::to_std(m.component_curve(c))},
                        {"perturbation",
                         {{"multiple", p.multiple}, {"plus", detail::to_std(p.plus)}, {"minus", detail::to_std(p.minus)}}}});
    }
    j["fpcs"] = fpcs;
    json scores = json::array();
    for (std::size_t i = 0; i < m.series_ids.size(); ++i) {
        std::vector<double> row;
        for (std::size_t c = 0; c < shown; ++c) row.push_back(m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
        scores.push_back({{"id", m.series_ids[i]}, {"values", row}});
    }
    j["scores"] = scores;
    return j;
}

}  // namespace msstream::service
