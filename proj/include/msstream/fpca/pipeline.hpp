#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msstream/error.hpp"
#include "msstream/fpca/basis.hpp"
#include "msstream/fpca/fpca.hpp"
#include "msstream/fpca/smoothing.hpp"

namespace msstream::fpca {

struct FpcaConfig {
    BasisSpec basis;
    std::optional<double> lambda;  ///< fixed smoothing parameter; GCV over `lambda_grid` when unset
    std::vector<double> lambda_grid = default_lambda_grid();
    std::size_t shown_components = 3;
};

struct FpcaRun {
    Basis basis;
    double lambda = 0.0;
    std::vector<GcvPoint> gcv;  ///< empty when lambda was fixed
    std::vector<SmoothedCurve> curves;
    FpcaModel model;
};

/// Smooths the given rows with a shared lambda and fits FPCA on them.
inline FpcaRun run_fpca(std::span<const std::string> ids, std::span<const std::vector<double>> rows,
                        std::span<const double> sample_times, const FpcaConfig& cfg) {
    if (rows.size() < 2) throw ConfigError("FPCA needs a selection of at least 2 series");
    if (ids.size() != rows.size()) throw ConfigError("ids and rows differ in length");
    FpcaRun run;
    run.basis = build_basis(cfg.basis, sample_times);
    if (cfg.lambda) {
        run.lambda = *cfg.lambda;
    } else {
        run.gcv = gcv_curve(rows, run.basis, cfg.lambda_grid);
        run.lambda = best_gcv(run.gcv).lambda;
    }
    run.curves.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) run.curves.push_back(smooth_curve(rows[i], run.basis, run.lambda, ids[i]));
    run.model = fit_fpca(run.curves, run.basis);
    return run;
}

}  // namespace msstream::fpca
