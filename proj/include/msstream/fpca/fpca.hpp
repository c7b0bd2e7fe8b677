#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msstream/error.hpp"
#include "msstream/fpca/basis.hpp"
#include "msstream/fpca/smoothing.hpp"

namespace msstream::fpca {

/// Functional PCA of a set of smoothed curves, all in basis coefficient space.
struct FpcaModel {
    BasisSpec basis_spec;
    Eigen::VectorXd mean;          ///< mean coefficients
    Eigen::MatrixXd components;    ///< K x m, column j is FPC j's coefficients (L2-orthonormal)
    Eigen::VectorXd eigenvalues;   ///< xi_j, descending, >= 0
    Eigen::VectorXd explained;     ///< per-component variance ratio
    Eigen::VectorXd cumulative;    ///< cumulative explained ratio, last entry 1
    Eigen::MatrixXd scores;        ///< N_sel x m for the fitting set
    Eigen::MatrixXd gram;          ///< W
    Eigen::MatrixXd eval;          ///< basis at the sample times, T x K
    std::vector<std::string> series_ids;

    std::size_t n_components() const { return static_cast<std::size_t>(components.cols()); }

    Eigen::VectorXd mean_curve() const { return eval * mean; }
    Eigen::VectorXd component_curve(std::size_t j) const {
        return eval * components.col(static_cast<Eigen::Index>(j));
    }
};

namespace detail {

// Flip so the FPC is nonnegative at the first sample where it is not ~0.
inline void orient(Eigen::Ref<Eigen::VectorXd> coef, const Eigen::MatrixXd& eval) {
    const Eigen::VectorXd values = eval * coef;
    const double scale = values.cwiseAbs().maxCoeff();
    if (scale == 0.0) return;
    for (Eigen::Index t = 0; t < values.size(); ++t) {
        if (std::fabs(values(t)) > 1e-12 * scale) {
            if (values(t) < 0.0) coef = -coef;
            return;
        }
    }
}

inline Eigen::MatrixXd coefficient_matrix(std::span<const SmoothedCurve> curves, Eigen::Index k) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(curves.size()), k);
    for (std::size_t i = 0; i < curves.size(); ++i) {
        if (curves[i].coefficients.size() != k) throw ConfigError("curve coefficients do not match the basis size");
        c.row(static_cast<Eigen::Index>(i)) = curves[i].coefficients.transpose();
    }
    return c;
}

}  // namespace detail

/// Scores (c_i - mean)' W b_j of each curve on each retained FPC.
inline Eigen::MatrixXd fpc_scores(const FpcaModel& model, std::span<const SmoothedCurve> curves) {
    const auto k = model.mean.size();
    for (const auto& c : curves) {
        if (c.coefficients.size() != k) throw ConfigError("curve basis does not match the fitted model");
    }
    Eigen::MatrixXd centered = detail::coefficient_matrix(curves, k);
    centered.rowwise() -= model.mean.transpose();
    return centered * model.gram * model.components;
}

/// Eigen-decomposition of the sample covariance operator in coefficient space,
/// symmetrised through W^{1/2} so the FPCs come out W-orthonormal.
inline FpcaModel fit_fpca(std::span<const SmoothedCurve> curves, const Basis& basis) {
    if (curves.size() < 2) throw ConfigError("FPCA needs at least 2 curves");
    const auto k = static_cast<Eigen::Index>(basis.size());
    const Eigen::MatrixXd coef = detail::coefficient_matrix(curves, k);

    FpcaModel model;
    model.basis_spec = basis.spec;
    model.gram = basis.gram;
    model.eval = basis.eval;
    for (const auto& c : curves) model.series_ids.push_back(c.series_id);
    model.mean = coef.colwise().mean().transpose();
    Eigen::MatrixXd centered = coef;
    centered.rowwise() -= model.mean.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ws(basis.gram);
    if (ws.eigenvalues().minCoeff() <= 0.0) throw ConfigError("basis Gram matrix is not positive definite");
    const Eigen::MatrixXd w_half = ws.operatorSqrt();
    const Eigen::MatrixXd w_inv_half = ws.operatorInverseSqrt();

    const double dof = static_cast<double>(curves.size() - 1);
    Eigen::MatrixXd cov = w_half * (centered.transpose() * centered) * w_half / dof;
    cov = 0.5 * (cov + cov.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);

    const auto retained = std::min<Eigen::Index>(k, static_cast<Eigen::Index>(curves.size()) - 1);
    model.components.resize(k, retained);
    model.eigenvalues.resize(retained);
    for (Eigen::Index j = 0; j < retained; ++j) {
        const Eigen::Index src = k - 1 - j;  // solver sorts ascending
        model.eigenvalues(j) = std::max(0.0, es.eigenvalues()(src));
        Eigen::VectorXd b = w_inv_half * es.eigenvectors().col(src);
        detail::orient(b, basis.eval);
        model.components.col(j) = b;
    }

    const double total = model.eigenvalues.sum();
    model.explained.resize(retained);
    model.cumulative.resize(retained);
    double running = 0.0;
    for (Eigen::Index j = 0; j < retained; ++j) {
        // With zero total variance the first component is taken to account for all of it.
        model.explained(j) = total > 0.0 ? model.eigenvalues(j) / total : (j == 0 ? 1.0 : 0.0);
        running += model.explained(j);
        model.cumulative(j) = running;
    }
    if (retained > 0) model.cumulative(retained - 1) = 1.0;

    model.scores = fpc_scores(model, curves);
    return model;
}

enum class RankMode { top, bottom };

/// Series ranked by |score| on one component: descending for `top`, ascending
/// for `bottom`. Ties break by id. Scores below `min_abs_score` are dropped.
inline std::vector<std::string> top_k_series(std::span<const std::string> ids, const Eigen::VectorXd& scores,
                                             std::size_t k, RankMode mode = RankMode::top,
                                             std::optional<double> min_abs_score = std::nullopt) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (static_cast<Eigen::Index>(ids.size()) != scores.size()) throw ConfigError("ids and scores differ in length");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!min_abs_score || std::fabs(scores(static_cast<Eigen::Index>(i))) >= *min_abs_score) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = std::fabs(scores(static_cast<Eigen::Index>(a)));
        const double sb = std::fabs(scores(static_cast<Eigen::Index>(b)));
        if (sa != sb) return mode == RankMode::top ? sa > sb : sa < sb;
        return ids[a] < ids[b];
    });
    if (order.size() > k) order.resize(k);
    std::vector<std::string> out;
    for (auto i : order) out.push_back(ids[i]);
    return out;
}

struct PerturbationCurves {
    Eigen::VectorXd mean;
    Eigen::VectorXd plus;
    Eigen::VectorXd minus;
    double multiple;  ///< sqrt(2 xi)
};

/// mean +/- sqrt(2 xi_j) * FPC_j on the sample grid.
inline PerturbationCurves perturbation_curves(const FpcaModel& model, std::size_t component) {
    if (component >= model.n_components()) throw ConfigError("component index out of range");
    PerturbationCurves out;
    out.multiple = std::sqrt(2.0 * model.eigenvalues(static_cast<Eigen::Index>(component)));
    out.mean = model.mean_curve();
    const Eigen::VectorXd fpc = model.component_curve(component);
    out.plus = out.mean + out.multiple * fpc;
    out.minus = out.mean - out.multiple * fpc;
    return out;
}

struct ScreeEntry {
    std::size_t index;  ///< 1-based component number
    double ratio;
    double cumulative_ratio;
};

inline std::vector<ScreeEntry> scree(const FpcaModel& model, std::size_t max_components) {
    std::vector<ScreeEntry> out;
    const auto n = std::min(max_components, model.n_components());
    for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        out.push_back({j + 1, model.explained(jj), model.cumulative(jj)});
    }
    return out;
}

}  // namespace msstream::fpca
