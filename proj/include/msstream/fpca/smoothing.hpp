#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msstream/error.hpp"
#include "msstream/fpca/basis.hpp"

namespace msstream::fpca {

struct SmoothedCurve {
    std::string series_id;
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
};

/// 13 log-spaced values 1e-6 .. 1e6.
inline std::vector<double> default_lambda_grid() {
    std::vector<double> g;
    for (int e = -6; e <= 6; ++e) g.push_back(std::pow(10.0, e));
    return g;
}

/// Solver for the normal equations (E'E + lambda P) c = E'y.
///
/// When E has full column rank the system is diagonalised in the
/// Demmler-Reinsch basis: with E'E = L L' and L^-1 P L^-T = V diag(s) V',
/// c = L^-T V diag(1 / (1 + lambda s)) V' L^-1 E'y. Penalty eigenvalues below
/// 1e-10 of the largest are the penalty's null space and are snapped to zero, so
/// very large lambda converges to the unpenalised fit on that null space.
/// Rank-deficient E falls back to an LDLT solve, which requires the penalty to
/// cover every unobserved direction.
class PenalizedSystem {
public:
    PenalizedSystem(const Basis& basis, double lambda) : lambda_(lambda) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
        const Eigen::MatrixXd ete = basis.eval.transpose() * basis.eval;
        full_rank_ = check_rank(ete, basis.penalty, lambda);
        if (full_rank_) {
            llt_.compute(ete);
            const Eigen::MatrixXd l_inv = llt_.matrixL().solve(Eigen::MatrixXd::Identity(ete.rows(), ete.cols()));
            Eigen::MatrixXd s = l_inv * basis.penalty * l_inv.transpose();
            s = 0.5 * (s + s.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
            const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
            shrink_.resize(es.eigenvalues().size());
            for (Eigen::Index k = 0; k < shrink_.size(); ++k) {
                const double sk = es.eigenvalues()(k) <= 1e-10 * top ? 0.0 : es.eigenvalues()(k);
                shrink_(k) = 1.0 / (1.0 + lambda * sk);
            }
            left_ = l_inv.transpose() * es.eigenvectors();   // L^-T V
            right_ = es.eigenvectors().transpose() * l_inv;  // V' L^-1
        } else {
            ldlt_.compute(ete + lambda * basis.penalty);
            if (ldlt_.info() != Eigen::Success) {
                throw DataError("penalized smoothing system is singular; increase lambda or reduce n_basis");
            }
            df_ = ldlt_.solve(ete).trace();
        }
        if (full_rank_) df_ = shrink_.sum();
    }

    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
        if (!full_rank_) return ldlt_.solve(rhs);
        return left_ * (shrink_.asDiagonal() * (right_ * rhs));
    }
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return solve(Eigen::MatrixXd(rhs)).col(0); }
    double lambda() const { return lambda_; }
    /// Effective degrees of freedom: trace of the smoother matrix.
    double df() const { return df_; }

private:
    // True when E'E alone is nonsingular; throws when E'E + lambda P is singular.
    static bool check_rank(const Eigen::MatrixXd& ete, const Eigen::MatrixXd& pen, double lambda) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ete);
        const auto& ev = es.eigenvalues();
        const double top = std::max(ev.maxCoeff(), std::numeric_limits<double>::min());
        std::vector<Eigen::Index> null_dirs;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            if (ev(i) <= 1e-12 * top) null_dirs.push_back(i);
        if (null_dirs.empty()) return true;
        const auto fail = [] {
            throw DataError("penalized smoothing system is rank-deficient; increase lambda or reduce n_basis");
        };
        if (lambda == 0.0) fail();
        Eigen::MatrixXd nullspace(ete.rows(), static_cast<Eigen::Index>(null_dirs.size()));
        for (std::size_t c = 0; c < null_dirs.size(); ++c)
            nullspace.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(null_dirs[c]);
        const Eigen::MatrixXd restricted = nullspace.transpose() * pen * nullspace;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rs(restricted);
        const double pen_scale = std::max(pen.norm(), std::numeric_limits<double>::min());
        if (rs.eigenvalues().minCoeff() <= 1e-12 * pen_scale) fail();
        return false;
    }

    double lambda_;
    bool full_rank_ = true;
    double df_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd shrink_;
    Eigen::MatrixXd left_;
    Eigen::MatrixXd right_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

inline Eigen::VectorXd as_vector(std::span<const double> y) {
    return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

/// argmin ||y - E c||^2 + lambda c'Pc via the normal equations.
inline SmoothedCurve smooth_curve(std::span<const double> series, const Basis& basis, double lambda,
                                  std::string series_id = {}) {
    if (series.size() != basis.sample_times.size()) {
        throw DataError("series length " + std::to_string(series.size()) + " does not match basis sample count " +
                        std::to_string(basis.sample_times.size()));
    }
    const PenalizedSystem sys(basis, lambda);
    SmoothedCurve out;
    out.series_id = std::move(series_id);
    out.lambda = lambda;
    out.coefficients = sys.solve(Eigen::VectorXd(basis.eval.transpose() * as_vector(series)));
    return out;
}

/// Residual sum of squares of a smoothed curve at the sample points.
inline double residual_ss(std::span<const double> series, const Basis& basis, const SmoothedCurve& curve) {
    return (as_vector(series) - basis.eval * curve.coefficients).squaredNorm();
}

struct GcvPoint {
    double lambda;
    double df;
    double score;  ///< mean GCV over the series set
};

/// Mean GCV criterion (RSS/T) / (1 - df/T)^2 for every grid value.
inline std::vector<GcvPoint> gcv_curve(std::span<const std::vector<double>> series_set, const Basis& basis,
                                       std::span<const double> grid) {
    if (series_set.empty()) throw ConfigError("GCV needs at least one series");
    const auto t_count = static_cast<double>(basis.sample_times.size());
    Eigen::MatrixXd y(basis.eval.rows(), static_cast<Eigen::Index>(series_set.size()));
    for (std::size_t i = 0; i < series_set.size(); ++i) {
        if (series_set[i].size() != basis.sample_times.size()) throw DataError("series length does not match basis");
        y.col(static_cast<Eigen::Index>(i)) = as_vector(series_set[i]);
    }
    const Eigen::MatrixXd ety = basis.eval.transpose() * y;
    std::vector<GcvPoint> out;
    for (double lambda : grid) {
        GcvPoint p{lambda, 0.0, std::numeric_limits<double>::infinity()};
        try {
            const PenalizedSystem sys(basis, lambda);
            p.df = sys.df();
            const Eigen::MatrixXd coef = sys.solve(ety);
            const double rss = (y - basis.eval * coef).colwise().squaredNorm().mean();
            const double denom = 1.0 - p.df / t_count;
            if (denom > 0.0) p.score = (rss / t_count) / (denom * denom);
        } catch (const DataError&) {
            // singular at this lambda: leave the score at +inf
        }
        out.push_back(p);
    }
    return out;
}

/// Grid point with the lowest score; ties resolve to the smaller lambda.
inline const GcvPoint& best_gcv(std::span<const GcvPoint> curve) {
    if (curve.empty()) throw ConfigError("lambda grid must be nonempty");
    const GcvPoint* best = &curve.front();
    for (const auto& p : curve) {
        if (p.score < best->score || (p.score == best->score && p.lambda < best->lambda)) best = &p;
    }
    return *best;
}

/// Grid lambda minimising mean GCV.
inline double select_lambda_gcv(std::span<const std::vector<double>> series_set, const Basis& basis,
                                std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("lambda grid must be nonempty");
    if (grid.size() == 1) return grid.front();
    const auto curve = gcv_curve(series_set, basis, grid);
    return best_gcv(curve).lambda;
}

}  // namespace msstream::fpca
