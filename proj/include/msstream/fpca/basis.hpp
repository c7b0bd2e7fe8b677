#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msstream/error.hpp"

namespace msstream::fpca {

enum class BasisKind { bspline, fourier };

inline const char* to_string(BasisKind k) { return k == BasisKind::bspline ? "bspline" : "fourier"; }

inline BasisKind basis_kind_from_string(const std::string& s) {
    if (s == "bspline") return BasisKind::bspline;
    if (s == "fourier") return BasisKind::fourier;
    throw ConfigError("unknown basis kind '" + s + "' (expected bspline or fourier)");
}

struct BasisSpec {
    BasisKind kind = BasisKind::bspline;
    std::size_t n_basis = 12;
    std::size_t order = 4;  ///< B-spline order (degree + 1)
    std::optional<std::pair<double, double>> domain;  ///< defaults to the sample-time range
    std::size_t penalty_order = 2;

    void validate() const {
        if (n_basis < penalty_order + 2) throw ConfigError("n_basis must be >= penalty_order + 2");
        if (kind == BasisKind::fourier && n_basis % 2 == 0) throw ConfigError("fourier n_basis must be odd");
        if (kind == BasisKind::bspline) {
            if (order < 1) throw ConfigError("bspline order must be >= 1");
            if (n_basis < order) throw ConfigError("bspline n_basis must be >= order");
        }
        if (domain && !(domain->second > domain->first)) throw ConfigError("basis domain must have positive length");
    }

    friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

/// Evaluates one family of basis functions (and their derivatives) on [a, b].
class BasisFunctions {
public:
    BasisFunctions(const BasisSpec& spec, double a, double b) : spec_(spec), a_(a), b_(b) {
        if (spec_.kind == BasisKind::bspline) {
            const std::size_t k = spec_.order;
            const std::size_t interior = spec_.n_basis - k;
            knots_.assign(k, a);
            for (std::size_t i = 1; i <= interior; ++i) {
                knots_.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(interior + 1));
            }
            knots_.insert(knots_.end(), k, b);
        }
    }

    std::size_t size() const { return spec_.n_basis; }
    double lower() const { return a_; }
    double upper() const { return b_; }

    /// Value of the `deriv`-th derivative of basis function `j` at `t`.
    double operator()(std::size_t j, double t, std::size_t deriv = 0) const {
        return spec_.kind == BasisKind::bspline ? bspline(j, spec_.order, t, deriv) : fourier(j, t, deriv);
    }

    Eigen::RowVectorXd row(double t, std::size_t deriv = 0) const {
        Eigen::RowVectorXd r(static_cast<Eigen::Index>(size()));
        for (std::size_t j = 0; j < size(); ++j) r(static_cast<Eigen::Index>(j)) = (*this)(j, t, deriv);
        return r;
    }

private:
    double bspline(std::size_t j, std::size_t order, double t, std::size_t deriv) const {
        const auto& k = knots_;
        if (deriv > 0) {
            if (order == 1) return 0.0;
            double out = 0.0;
            const double d1 = k[j + order - 1] - k[j];
            const double d2 = k[j + order] - k[j + 1];
            const double m = static_cast<double>(order - 1);
            if (d1 > 0.0) out += m * bspline(j, order - 1, t, deriv - 1) / d1;
            if (d2 > 0.0) out -= m * bspline(j + 1, order - 1, t, deriv - 1) / d2;
            return out;
        }
        if (order == 1) {
            if (k[j] <= t && t < k[j + 1]) return 1.0;
            // right end belongs to the last nonempty interval
            if (t == b_ && k[j + 1] == b_ && k[j] < b_) return 1.0;
            return 0.0;
        }
        double out = 0.0;
        const double d1 = k[j + order - 1] - k[j];
        const double d2 = k[j + order] - k[j + 1];
        if (d1 > 0.0) out += (t - k[j]) / d1 * bspline(j, order - 1, t, 0);
        if (d2 > 0.0) out += (k[j + order] - t) / d2 * bspline(j + 1, order - 1, t, 0);
        return out;
    }

    // Orthonormal on [a, b]: 1/sqrt(L), sqrt(2/L) sin(k w x), sqrt(2/L) cos(k w x).
    double fourier(std::size_t j, double t, std::size_t deriv) const {
        const double len = b_ - a_;
        if (j == 0) return deriv == 0 ? 1.0 / std::sqrt(len) : 0.0;
        const std::size_t harmonic = (j + 1) / 2;
        const double w = 2.0 * std::numbers::pi * static_cast<double>(harmonic) / len;
        const double phase = (j % 2 == 1) ? 0.0 : std::numbers::pi / 2.0;  // sin, then cos
        const double x = w * (t - a_) + phase + static_cast<double>(deriv) * std::numbers::pi / 2.0;
        return std::sqrt(2.0 / len) * std::pow(w, static_cast<double>(deriv)) * std::sin(x);
    }

    BasisSpec spec_;
    double a_;
    double b_;
    std::vector<double> knots_;
};

/// A basis evaluated at the sample times, with its Gram and roughness-penalty matrices.
struct Basis {
    BasisSpec spec;
    std::vector<double> sample_times;
    Eigen::MatrixXd eval;     ///< T x K, eval(t, j) = basis_j(time_t)
    Eigen::MatrixXd penalty;  ///< K x K, integral of basis_i^(m) * basis_j^(m)
    Eigen::MatrixXd gram;     ///< K x K, integral of basis_i * basis_j

    std::size_t size() const { return spec.n_basis; }
    double lower() const { return spec.domain->first; }
    double upper() const { return spec.domain->second; }
    BasisFunctions functions() const { return BasisFunctions(spec, lower(), upper()); }
};

/// Trapezoid weights on a uniform grid of `points` nodes over [a, b].
inline std::vector<double> trapezoid_weights(double a, double b, std::size_t points) {
    std::vector<double> w(points, (b - a) / static_cast<double>(points - 1));
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

/// Builds the design, Gram and penalty matrices. Integrals use the trapezoid
/// rule on a uniform grid ten times finer than the sample grid.
inline Basis build_basis(BasisSpec spec, std::span<const double> sample_times) {
    spec.validate();
    const std::size_t t_count = sample_times.size();
    if (t_count < spec.n_basis) {
        throw ConfigError("need at least n_basis=" + std::to_string(spec.n_basis) + " sample times, got " +
                          std::to_string(t_count));
    }
    for (std::size_t i = 1; i < t_count; ++i) {
        if (!(sample_times[i] > sample_times[i - 1])) throw ConfigError("sample times must be strictly increasing");
    }
    if (!spec.domain) spec.domain = std::make_pair(sample_times.front(), sample_times.back());
    spec.validate();

    Basis basis;
    basis.spec = spec;
    basis.sample_times.assign(sample_times.begin(), sample_times.end());
    const auto fns = basis.functions();
    const auto k = static_cast<Eigen::Index>(spec.n_basis);

    basis.eval.resize(static_cast<Eigen::Index>(t_count), k);
    for (std::size_t t = 0; t < t_count; ++t) basis.eval.row(static_cast<Eigen::Index>(t)) = fns.row(sample_times[t]);

    const std::size_t grid = 10 * (t_count - 1) + 1;
    const auto w = trapezoid_weights(fns.lower(), fns.upper(), grid);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(grid), k);
    Eigen::MatrixXd derivs(static_cast<Eigen::Index>(grid), k);
    const double h = (fns.upper() - fns.lower()) / static_cast<double>(grid - 1);
    for (std::size_t g = 0; g < grid; ++g) {
        const double t = g + 1 == grid ? fns.upper() : fns.lower() + h * static_cast<double>(g);
        values.row(static_cast<Eigen::Index>(g)) = fns.row(t);
        derivs.row(static_cast<Eigen::Index>(g)) = fns.row(t, spec.penalty_order);
    }
    const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(grid));
    basis.gram = values.transpose() * wv.asDiagonal() * values;
    basis.penalty = derivs.transpose() * wv.asDiagonal() * derivs;
    basis.gram = 0.5 * (basis.gram + basis.gram.transpose()).eval();
    basis.penalty = 0.5 * (basis.penalty + basis.penalty.transpose()).eval();
    return basis;
}

}  // namespace msstream::fpca
