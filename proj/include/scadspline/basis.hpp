// Truncated power basis for regression splines.
//
// A spline of order p with interior knots t_1 < ... < t_k is written in the
// basis {1, x, ..., x^{p-1}, (x-t_1)_+^{p-1}, ..., (x-t_k)_+^{p-1}}.
// Zeroing the coefficient of a truncated-power column removes its knot, so
// knot selection reduces to variable selection on the last k columns.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace scadspline {

/// Spline order and interior knot locations.
struct BasisSpec {
    int order = 3;               ///< polynomial order p (p=3 gives a quadratic spline)
    std::vector<double> knots;   ///< strictly increasing interior knots

    [[nodiscard]] Eigen::Index dimension() const {
        return static_cast<Eigen::Index>(order) + static_cast<Eigen::Index>(knots.size());
    }

    void validate() const {
        if (order < 1) throw std::invalid_argument("BasisSpec: order must be >= 1");
        for (std::size_t i = 1; i < knots.size(); ++i) {
            if (!(knots[i] > knots[i - 1]))
                throw std::invalid_argument("BasisSpec: knots must be strictly increasing");
        }
    }
};

/// Design matrix together with the column indices subject to the penalty.
///
/// For a univariate basis the penalized columns are the k truncated-power
/// columns; additive designs penalize the knot columns of every block.
struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<Eigen::Index> penalized;
};

/// Expected maximum run length of same-sign errors in n trials,
/// L_max(alpha) = -log2{-(1/n) ln(1-alpha)}.
inline double lmax(int n, double alpha) {
    if (n < 1) throw std::domain_error("lmax: n must be >= 1");
    if (!(alpha > 0.0) || !(alpha < 1.0)) throw std::domain_error("lmax: alpha must lie in (0,1)");
    return -std::log2(-std::log1p(-alpha) / static_cast<double>(n));
}

/// Minimum initial knot count k = floor(n * divisor / L_max(alpha)) + 1.
///
/// The divisor is the reciprocal span fraction; 3 is the standard choice and
/// 2.5 the conservative one.
inline int min_initial_knots(int n, double alpha = 0.1, double divisor = 3.0) {
    if (!(divisor > 0.0)) throw std::domain_error("min_initial_knots: divisor must be positive");
    const double span = lmax(n, alpha);
    return static_cast<int>(std::floor(static_cast<double>(n) * divisor / span)) + 1;
}

/// Quantile knot placement: t_i = x_(floor(n*i/(k+1))) for i = 1..k, using
/// 1-based order statistics of the sorted sample. Indices are clamped to
/// [1, n] and duplicate knots produced by tied design points are collapsed,
/// so the returned sequence may be shorter than k.
inline std::vector<double> place_knots(std::vector<double> x, int k) {
    if (x.empty()) throw std::invalid_argument("place_knots: x must be non-empty");
    if (k < 1) throw std::invalid_argument("place_knots: k must be >= 1");
    const auto n = static_cast<long long>(x.size());
    if (k >= n) throw std::invalid_argument("place_knots: k must be smaller than the sample size");
    std::sort(x.begin(), x.end());
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(k));
    for (long long i = 1; i <= k; ++i) {
        long long idx = n * i / (static_cast<long long>(k) + 1);
        idx = std::clamp<long long>(idx, 1, n);
        const double t = x[static_cast<std::size_t>(idx - 1)];
        if (knots.empty() || t > knots.back()) knots.push_back(t);
    }
    return knots;
}

/// Build the n x (p+k) truncated power design matrix at the points x.
inline DesignMatrix design_matrix(const Eigen::VectorXd& x, const BasisSpec& spec) {
    spec.validate();
    const auto n = x.size();
    const auto p = static_cast<Eigen::Index>(spec.order);
    const auto k = static_cast<Eigen::Index>(spec.knots.size());
    DesignMatrix out;
    out.values.resize(n, p + k);
    out.values.col(0).setOnes();
    for (Eigen::Index j = 1; j < p; ++j)
        out.values.col(j) = out.values.col(j - 1).cwiseProduct(x);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double t = spec.knots[static_cast<std::size_t>(j)];
        if (spec.order == 1) {
            // order 1 is the step-function basis: (x-t)_+^0 := 1{x > t}
            out.values.col(p + j) = (x.array() > t).cast<double>();
        } else {
            out.values.col(p + j) =
                (x.array() - t).max(0.0).pow(static_cast<double>(spec.order - 1));
        }
        out.penalized.push_back(p + j);
    }
    return out;
}

/// Evaluate the fitted spline at the points x.
inline Eigen::VectorXd predict(const Eigen::VectorXd& coeffs, const BasisSpec& spec,
                               const Eigen::VectorXd& x) {
    if (coeffs.size() != spec.dimension())
        throw std::invalid_argument("predict: coefficient length must equal order + #knots");
    return design_matrix(x, spec).values * coeffs;
}

}  // namespace scadspline
