// Penalized least-squares solver.
//
// Minimizes ||y - X beta||^2 + n * sum_j p_lambda(|w_j beta_j|) over the
// penalized columns via the local quadratic approximation: each sweep clamps
// standardized coefficients that have collapsed to zero, rebuilds the
// diagonal curvature matrix on the surviving columns, and solves one ridge
// system.  Once a knot coefficient is clamped it stays at zero for the rest
// of the fit.
//
// The truncated power Gram is close to singular for dense knot sequences, so
// every inversion here is spectral: one SVD of the design feeds the penalty
// weights, the initial estimate and the rank, and the per-sweep ridge systems
// are solved through a thresholded eigendecomposition of the active Gram.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "scadspline/basis.hpp"
#include "scadspline/penalty.hpp"

namespace scadspline {

namespace detail {
// Relative cutoff on design singular values for the least-squares estimate.
// The Gram of a fine truncated power basis carries genuine directions all
// the way down to the double precision floor, so this sits just above
// machine noise.
inline constexpr double kSingularRelTol = 1e-13;
// Relative cutoff on eigenvalues of the (Gram + n Sigma) ridge systems.
inline constexpr double kEigRelTol = 1e-13;
// Generalized-inverse cutoff for the penalty weights and the standardized
// starting point of the penalized iteration: singular values of (1/n) X'X
// below 1e-10 times the largest are treated as zero.  Weights and starting
// point must drop the same directions, otherwise |w_j beta_j0| loses its
// sigma/sqrt(n) calibration and the thresholding scale is meaningless.
inline constexpr double kGramRelTol = 1e-10;
}  // namespace detail

struct FitConfig {
    int max_iterations = 100;
    double convergence_tol = 1e-6;  ///< on max_j |dbeta_j| / (1 + |beta_j|)
    double zero_clamp = 1e-6;       ///< relative floor on standardized coefficients
    double ridge_jitter = 1e-10;    ///< Tikhonov term for a fully degenerate initial solve

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("FitConfig: max_iterations must be >= 1");
        if (!(convergence_tol > 0.0)) throw std::invalid_argument("FitConfig: convergence_tol must be > 0");
        if (!(zero_clamp > 0.0)) throw std::invalid_argument("FitConfig: zero_clamp must be > 0");
        if (!(ridge_jitter >= 0.0)) throw std::invalid_argument("FitConfig: ridge_jitter must be >= 0");
    }
};

/// Per-column standardization weights for the penalized columns, plus the
/// indices (into DesignMatrix::penalized) whose generalized-inverse diagonal
/// was nonpositive and whose weight was therefore set to zero.
struct PenaltyWeights {
    Eigen::VectorXd values;
    std::vector<Eigen::Index> degenerate;
};

/// Shared factorization of one (X, y) problem, reused across a lambda grid.
struct FitWorkspace {
    Eigen::MatrixXd gram;             // X'X
    Eigen::VectorXd xty;              // X'y
    double yty = 0.0;
    Eigen::MatrixXd right_vectors;    // V of X = U S V'
    Eigen::VectorXd singular_values;  // S
    Eigen::Index rank = 0;            // #{s_i > tol * s_max}
    Eigen::VectorXd beta0;            // generalized-inverse least squares
    PenaltyWeights weights;           // aligned with X.penalized
};

namespace detail {

inline PenaltyWeights weights_from_svd(const Eigen::MatrixXd& V, const Eigen::VectorXd& s,
                                       Eigen::Index n_rows,
                                       const std::vector<Eigen::Index>& penalized) {
    const double smax = s.size() > 0 ? s(0) : 0.0;
    const double tol = kSingularRelTol * smax;
    // diag of ((1/n) X'X)^+ = sum_i V_ji^2 * n / s_i^2 over kept directions
    Eigen::VectorXd inv_gram_diag = Eigen::VectorXd::Zero(V.rows());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) <= tol) continue;
        const double scale = static_cast<double>(n_rows) / (s(i) * s(i));
        inv_gram_diag += scale * V.col(i).cwiseAbs2();
    }
    PenaltyWeights w;
    w.values.resize(static_cast<Eigen::Index>(penalized.size()));
    for (std::size_t j = 0; j < penalized.size(); ++j) {
        const double d = inv_gram_diag(penalized[j]);
        if (d > 0.0) {
            w.values(static_cast<Eigen::Index>(j)) = 1.0 / std::sqrt(d);
        } else {
            w.values(static_cast<Eigen::Index>(j)) = 0.0;
            w.degenerate.push_back(static_cast<Eigen::Index>(j));
        }
    }
    return w;
}

/// Solve M x = b for symmetric positive semidefinite M through an
/// eigendecomposition, discarding directions below the relative cutoff.
inline Eigen::VectorXd psd_solve(const Eigen::MatrixXd& M, const Eigen::VectorXd& b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("psd_solve: eigendecomposition failed");
    const Eigen::VectorXd& d = eig.eigenvalues();
    const double dmax = d(d.size() - 1);
    if (!(dmax > 0.0)) return Eigen::VectorXd::Zero(b.size());
    const double tol = kEigRelTol * dmax;
    Eigen::VectorXd proj = eig.eigenvectors().transpose() * b;
    for (Eigen::Index i = 0; i < d.size(); ++i) proj(i) = d(i) > tol ? proj(i) / d(i) : 0.0;
    return eig.eigenvectors() * proj;
}

}  // namespace detail

/// Build the shared factorization: SVD of the design, penalty weights,
/// numerical rank, and the generalized-inverse least-squares estimate.
inline FitWorkspace make_workspace(const DesignMatrix& X, const Eigen::VectorXd& y,
                                   double ridge_jitter = 1e-10) {
    if (X.values.rows() != y.size())
        throw std::invalid_argument("make_workspace: row/response dimension mismatch");
    if (X.values.cols() == 0) throw std::invalid_argument("make_workspace: design has no columns");
    FitWorkspace ws;
    ws.gram.noalias() = X.values.transpose() * X.values;
    ws.xty.noalias() = X.values.transpose() * y;
    ws.yty = y.squaredNorm();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(X.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ws.right_vectors = svd.matrixV();
    ws.singular_values = svd.singularValues();
    const double smax = ws.singular_values.size() > 0 ? ws.singular_values(0) : 0.0;
    const double tol = detail::kSingularRelTol * smax;

    Eigen::VectorXd uty = svd.matrixU().transpose() * y;
    ws.rank = 0;
    for (Eigen::Index i = 0; i < ws.singular_values.size(); ++i) {
        const double s = ws.singular_values(i);
        if (s > tol) {
            uty(i) /= s;
            ++ws.rank;
        } else {
            // jitter keeps an all-degenerate solve finite instead of 0/0
            uty(i) = ridge_jitter > 0.0 ? uty(i) * s / (s * s + ridge_jitter) : 0.0;
        }
    }
    ws.beta0 = ws.right_vectors * uty;
    ws.weights = detail::weights_from_svd(ws.right_vectors, ws.singular_values,
                                          X.values.rows(), X.penalized);
    return ws;
}

/// Standardization weights w_j = [((1/n) X'X)^+_{jj}]^{-1/2} for the
/// penalized columns, via the generalized inverse of the Gram.
inline PenaltyWeights penalty_weights(const DesignMatrix& X) {
    if (X.values.rows() < 1) throw std::invalid_argument("penalty_weights: X needs at least one row");
    if (X.values.cols() == 0) throw std::invalid_argument("penalty_weights: X has no columns");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(X.values, Eigen::ComputeThinV);
    return detail::weights_from_svd(svd.matrixV(), svd.singularValues(), X.values.rows(),
                                    X.penalized);
}

/// Minimum-norm least-squares estimate through the thresholded SVD.
inline Eigen::VectorXd initial_coefficients(const DesignMatrix& X, const Eigen::VectorXd& y,
                                            double ridge_jitter = 1e-10) {
    return make_workspace(X, y, ridge_jitter).beta0;
}

struct PenalizedFit {
    BasisSpec basis;  ///< filled by the univariate/additive pipelines
    Eigen::VectorXd coefficients;
    std::vector<Eigen::Index> active_knots;  ///< indices into DesignMatrix::penalized
    Eigen::VectorXd weights;
    double lambda = 0.0;
    double a = 3.7;
    int iterations = 0;
    bool converged = true;
    bool objective_monotone = true;  ///< monitored, not enforced
    double objective = 0.0;
    double effective_params = 0.0;
    double rss = 0.0;
};

/// ||y - X beta||^2 + n * sum_j scad_value(|w_j beta_j|) over penalized columns.
inline double objective(const Eigen::VectorXd& beta, const DesignMatrix& X,
                        const Eigen::VectorXd& y, const ScadParams& params,
                        const Eigen::VectorXd& weights) {
    if (beta.size() != X.values.cols() || y.size() != X.values.rows() ||
        weights.size() != static_cast<Eigen::Index>(X.penalized.size()))
        throw std::invalid_argument("objective: dimension mismatch");
    double value = (y - X.values * beta).squaredNorm();
    const double n = static_cast<double>(X.values.rows());
    for (std::size_t j = 0; j < X.penalized.size(); ++j) {
        const double theta =
            std::abs(weights(static_cast<Eigen::Index>(j)) * beta(X.penalized[j]));
        value += n * scad_value(theta, params);
    }
    return value;
}

namespace detail {

/// Effective parameters tr[(G_a + n Sigma)^{-1} G_a] on the active columns,
/// with the inverse taken in the thresholded spectral sense.
inline double effective_params_from_gram(const Eigen::MatrixXd& gram_active,
                                         const Eigen::VectorXd& n_sigma_diag) {
    Eigen::MatrixXd M = gram_active;
    M.diagonal() += n_sigma_diag;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("effective_params: eigendecomposition failed");
    const Eigen::VectorXd& d = eig.eigenvalues();
    const double dmax = d(d.size() - 1);
    if (!(dmax > 0.0)) return 0.0;
    const double tol = kEigRelTol * dmax;
    // tr(M^+ G) = sum_i v_i' G v_i / d_i over kept eigenpairs
    double trace = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d(i) <= tol) continue;
        const Eigen::VectorXd v = eig.eigenvectors().col(i);
        trace += v.dot(gram_active * v) / d(i);
    }
    return trace;
}

struct ActiveSystem {
    std::vector<Eigen::Index> columns;        // design-column indices, monomials first
    std::vector<Eigen::Index> knot_positions; // for each active knot, its index into X.penalized
};

}  // namespace detail

/// Run the LQA iteration at a fixed lambda. Weights must align with
/// X.penalized. When beta0 is null the workspace's generalized-inverse
/// least-squares estimate is used as the starting point.
inline PenalizedFit lqa_fit(const DesignMatrix& X, const Eigen::VectorXd& y,
                            const ScadParams& params, const FitWorkspace& ws,
                            const FitConfig& config = {},
                            const Eigen::VectorXd* beta0 = nullptr) {
    params.validate();
    config.validate();
    const Eigen::Index m = X.values.cols();
    const Eigen::Index n = X.values.rows();
    const auto k = static_cast<Eigen::Index>(X.penalized.size());
    if (ws.weights.values.size() != k)
        throw std::invalid_argument("lqa_fit: weights/penalized size mismatch");

    PenalizedFit fit;
    fit.lambda = params.lambda;
    fit.a = params.a;
    fit.weights = ws.weights.values;

    // Column mask: true while the column participates in the ridge system.
    std::vector<bool> is_penalized(static_cast<std::size_t>(m), false);
    std::vector<Eigen::Index> knot_of_column(static_cast<std::size_t>(m), -1);
    for (Eigen::Index j = 0; j < k; ++j) {
        is_penalized[static_cast<std::size_t>(X.penalized[static_cast<std::size_t>(j)])] = true;
        knot_of_column[static_cast<std::size_t>(X.penalized[static_cast<std::size_t>(j)])] = j;
    }

    Eigen::VectorXd beta = beta0 != nullptr ? *beta0 : ws.beta0;
    if (beta.size() != m) throw std::invalid_argument("lqa_fit: beta0 dimension mismatch");

    std::vector<bool> active(static_cast<std::size_t>(k), true);

    const bool penalize = params.lambda > 0.0;
    std::vector<double> objective_trace;

    if (penalize) {
        objective_trace.push_back(objective(beta, X, y, params, ws.weights.values));
        fit.converged = false;
        for (int iter = 0; iter < config.max_iterations; ++iter) {
            fit.iterations = iter + 1;

            // Clamp standardized coefficients that have collapsed; they never
            // re-enter ("once a coefficient is shrunken to zero, it stays").
            double smax = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) {
                if (!active[static_cast<std::size_t>(j)]) continue;
                const double s = std::abs(ws.weights.values(j) * beta(X.penalized[static_cast<std::size_t>(j)]));
                smax = std::max(smax, s);
            }
            const double floor = config.zero_clamp * std::max(1.0, smax);
            for (Eigen::Index j = 0; j < k; ++j) {
                if (!active[static_cast<std::size_t>(j)]) continue;
                const Eigen::Index col = X.penalized[static_cast<std::size_t>(j)];
                if (std::abs(ws.weights.values(j) * beta(col)) < floor) {
                    beta(col) = 0.0;
                    active[static_cast<std::size_t>(j)] = false;
                }
            }

            // Assemble the active system: unpenalized columns always stay in.
            std::vector<Eigen::Index> cols;
            cols.reserve(static_cast<std::size_t>(m));
            for (Eigen::Index c = 0; c < m; ++c) {
                if (!is_penalized[static_cast<std::size_t>(c)]) cols.push_back(c);
                else if (active[static_cast<std::size_t>(knot_of_column[static_cast<std::size_t>(c)])]) cols.push_back(c);
            }
            const auto ma = static_cast<Eigen::Index>(cols.size());

            Eigen::MatrixXd M(ma, ma);
            Eigen::VectorXd rhs(ma);
            for (Eigen::Index r = 0; r < ma; ++r) {
                rhs(r) = ws.xty(cols[static_cast<std::size_t>(r)]);
                for (Eigen::Index c = 0; c <= r; ++c) {
                    const double g = ws.gram(cols[static_cast<std::size_t>(r)], cols[static_cast<std::size_t>(c)]);
                    M(r, c) = g;
                    M(c, r) = g;
                }
            }
            // LQA curvature of p(|w beta|): n * w^2 * p'(|w beta|) / |w beta|
            for (Eigen::Index r = 0; r < ma; ++r) {
                const Eigen::Index col = cols[static_cast<std::size_t>(r)];
                if (!is_penalized[static_cast<std::size_t>(col)]) continue;
                const Eigen::Index j = knot_of_column[static_cast<std::size_t>(col)];
                const double w = ws.weights.values(j);
                const double s = std::abs(w * beta(col));
                if (s > 0.0)
                    M(r, r) += static_cast<double>(n) * w * w *
                               scad_derivative(s, params) / s;
            }

            Eigen::VectorXd solution = detail::psd_solve(M, rhs);

            Eigen::VectorXd beta_new = Eigen::VectorXd::Zero(m);
            for (Eigen::Index r = 0; r < ma; ++r) beta_new(cols[static_cast<std::size_t>(r)]) = solution(r);

            double delta = 0.0;
            for (Eigen::Index c = 0; c < m; ++c)
                delta = std::max(delta, std::abs(beta_new(c) - beta(c)) / (1.0 + std::abs(beta(c))));
            beta = beta_new;
            objective_trace.push_back(objective(beta, X, y, params, ws.weights.values));

            if (delta < config.convergence_tol) {
                fit.converged = true;
                break;
            }
        }
        for (std::size_t i = 1; i < objective_trace.size(); ++i) {
            if (objective_trace[i] > objective_trace[i - 1] * (1.0 + 1e-12) + 1e-12)
                fit.objective_monotone = false;
        }
    }

    fit.coefficients = beta;
    for (Eigen::Index j = 0; j < k; ++j)
        if (active[static_cast<std::size_t>(j)]) fit.active_knots.push_back(j);

    fit.rss = (y - X.values * beta).squaredNorm();
    fit.objective = objective(beta, X, y, params, ws.weights.values);

    if (!penalize) {
        // Unpenalized fit: beta0 itself, with the design's numerical rank as
        // its degrees of freedom.
        fit.effective_params = static_cast<double>(ws.rank);
        return fit;
    }

    // e(theta) from the converged coefficients: rebuild Sigma at beta-hat on
    // the active columns and take the ridge trace.
    std::vector<Eigen::Index> cols;
    for (Eigen::Index c = 0; c < m; ++c) {
        if (!is_penalized[static_cast<std::size_t>(c)]) cols.push_back(c);
        else if (active[static_cast<std::size_t>(knot_of_column[static_cast<std::size_t>(c)])]) cols.push_back(c);
    }
    const auto ma = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd gram_active(ma, ma);
    Eigen::VectorXd n_sigma = Eigen::VectorXd::Zero(ma);
    for (Eigen::Index r = 0; r < ma; ++r) {
        for (Eigen::Index c = 0; c <= r; ++c) {
            const double g = ws.gram(cols[static_cast<std::size_t>(r)], cols[static_cast<std::size_t>(c)]);
            gram_active(r, c) = g;
            gram_active(c, r) = g;
        }
        const Eigen::Index col = cols[static_cast<std::size_t>(r)];
        if (is_penalized[static_cast<std::size_t>(col)]) {
            const Eigen::Index j = knot_of_column[static_cast<std::size_t>(col)];
            const double w = ws.weights.values(j);
            const double s = std::abs(w * beta(col));
            if (s > 0.0)
                n_sigma(r) = static_cast<double>(n) * w * w * scad_derivative(s, params) / s;
        }
    }
    fit.effective_params = detail::effective_params_from_gram(gram_active, n_sigma);
    return fit;
}

/// Convenience overload building the workspace internally.
inline PenalizedFit lqa_fit(const DesignMatrix& X, const Eigen::VectorXd& y,
                            const ScadParams& params, const PenaltyWeights& weights,
                            const FitConfig& config = {},
                            const Eigen::VectorXd* beta0 = nullptr) {
    FitWorkspace ws = make_workspace(X, y, config.ridge_jitter);
    ws.weights = weights;
    return lqa_fit(X, y, params, ws, config, beta0);
}

}  // namespace scadspline
