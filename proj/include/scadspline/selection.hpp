// Penalty-parameter selection: effective parameter count, the MGCV and PREC
// scores with their inflation factors, the default lambda grid, and the grid
// search itself.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "scadspline/basis.hpp"
#include "scadspline/penalty.hpp"
#include "scadspline/solver.hpp"

namespace scadspline {

enum class Criterion { kMgcv, kPrec };

inline std::string to_string(Criterion c) { return c == Criterion::kMgcv ? "mgcv" : "prec"; }

/// Inflation factor specification: a constant, or one of the sample-size /
/// knot-count driven forms ln(n)/2, ln(n), ln(k)/2, ln(k).
struct GammaSpec {
    enum class Kind { kConstant, kLnNOverTwo, kLnN, kLnKOverTwo, kLnK };
    Kind kind = Kind::kConstant;
    double value = 2.5;

    static GammaSpec constant(double v) {
        if (!(v >= 1.0)) throw std::invalid_argument("GammaSpec: constant gamma must be >= 1");
        return GammaSpec{Kind::kConstant, v};
    }

    /// Accepts a number or one of "ln_n_over_2", "ln_n", "ln_k_over_2", "ln_k".
    static GammaSpec parse(const std::string& text) {
        if (text == "ln_n_over_2") return {Kind::kLnNOverTwo, 0.0};
        if (text == "ln_n") return {Kind::kLnN, 0.0};
        if (text == "ln_k_over_2") return {Kind::kLnKOverTwo, 0.0};
        if (text == "ln_k") return {Kind::kLnK, 0.0};
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(text, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("GammaSpec: unrecognized gamma '" + text + "'");
        }
        if (pos != text.size())
            throw std::invalid_argument("GammaSpec: unrecognized gamma '" + text + "'");
        return constant(v);
    }

    [[nodiscard]] std::string label() const {
        switch (kind) {
            case Kind::kLnNOverTwo: return "ln_n_over_2";
            case Kind::kLnN: return "ln_n";
            case Kind::kLnKOverTwo: return "ln_k_over_2";
            case Kind::kLnK: return "ln_k";
            case Kind::kConstant: break;
        }
        return std::to_string(value);
    }
};

inline double resolve_gamma(const GammaSpec& spec, int n, int k) {
    if (n <= 1 || k <= 1) throw std::invalid_argument("resolve_gamma: need n > 1 and k > 1");
    switch (spec.kind) {
        case GammaSpec::Kind::kConstant: return spec.value;
        case GammaSpec::Kind::kLnNOverTwo: return std::log(static_cast<double>(n)) / 2.0;
        case GammaSpec::Kind::kLnN: return std::log(static_cast<double>(n));
        case GammaSpec::Kind::kLnKOverTwo: return std::log(static_cast<double>(k)) / 2.0;
        case GammaSpec::Kind::kLnK: return std::log(static_cast<double>(k));
    }
    throw std::logic_error("resolve_gamma: unreachable");
}

/// Effective number of parameters e = tr[X (X'X + n Sigma)^{-1} X'], computed
/// as tr[(X'X + n Sigma)^{-1} X'X] without forming the n x n projection.
inline double effective_params(const Eigen::MatrixXd& X_active, const Eigen::VectorXd& sigma_diag) {
    if (sigma_diag.size() != X_active.cols())
        throw std::invalid_argument("effective_params: Sigma dimension mismatch");
    if ((sigma_diag.array() < 0.0).any())
        throw std::invalid_argument("effective_params: Sigma must be nonnegative");
    Eigen::MatrixXd gram = X_active.transpose() * X_active;
    Eigen::VectorXd n_sigma = static_cast<double>(X_active.rows()) * sigma_diag;
    return detail::effective_params_from_gram(gram, n_sigma);
}

/// MGCV(theta) = (rss/n) / (1 - gamma e / n)^2; +inf once gamma e >= n so a
/// saturated grid point can never win.
inline double mgcv_score(double rss, int n, double e, double gamma) {
    const double denom = 1.0 - gamma * e / static_cast<double>(n);
    if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
    return (rss / static_cast<double>(n)) / (denom * denom);
}

/// PREC(theta) = rss/n + 2 gamma sigma^2 e / n.
inline double prec_score(double rss, int n, double e, double gamma, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::domain_error("prec_score: sigma2 must be positive");
    return rss / static_cast<double>(n) + 2.0 * gamma * sigma2 * e / static_cast<double>(n);
}

/// Upper bound above which every standardized coefficient is thresholded:
/// 1.05 * max over knot columns of |(X'y)_j / w_j| / n (degenerate columns
/// skipped).  Fits run at or above this value clamp every knot.
inline double lambda_kill_bound(const FitWorkspace& ws,
                                const std::vector<Eigen::Index>& penalized) {
    double bound = 0.0;
    for (std::size_t j = 0; j < penalized.size(); ++j) {
        const double w = ws.weights.values(static_cast<Eigen::Index>(j));
        if (w <= 0.0) continue;
        bound = std::max(bound, std::abs(ws.xty(penalized[j])) / w);
    }
    return bound;  // caller divides by n and scales
}

/// Default search grid: lambda = 0, then `size - 1` log-spaced values from
/// lambda_top/1000 up to lambda_top = 1.05 * max_j |w_j beta0_j|, then the
/// kill bound 1.05 * max_j |(X'y)_j| / (w_j n) as the final point.  The top
/// of the log range is the largest standardized coefficient of the initial
/// fit (beyond it thresholding dominates), and the kill point guarantees the
/// path ends at the empty knot set.
inline std::vector<double> default_lambda_grid(const DesignMatrix& X, const FitWorkspace& ws,
                                               int size = 40) {
    if (size < 2) throw std::invalid_argument("default_lambda_grid: size must be >= 2");
    const auto k = static_cast<Eigen::Index>(X.penalized.size());
    double top = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
        const double w = ws.weights.values(j);
        if (w <= 0.0) continue;
        top = std::max(top, std::abs(w * ws.beta0(X.penalized[static_cast<std::size_t>(j)])));
    }
    top *= 1.05;
    const double kill =
        1.05 * lambda_kill_bound(ws, X.penalized) / static_cast<double>(X.values.rows());
    std::vector<double> grid;
    grid.push_back(0.0);
    if (top > 0.0) {
        const double lo = top * 1e-3;
        const int points = size - 1;
        for (int i = 0; i < points; ++i) {
            const double f = points == 1 ? 1.0 : static_cast<double>(i) / (points - 1);
            grid.push_back(lo * std::pow(top / lo, f));
        }
    }
    if (kill > (grid.empty() ? 0.0 : grid.back())) grid.push_back(kill);
    return grid;
}

struct SelectionConfig {
    Criterion criterion = Criterion::kMgcv;
    GammaSpec gamma = GammaSpec{};          // constant 2.5
    std::optional<double> sigma2;           // PREC only; estimated when absent
    bool warm_start = false;                // reuse the previous lambda's coefficients
    int workers = 1;                        // >1 runs cold-start grid points in parallel
};

struct SelectionPathPoint {
    double lambda = 0.0;
    double score = 0.0;
    double effective_params = 0.0;
    int active_knots = 0;
};

struct SelectionResult {
    Criterion criterion = Criterion::kMgcv;
    double gamma_resolved = 0.0;
    std::vector<SelectionPathPoint> path;
    double best_lambda = 0.0;
    PenalizedFit best_fit;
    std::optional<double> sigma2_used;  // PREC only
    double lambda_max = 0.0;            // top of the searched grid
};

/// Fit every grid point and return the score-minimizing fit; ties break
/// toward the larger lambda. Grid points whose fit throws are scored +inf.
inline SelectionResult select_lambda(const DesignMatrix& X, const Eigen::VectorXd& y,
                                     const FitWorkspace& ws, const ScadParams& params_template,
                                     std::vector<double> grid, const SelectionConfig& sel,
                                     const FitConfig& fit_config = {}) {
    if (grid.empty()) throw std::invalid_argument("select_lambda: grid must be non-empty");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("select_lambda: grid must be sorted ascending");

    const int n = static_cast<int>(X.values.rows());
    const int k = static_cast<int>(X.penalized.size());
    const double gamma = resolve_gamma(sel.gamma, n, std::max(k, 2));

    std::optional<double> sigma2 = sel.sigma2;
    if (sel.criterion == Criterion::kPrec && !sigma2) {
        // sigma^2 from the unpenalized full fit: rss / (n - e)
        ScadParams zero = params_template;
        zero.lambda = 0.0;
        PenalizedFit full = lqa_fit(X, y, zero, ws, fit_config);
        const double dof = static_cast<double>(n) - full.effective_params;
        if (!(dof >= 1.0))
            throw std::runtime_error("select_lambda: cannot estimate sigma2, model saturates");
        sigma2 = full.rss / dof;
    }

    const auto score_fit = [&](const PenalizedFit& fit) {
        return sel.criterion == Criterion::kMgcv
                   ? mgcv_score(fit.rss, n, fit.effective_params, gamma)
                   : prec_score(fit.rss, n, fit.effective_params, gamma, *sigma2);
    };

    std::vector<PenalizedFit> fits(grid.size());
    std::vector<bool> failed(grid.size(), false);

    const auto run_point = [&](std::size_t i, const Eigen::VectorXd* start) {
        ScadParams p = params_template;
        p.lambda = grid[i];
        try {
            fits[i] = lqa_fit(X, y, p, ws, fit_config, start);
        } catch (const std::exception&) {
            failed[i] = true;
        }
    };

    const int workers = std::max(1, sel.workers);
    if (sel.warm_start || workers == 1) {
        Eigen::VectorXd previous;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const Eigen::VectorXd* start =
                (sel.warm_start && i > 0 && !failed[i - 1]) ? &previous : nullptr;
            run_point(i, start);
            if (sel.warm_start && !failed[i]) previous = fits[i].coefficients;
        }
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&, t]() {
                for (std::size_t i = static_cast<std::size_t>(t); i < grid.size();
                     i += static_cast<std::size_t>(workers))
                    run_point(i, nullptr);
            });
        }
        for (auto& th : pool) th.join();
    }

    SelectionResult result;
    result.criterion = sel.criterion;
    result.gamma_resolved = gamma;
    result.sigma2_used = sigma2;
    result.lambda_max = grid.back();

    std::size_t best = grid.size();
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double score = std::numeric_limits<double>::infinity();
        SelectionPathPoint point;
        point.lambda = grid[i];
        if (!failed[i]) {
            score = score_fit(fits[i]);
            point.effective_params = fits[i].effective_params;
            point.active_knots = static_cast<int>(fits[i].active_knots.size());
        }
        point.score = score;
        result.path.push_back(point);
        if (score <= best_score && !failed[i]) {  // ties break toward larger lambda
            best_score = score;
            best = i;
        }
    }
    if (best == grid.size()) throw std::runtime_error("select_lambda: every grid point failed");
    result.best_lambda = grid[best];
    result.best_fit = fits[best];
    return result;
}

/// Overload taking raw weights; builds the workspace internally.
inline SelectionResult select_lambda(const DesignMatrix& X, const Eigen::VectorXd& y,
                                     const PenaltyWeights& weights,
                                     const ScadParams& params_template, std::vector<double> grid,
                                     const SelectionConfig& sel, const FitConfig& fit_config = {}) {
    FitWorkspace ws = make_workspace(X, y, fit_config.ridge_jitter);
    ws.weights = weights;
    return select_lambda(X, y, ws, params_template, std::move(grid), sel, fit_config);
}

/// Univariate pipeline: build the design, weights and default grid for the
/// given basis, run the search, and stamp the basis into the returned fits.
inline SelectionResult select_spline(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                     const BasisSpec& spec, double a,
                                     const SelectionConfig& sel, const FitConfig& fit_config = {},
                                     int grid_size = 40) {
    DesignMatrix X = design_matrix(x, spec);
    FitWorkspace ws = make_workspace(X, y, fit_config.ridge_jitter);
    ScadParams params;
    params.a = a;
    SelectionResult result = select_lambda(X, y, ws, params,
                                           default_lambda_grid(X, ws, grid_size), sel, fit_config);
    result.best_fit.basis = spec;
    return result;
}

/// Univariate single-lambda fit with the same plumbing as select_spline.
inline PenalizedFit fit_spline(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                               const BasisSpec& spec, const ScadParams& params,
                               const FitConfig& fit_config = {}) {
    DesignMatrix X = design_matrix(x, spec);
    FitWorkspace ws = make_workspace(X, y, fit_config.ridge_jitter);
    PenalizedFit fit = lqa_fit(X, y, params, ws, fit_config);
    fit.basis = spec;
    return fit;
}

}  // namespace scadspline
