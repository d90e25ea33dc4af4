// Benchmark signals and the replicate study harness.
//
// The four test functions are the classic nonparametric regression
// benchmarks: two bump/line + Gaussian-peak curves on a rescaled [-2,2]
// domain, a jump-discontinuous sine, and the Doppler signal.  run_study
// draws seeded replicates, runs the full selection pipeline on each, and
// aggregates MSE quantiles, knot survival frequencies, and the histogram of
// selected knot counts.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "scadspline/basis.hpp"
#include "scadspline/selection.hpp"
#include "scadspline/solver.hpp"

namespace scadspline {

struct ExampleSpec {
    int id = 1;
    double sigma = 0.3;
    int n = 256;
    int replicates = 400;
    double target_sd_ratio = 2.80;  ///< SD(f)/sigma on a dense grid
};

/// The four benchmark rows: (sigma, n, replicates, SD(f)/sigma).
inline ExampleSpec example_spec(int id) {
    switch (id) {
        case 1: return {1, 0.3, 256, 400, 2.80};
        case 2: return {2, 0.4, 256, 400, 3.16};
        case 3: return {3, 1.0, 2048, 31, 6.54};
        case 4: return {4, 1.0, 2048, 31, 6.36};
        default: throw std::invalid_argument("example_spec: id must be 1..4");
    }
}

inline double test_function(int id, double t) {
    switch (id) {
        case 1: {
            const double u = 4.0 * t - 2.0;
            return std::sin(2.0 * u) + 2.0 * std::exp(-16.0 * u * u);
        }
        case 2: {
            const double u = 4.0 * t - 2.0;
            return u + 2.0 * std::exp(-16.0 * u * u);
        }
        case 3: {
            const auto sgn = [](double v) { return (v > 0.0) - (v < 0.0); };
            return 2.2 * (4.0 * std::sin(4.0 * M_PI * t) - sgn(t - 0.3) - sgn(0.72 - t));
        }
        case 4:
            return 22.0 * std::sqrt(t * (1.0 - t)) *
                   std::sin(2.0 * M_PI * 1.05 / (t + 0.05));
        default: throw std::invalid_argument("test_function: id must be 1..4");
    }
}

struct Dataset {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

/// Draw one replicate: x uniform on [0,1] (or the fixed midpoint grid in
/// equispaced mode), y = f(x) + sigma * N(0,1). Fully determined by the seed.
inline Dataset generate_dataset(const ExampleSpec& example, std::uint64_t seed,
                                bool equispaced = false) {
    std::mt19937_64 rng(seed);
    Dataset data;
    data.x.resize(example.n);
    data.y.resize(example.n);
    if (equispaced) {
        for (int i = 0; i < example.n; ++i)
            data.x(i) = (static_cast<double>(i) + 0.5) / static_cast<double>(example.n);
    } else {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int i = 0; i < example.n; ++i) data.x(i) = unif(rng);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < example.n; ++i)
        data.y(i) = test_function(example.id, data.x(i)) + example.sigma * normal(rng);
    return data;
}

/// Mean squared error of the fitted spline against the true signal over the
/// design points.
inline double mse(const PenalizedFit& fit, const ExampleSpec& example, const Eigen::VectorXd& x) {
    Eigen::VectorXd fitted = predict(fit.coefficients, fit.basis, x);
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double d = fitted(i) - test_function(example.id, x(i));
        total += d * d;
    }
    return total / static_cast<double>(x.size());
}

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - std::floor(h)) * (values[lo + 1] - values[lo]);
}

struct StudyConfig {
    int knots = 0;  ///< 0 requests min_initial_knots(n, alpha, divisor)
    double alpha = 0.1;
    double divisor = 3.0;
    int order = 3;
    double a = 3.7;
    Criterion criterion = Criterion::kMgcv;
    GammaSpec gamma = GammaSpec{};  // constant 2.5
    std::optional<double> sigma2;   ///< PREC: fixed error variance; estimated when absent
    bool use_true_sigma2 = false;   ///< PREC: plug in the example's sigma^2
    bool equispaced = false;
    int grid_size = 40;
    int workers = 1;
    FitConfig fit;
};

struct ReplicateRecord {
    std::uint64_t seed = 0;
    double mse_x1000 = 0.0;
    int knots_selected = 0;
    int iterations = 0;
    double best_lambda = 0.0;
    bool failed = false;
};

struct StudySummary {
    int example_id = 1;
    std::uint64_t base_seed = 0;
    int initial_knots = 0;
    double median_mse_x1000 = 0.0;
    double iqr_mse_x1000 = 0.0;
    std::vector<int> knot_frequency;      ///< survival count per initial knot index
    std::map<int, int> knot_count_histogram;
    std::vector<ReplicateRecord> replicates;
    int failures = 0;
};

/// Run one seeded replicate of the study pipeline.
inline ReplicateRecord run_replicate(const ExampleSpec& example, const StudyConfig& config,
                                     std::uint64_t seed, std::vector<Eigen::Index>* survivors) {
    ReplicateRecord rec;
    rec.seed = seed;
    Dataset data = generate_dataset(example, seed, config.equispaced);

    const int k = config.knots > 0 ? config.knots
                                   : min_initial_knots(example.n, config.alpha, config.divisor);
    BasisSpec spec;
    spec.order = config.order;
    spec.knots = place_knots(std::vector<double>(data.x.data(), data.x.data() + data.x.size()), k);

    SelectionConfig sel;
    sel.criterion = config.criterion;
    sel.gamma = config.gamma;
    if (config.sigma2)
        sel.sigma2 = config.sigma2;
    else if (config.use_true_sigma2)
        sel.sigma2 = example.sigma * example.sigma;

    SelectionResult result =
        select_spline(data.x, data.y, spec, config.a, sel, config.fit, config.grid_size);

    rec.mse_x1000 = 1000.0 * mse(result.best_fit, example, data.x);
    rec.knots_selected = static_cast<int>(result.best_fit.active_knots.size());
    rec.iterations = result.best_fit.iterations;
    rec.best_lambda = result.best_lambda;
    if (survivors != nullptr) *survivors = result.best_fit.active_knots;
    return rec;
}

/// Replicate study with per-replicate seeds base_seed + index. Aggregation is
/// index-ordered, so the summary does not depend on the worker count.
inline StudySummary run_study(const ExampleSpec& example, const StudyConfig& config,
                              int replicates, std::uint64_t base_seed) {
    if (replicates < 1) throw std::invalid_argument("run_study: replicates must be >= 1");
    const int k = config.knots > 0 ? config.knots
                                   : min_initial_knots(example.n, config.alpha, config.divisor);

    StudySummary summary;
    summary.example_id = example.id;
    summary.base_seed = base_seed;
    summary.initial_knots = k;
    summary.knot_frequency.assign(static_cast<std::size_t>(k), 0);
    summary.replicates.resize(static_cast<std::size_t>(replicates));

    std::vector<std::vector<Eigen::Index>> survivors(static_cast<std::size_t>(replicates));
    const int workers = std::max(1, config.workers);

    const auto run_range = [&](int worker) {
        for (int r = worker; r < replicates; r += workers) {
            const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
            auto& rec = summary.replicates[static_cast<std::size_t>(r)];
            try {
                rec = run_replicate(example, config, seed, &survivors[static_cast<std::size_t>(r)]);
            } catch (const std::exception&) {
                rec.seed = seed;
                rec.failed = true;
            }
        }
    };

    if (workers == 1) {
        run_range(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(run_range, t);
        for (auto& th : pool) th.join();
    }

    std::vector<double> mses;
    for (int r = 0; r < replicates; ++r) {
        const auto& rec = summary.replicates[static_cast<std::size_t>(r)];
        if (rec.failed) {
            ++summary.failures;
            continue;
        }
        mses.push_back(rec.mse_x1000);
        summary.knot_count_histogram[rec.knots_selected] += 1;
        for (Eigen::Index j : survivors[static_cast<std::size_t>(r)])
            if (j >= 0 && j < static_cast<Eigen::Index>(summary.knot_frequency.size()))
                summary.knot_frequency[static_cast<std::size_t>(j)] += 1;
    }
    if (mses.empty()) throw std::runtime_error("run_study: every replicate failed");
    summary.median_mse_x1000 = quantile(mses, 0.5);
    summary.iqr_mse_x1000 = quantile(mses, 0.75) - quantile(mses, 0.25);
    return summary;
}

}  // namespace scadspline
