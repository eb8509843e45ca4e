#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "censavg/errors.hpp"
#include "censavg/methods.hpp"
#include "censavg/parallel.hpp"
#include "censavg/random.hpp"

namespace censavg {

// AFT generator configuration: log T = X'theta + eps with AR(rho) Gaussian
// covariates, theta supported on active_count indices spaced `stride`
// apart, and censoring C = min(censor_l, Unif(0, censor_l + 2)).
struct SimulationConfig {
    int n = 100;
    int p = 2000;
    int active_count = 50;
    int stride = 40;
    double rho = 0.5;
    double sigma_eps = 0.5;
    double coef_sd = 0.5;
    double censor_l = 8.0;
    int group_count = 10;
    int top_count = 100;
    std::uint64_t seed = 1;
    int replications = 200;
    std::optional<int> max_slices;
    int threads = 1;

    void validate() const {
        if (n < 1 || p < 1 || active_count < 1 || stride < 1)
            throw Error(ErrorKind::invalid_argument, "simulation", "config",
                        "sizes must be positive");
        if (static_cast<long long>(stride) * (active_count - 1) + 1 > p)
            throw Error(ErrorKind::invalid_argument, "simulation", "config",
                        "active indices exceed p: stride*(s-1)+1 = " +
                            std::to_string(stride * (active_count - 1) + 1));
        if (!(rho > -1.0 && rho < 1.0))
            throw Error(ErrorKind::invalid_argument, "simulation", "config",
                        "rho must lie in (-1, 1)");
        if (sigma_eps <= 0.0 || coef_sd <= 0.0 || censor_l <= 0.0)
            throw Error(ErrorKind::invalid_argument, "simulation", "config",
                        "scale parameters must be positive");
        if (group_count < 1 || top_count < group_count || top_count > p)
            throw Error(ErrorKind::invalid_argument, "simulation", "config",
                        "need 1 <= K <= d_n <= p");
        if (replications < 1)
            throw Error(ErrorKind::invalid_argument, "simulation", "config",
                        "replications must be positive");
    }

    std::vector<int> active_indices() const {
        std::vector<int> idx(static_cast<std::size_t>(active_count));
        for (int j = 0; j < active_count; ++j) idx[static_cast<std::size_t>(j)] = stride * j;
        return idx;
    }
};

struct GeneratedDataset {
    SurvivalDataset data;
    Eigen::VectorXd theta;
    Eigen::VectorXd true_mean;  // X theta, the conditional mean of log T
    double censor_rate = 0.0;
};

// Deterministic given (seed, rep). Draw order: theta, then covariate rows,
// then noise, then censoring times. The AR columns use the sequential
// conditional recursion, which reproduces covariance rho^|j-l| exactly.
inline GeneratedDataset generate_dataset(const SimulationConfig& cfg, int rep) {
    cfg.validate();
    auto rng = make_rng(cfg.seed, static_cast<std::uint64_t>(rep));
    std::normal_distribution<double> standard_normal(0.0, 1.0);
    std::uniform_real_distribution<double> censor_unif(0.0, cfg.censor_l + 2.0);

    GeneratedDataset out;
    out.theta = Eigen::VectorXd::Zero(cfg.p);
    for (int idx : cfg.active_indices())
        out.theta(idx) = cfg.coef_sd * standard_normal(rng);

    Eigen::MatrixXd x(cfg.n, cfg.p);
    const double innovation_sd = std::sqrt(1.0 - cfg.rho * cfg.rho);
    for (int i = 0; i < cfg.n; ++i) {
        x(i, 0) = standard_normal(rng);
        for (int j = 1; j < cfg.p; ++j)
            x(i, j) = cfg.rho * x(i, j - 1) + innovation_sd * standard_normal(rng);
    }

    out.true_mean = x * out.theta;
    Eigen::VectorXd y(cfg.n);
    Eigen::VectorXi status(cfg.n);
    int censored = 0;
    Eigen::VectorXd log_t(cfg.n);
    for (int i = 0; i < cfg.n; ++i)
        log_t(i) = out.true_mean(i) + cfg.sigma_eps * standard_normal(rng);
    for (int i = 0; i < cfg.n; ++i) {
        const double t = std::exp(log_t(i));
        const double c = std::min(cfg.censor_l, censor_unif(rng));
        y(i) = std::min(t, c);
        status(i) = t <= c ? 1 : 0;
        censored += 1 - status(i);
    }
    out.data = SurvivalDataset(std::move(y), std::move(status), std::move(x),
                               Transform::log_time);
    out.censor_rate = static_cast<double>(censored) / static_cast<double>(cfg.n);
    return out;
}

inline double weighted_mse(const Eigen::VectorXd& u_true, const Eigen::VectorXd& u_hat,
                           const WeightVector& w) {
    if (u_true.size() != u_hat.size() || u_true.size() != w.pi.size())
        throw Error(ErrorKind::invalid_argument, "simulation", "weighted_mse",
                    "length mismatch");
    const Eigen::ArrayXd diff = (u_true - u_hat).array();
    return (w.pi.array() * diff.square()).sum() / static_cast<double>(u_true.size());
}

// Weighted averaged squared prediction error over test-set events.
inline double waspe(const SurvivalDataset& test, const Eigen::VectorXd& mu_hat,
                    const WeightVector& w) {
    if (mu_hat.size() != test.n() || w.pi.size() != test.n())
        throw Error(ErrorKind::invalid_argument, "simulation", "waspe",
                    "length mismatch");
    const Eigen::VectorXd response = test.response();
    double events = 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < test.n(); ++i) {
        if (test.status(i) != 1) continue;
        if (!(w.pi(i) > 0.0))
            throw Error(ErrorKind::invalid_argument, "simulation", "waspe",
                        "event observation " + std::to_string(i) +
                            " carries a non-positive weight");
        events += 1.0;
        const double err = response(i) - mu_hat(i);
        total += err * err / w.pi(i);
    }
    if (events == 0.0)
        throw Error(ErrorKind::undefined_metric, "simulation", "waspe",
                    "every test observation is censored");
    return total / events;
}

// ---------------------------------------------------------------------------
// Replication driver
// ---------------------------------------------------------------------------

struct ReplicationFailure {
    int replication = 0;
    Method method = Method::fmv_mcv2;
    std::string message;
};

struct MethodStats {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    int successes = 0;
    int failures = 0;
};

struct SimulationSummary {
    SimulationConfig config;
    std::vector<Method> methods;
    Eigen::MatrixXd metrics;  // replications x methods, NaN where failed
    std::vector<MethodStats> stats;
    std::vector<ReplicationFailure> failures;
};

// Linear-interpolation sample quantile (R type 7).
inline double sample_quantile(std::vector<double> values, double q) {
    if (values.empty())
        throw Error(ErrorKind::undefined_metric, "simulation", "sample_quantile",
                    "no values");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline MethodStats summarize(const std::vector<double>& values, int failures) {
    MethodStats s;
    s.successes = static_cast<int>(values.size());
    s.failures = failures;
    if (!values.empty()) {
        s.min = sample_quantile(values, 0.0);
        s.q1 = sample_quantile(values, 0.25);
        s.median = sample_quantile(values, 0.5);
        s.q3 = sample_quantile(values, 0.75);
        s.max = sample_quantile(values, 1.0);
    }
    return s;
}

// One replication of the benchmark: generate, screen per filter, fit the
// candidate groups once per filter, then price every requested weighting.
inline void run_single_replication(const SimulationConfig& cfg, int rep,
                                   const std::vector<Method>& methods,
                                   Eigen::MatrixXd& metrics,
                                   std::vector<ReplicationFailure>& failures,
                                   std::mutex& failure_mutex) {
    GeneratedDataset gen = generate_dataset(cfg, rep);
    const WeightVector w = ipcw_weights(gen.data);

    std::map<ScreenMethod, PipelineComponents> components;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        const Method method = methods[m];
        try {
            const ScreenMethod filter = screening_of(method);
            auto found = components.find(filter);
            if (found == components.end())
                found = components
                            .emplace(filter, build_components(gen.data, w, filter,
                                                              cfg.top_count,
                                                              cfg.group_count,
                                                              cfg.max_slices, 1))
                            .first;
            const auto solution = solve_weights(method, found->second.fits, gen.data, w);
            const Eigen::VectorXd averaged =
                averaged_fitted(found->second.fits, solution.omega);
            metrics(rep, static_cast<Eigen::Index>(m)) =
                weighted_mse(gen.true_mean, averaged, w);
        } catch (const Error& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            failures.push_back(ReplicationFailure{rep, method, e.what()});
        }
    }
}

inline SimulationSummary run_replications(const SimulationConfig& cfg,
                                          const std::vector<Method>& methods) {
    cfg.validate();
    if (methods.empty())
        throw Error(ErrorKind::invalid_argument, "simulation", "run_replications",
                    "at least one method is required");

    SimulationSummary summary;
    summary.config = cfg;
    summary.methods = methods;
    summary.metrics = Eigen::MatrixXd::Constant(
        cfg.replications, static_cast<Eigen::Index>(methods.size()),
        std::numeric_limits<double>::quiet_NaN());

    std::mutex failure_mutex;
    parallel_for(0, cfg.replications, cfg.threads, [&](int rep) {
        run_single_replication(cfg, rep, methods, summary.metrics, summary.failures,
                               failure_mutex);
    });
    std::sort(summary.failures.begin(), summary.failures.end(),
              [](const ReplicationFailure& a, const ReplicationFailure& b) {
                  if (a.replication != b.replication) return a.replication < b.replication;
                  return static_cast<int>(a.method) < static_cast<int>(b.method);
              });

    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::vector<double> values;
        int failed = 0;
        for (int rep = 0; rep < cfg.replications; ++rep) {
            const double v = summary.metrics(rep, static_cast<Eigen::Index>(m));
            if (std::isnan(v))
                ++failed;
            else
                values.push_back(v);
        }
        summary.stats.push_back(summarize(values, failed));
    }
    return summary;
}

// ---------------------------------------------------------------------------
// Oracle slicing
// ---------------------------------------------------------------------------

namespace detail {

// Monte Carlo draw of log T under the generator law for a fixed theta.
// Only active AR coordinates are sampled, using the Markov gap recursion.
inline double draw_log_t(const SimulationConfig& cfg, const std::vector<int>& active,
                         const Eigen::VectorXd& theta, std::mt19937_64& rng,
                         std::normal_distribution<double>& standard_normal) {
    double mean = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k) {
        const int idx = active[k];
        double value;
        if (k == 0) {
            value = standard_normal(rng);
        } else {
            const int gap = idx - active[k - 1];
            const double decay = std::pow(cfg.rho, gap);
            value = decay * prev + std::sqrt(1.0 - decay * decay) * standard_normal(rng);
        }
        mean += theta(idx) * value;
        prev = value;
    }
    return mean + cfg.sigma_eps * standard_normal(rng);
}

}  // namespace detail

constexpr std::uint64_t kOracleStream = 0x6f7261636c65ULL;  // fixed oracle stream
constexpr int kOracleDraws = 1000000;

// True-quantile slice boundaries for the generator law, approximated by
// Monte Carlo quantiles of T with a fixed oracle seed.
inline SlicingScheme oracle_slices(const SimulationConfig& cfg,
                                   const Eigen::VectorXd& theta, int s) {
    if (s < 2)
        throw Error(ErrorKind::degenerate_slicing, "simulation", "oracle_slices",
                    "slice count " + std::to_string(s) + " yields a single slice");
    auto rng = make_rng(cfg.seed, kOracleStream);
    std::normal_distribution<double> standard_normal(0.0, 1.0);
    const auto active = cfg.active_indices();

    std::vector<double> draws(static_cast<std::size_t>(kOracleDraws));
    for (double& d : draws)
        d = std::exp(detail::draw_log_t(cfg, active, theta, rng, standard_normal));
    std::sort(draws.begin(), draws.end());

    std::vector<double> cuts;
    for (int g = 2; g <= s; ++g) {
        // first order statistic whose empirical cdf exceeds (g-1)/s: rank
        // floor(q m) for fractional q m, rank q m when it lands exactly
        const long long numerator = static_cast<long long>(g - 1) * kOracleDraws;
        const long long rank = numerator / s;
        if (rank >= kOracleDraws) continue;
        const double cut = draws[static_cast<std::size_t>(rank)];
        if (cut > draws.front()) cuts.push_back(cut);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    if (cuts.empty())
        throw Error(ErrorKind::degenerate_slicing, "simulation", "oracle_slices",
                    "oracle quantiles collapse to a single slice");
    return SlicingScheme{std::move(cuts)};
}

// FMV screening with oracle (true-quantile) slice boundaries; only valid
// for generated datasets, where the marginal law of T is known.
inline ScreeningResult oracle_fused_mv(const SimulationConfig& cfg,
                                       const GeneratedDataset& gen,
                                       const WeightVector& w) {
    if (gen.theta.size() != cfg.p || gen.data.n() == 0)
        throw Error(ErrorKind::unsupported_operation, "simulation", "oracle_fused_mv",
                    "oracle slicing requires a dataset produced by the generator");
    std::vector<SlicingScheme> schemes;
    for (int s : fused_scheme_sizes(gen.data.n(), cfg.max_slices))
        schemes.push_back(oracle_slices(cfg, gen.theta, s));

    ScreeningResult result;
    result.method = ScreenMethod::fmv;
    result.utilities = Eigen::VectorXd::Zero(gen.data.p());
    parallel_for(0, static_cast<int>(gen.data.p()), cfg.threads, [&](int j) {
        result.utilities(j) = fused_mv(j, gen.data, w, schemes);
    });
    result.order = ranking_order(result.utilities);
    return result;
}

// ---------------------------------------------------------------------------
// Empirical theorem checks
// ---------------------------------------------------------------------------

// Weighted in-sample loss of an averaged predictor against the true mean.
inline double weighted_loss(const Eigen::VectorXd& u_true, const Eigen::VectorXd& u_hat,
                            const WeightVector& w) {
    const Eigen::ArrayXd diff = (u_true - u_hat).array();
    return (w.pi.array() * diff.square()).sum();
}

// Loss ratio L(omega_hat) / min over sampled weights: uniform draws from
// the box plus all vertices. Ratios near one indicate the selected weights
// approach the best attainable loss.
inline double replication_loss_ratio(const SimulationConfig& cfg, int rep,
                                     int omega_samples = 10000) {
    GeneratedDataset gen = generate_dataset(cfg, rep);
    const WeightVector w = ipcw_weights(gen.data);
    auto parts = build_components(gen.data, w, ScreenMethod::fmv, cfg.top_count,
                                  cfg.group_count, cfg.max_slices, cfg.threads);
    auto solution = solve_weights(Method::fmv_mcv2, parts.fits, gen.data, w);

    const Eigen::Index k = static_cast<Eigen::Index>(parts.fits.size());
    const Eigen::Index n = gen.data.n();
    Eigen::MatrixXd fitted(n, k);
    for (Eigen::Index m = 0; m < k; ++m)
        fitted.col(m) = parts.fits[static_cast<std::size_t>(m)].fitted;

    // L(omega) = omega'G omega - 2 h'omega + c over the fitted columns
    const Eigen::MatrixXd weighted = w.pi.asDiagonal() * fitted;
    const Eigen::MatrixXd gram = fitted.transpose() * weighted;
    const Eigen::VectorXd linear = weighted.transpose() * gen.true_mean;
    const double constant =
        gen.true_mean.dot((w.pi.array() * gen.true_mean.array()).matrix());
    auto loss_of = [&](const Eigen::VectorXd& omega) {
        return omega.dot(gram * omega) - 2.0 * linear.dot(omega) + constant;
    };

    double best = std::numeric_limits<double>::infinity();
    auto rng = make_rng(cfg.seed ^ 0x6c6f7373ULL, static_cast<std::uint64_t>(rep));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd omega(k);
    for (int draw = 0; draw < omega_samples; ++draw) {
        for (Eigen::Index m = 0; m < k; ++m) omega(m) = unif(rng);
        best = std::min(best, loss_of(omega));
    }
    for (Eigen::Index m = 0; m < k; ++m) {
        omega.setZero();
        omega(m) = 1.0;
        best = std::min(best, loss_of(omega));
    }
    const double selected = loss_of(solution.omega);
    return selected / best;
}

// Fraction of replications where every active utility beats every inactive
// one (the empirical ranking-consistency event).
inline double rank_separation_fraction(const SimulationConfig& cfg, int replications) {
    const auto active = cfg.active_indices();
    std::vector<bool> is_active(static_cast<std::size_t>(cfg.p), false);
    for (int idx : active) is_active[static_cast<std::size_t>(idx)] = true;

    int separated = 0;
    for (int rep = 0; rep < replications; ++rep) {
        GeneratedDataset gen = generate_dataset(cfg, rep);
        auto result = screen_fmv(gen.data, cfg.max_slices, cfg.threads);
        double min_active = std::numeric_limits<double>::infinity();
        double max_inactive = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < cfg.p; ++j) {
            if (is_active[static_cast<std::size_t>(j)])
                min_active = std::min(min_active, result.utilities(j));
            else
                max_inactive = std::max(max_inactive, result.utilities(j));
        }
        if (min_active > max_inactive) ++separated;
    }
    return static_cast<double>(separated) / static_cast<double>(replications);
}

}  // namespace censavg
