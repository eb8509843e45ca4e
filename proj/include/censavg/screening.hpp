#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "censavg/errors.hpp"
#include "censavg/parallel.hpp"
#include "censavg/survival.hpp"

namespace censavg {

// Partition of the observed-time axis into half-open slices. Only the
// finite interior cuts are stored; slice g is [cut_{g-1}, cut_g) with
// implicit -inf / +inf endcaps, so membership is the count of cuts <= t.
struct SlicingScheme {
    std::vector<double> cuts;

    int slice_count() const { return static_cast<int>(cuts.size()) + 1; }

    int slice_of(double t) const {
        return static_cast<int>(
            std::upper_bound(cuts.begin(), cuts.end(), t) - cuts.begin());
    }
};

inline SlicingScheme scheme_from_cuts(std::vector<double> cuts) {
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::erase_if(cuts, [](double c) { return !std::isfinite(c); });
    if (cuts.empty())
        throw Error(ErrorKind::degenerate_slicing, "screening", "scheme_from_cuts",
                    "no usable cut point");
    return SlicingScheme{std::move(cuts)};
}

// Uniform slicing from a product-limit estimate of the response
// distribution. Cut g is the first grid time where the cumulative
// incidence exceeds (g-1)/s, which balances slice mass for half-open
// intervals. Cuts at or below the first jump (empty leading slice) and
// unreachable quantiles merge away; losing every cut is degenerate.
inline SlicingScheme uniform_slices(const StepSurvivalCurve& event_km, int s) {
    if (s < 2)
        throw Error(ErrorKind::invalid_argument, "screening", "uniform_slices",
                    "slice count must be at least 2, got " + std::to_string(s));
    std::vector<double> cuts;
    if (event_km.times.size() > 0) {
        const double first_jump = event_km.times(0);
        for (int g = 2; g <= s; ++g) {
            const double q = static_cast<double>(g - 1) / static_cast<double>(s);
            double cut = std::numeric_limits<double>::quiet_NaN();
            for (Eigen::Index k = 0; k < event_km.times.size(); ++k) {
                if (event_km.cdf_at(k) > q) {
                    cut = event_km.times(k);
                    break;
                }
            }
            if (std::isfinite(cut) && cut > first_jump) cuts.push_back(cut);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    if (cuts.empty())
        throw Error(ErrorKind::degenerate_slicing, "screening", "uniform_slices",
                    "fewer than two usable slices for slice count " + std::to_string(s));
    return SlicingScheme{std::move(cuts)};
}

// Smallest m with m^3 >= n; avoids std::cbrt rounding at perfect cubes.
inline int ceil_cbrt(int n) {
    int m = static_cast<int>(std::cbrt(static_cast<double>(n)));
    while (m > 1 && static_cast<long long>(m - 1) * (m - 1) * (m - 1) >= n) --m;
    while (static_cast<long long>(m) * m * m < n) ++m;
    return m;
}

// Slice counts used by the fused filters: 3, ..., ceil(n^(1/3)), never
// fewer than one scheme.
inline std::vector<int> fused_scheme_sizes(Eigen::Index n,
                                           std::optional<int> max_slices = {}) {
    int upper = max_slices ? *max_slices : ceil_cbrt(static_cast<int>(n));
    upper = std::max(upper, 3);
    std::vector<int> sizes;
    for (int s = 3; s <= upper; ++s) sizes.push_back(s);
    return sizes;
}

inline std::vector<SlicingScheme> build_schemes(const StepSurvivalCurve& event_km,
                                                const std::vector<int>& sizes) {
    std::vector<SlicingScheme> schemes;
    schemes.reserve(sizes.size());
    for (int s : sizes) schemes.push_back(uniform_slices(event_km, s));
    return schemes;
}

enum class ScreenMethod { fmv, sis, fks };

inline const char* to_string(ScreenMethod m) {
    switch (m) {
        case ScreenMethod::fmv: return "fmv";
        case ScreenMethod::sis: return "sis";
        case ScreenMethod::fks: return "fks";
    }
    return "?";
}

// Marginal utilities plus the descending ranking (ties break toward the
// smaller covariate index).
struct ScreeningResult {
    Eigen::VectorXd utilities;
    std::vector<int> order;
    ScreenMethod method = ScreenMethod::fmv;
};

inline std::vector<int> ranking_order(const Eigen::VectorXd& utilities) {
    std::vector<int> order(static_cast<std::size_t>(utilities.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (utilities(a) != utilities(b)) return utilities(a) > utilities(b);
        return a < b;
    });
    return order;
}

namespace detail {

inline std::vector<int> sorted_column_order(const Eigen::MatrixXd& x, int j) {
    std::vector<int> order(static_cast<std::size_t>(x.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return x(a, j) < x(b, j); });
    return order;
}

// Weighted Cramer-von-Mises contrast between within-slice and marginal
// covariate distributions, evaluated at every observed covariate value.
// `order` sorts column j ascending; contributions are accumulated per tie
// group so duplicated values count once per observation.
inline double mv_from_slices(const Eigen::MatrixXd& x, int j,
                             const std::vector<int>& order,
                             const Eigen::VectorXd& pi,
                             const std::vector<int>& slice_ids,
                             const std::vector<double>& slice_mass) {
    const Eigen::Index n = x.rows();
    const int s = static_cast<int>(slice_mass.size());
    std::vector<double> within(static_cast<std::size_t>(s), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);

    double total = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
        const double value = x(order[k], j);
        std::size_t k_end = k;
        while (k_end < order.size() && x(order[k_end], j) == value) {
            const int i = order[k_end];
            within[static_cast<std::size_t>(slice_ids[static_cast<std::size_t>(i)])] +=
                pi(i);
            ++k_end;
        }
        const double marginal = static_cast<double>(k_end) * inv_n;
        double term = 0.0;
        for (int g = 0; g < s; ++g) {
            if (slice_mass[static_cast<std::size_t>(g)] <= 0.0) continue;
            const double conditional =
                within[static_cast<std::size_t>(g)] * inv_n /
                slice_mass[static_cast<std::size_t>(g)];
            const double diff = conditional - marginal;
            term += slice_mass[static_cast<std::size_t>(g)] * diff * diff;
        }
        total += term * static_cast<double>(k_end - k);
        k = k_end;
    }
    return total * inv_n;
}

inline std::vector<int> slice_memberships(const Eigen::VectorXd& times,
                                          const SlicingScheme& scheme) {
    std::vector<int> ids(static_cast<std::size_t>(times.size()));
    for (Eigen::Index i = 0; i < times.size(); ++i)
        ids[static_cast<std::size_t>(i)] = scheme.slice_of(times(i));
    return ids;
}

inline std::vector<double> weighted_slice_mass(const Eigen::VectorXd& pi,
                                               const std::vector<int>& slice_ids,
                                               int slice_count) {
    std::vector<double> mass(static_cast<std::size_t>(slice_count), 0.0);
    for (std::size_t i = 0; i < slice_ids.size(); ++i)
        mass[static_cast<std::size_t>(slice_ids[i])] += pi(static_cast<Eigen::Index>(i));
    const double inv_n = 1.0 / static_cast<double>(slice_ids.size());
    for (double& m : mass) m *= inv_n;
    return mass;
}

}  // namespace detail

// Sample mean-variance index of covariate j against the sliced response.
inline double mv_statistic(int j, const SurvivalDataset& data, const WeightVector& w,
                           const SlicingScheme& scheme) {
    if (j < 0 || j >= data.p())
        throw Error(ErrorKind::invalid_argument, "screening", "mv_statistic",
                    "covariate index " + std::to_string(j) + " out of range");
    const auto slice_ids = detail::slice_memberships(data.times, scheme);
    const auto mass = detail::weighted_slice_mass(w.pi, slice_ids, scheme.slice_count());
    const auto order = detail::sorted_column_order(data.covariates, j);
    return detail::mv_from_slices(data.covariates, j, order, w.pi, slice_ids, mass);
}

inline double fused_mv(int j, const SurvivalDataset& data, const WeightVector& w,
                       const std::vector<SlicingScheme>& schemes) {
    if (schemes.empty())
        throw Error(ErrorKind::invalid_argument, "screening", "fused_mv",
                    "at least one slicing scheme is required");
    double total = 0.0;
    for (const auto& scheme : schemes) total += mv_statistic(j, data, w, scheme);
    return total;
}

// Fused mean-variance screening: IPCW-weighted slice masses over quantile
// slicings of the event-time KM estimate, fused over slice counts
// 3..ceil(n^(1/3)).
inline ScreeningResult screen_fmv(const SurvivalDataset& data,
                                  std::optional<int> max_slices = {},
                                  int threads = 1) {
    const WeightVector w = ipcw_weights(data);
    const StepSurvivalCurve event_km = kaplan_meier(data.times, data.status);
    const auto schemes =
        build_schemes(event_km, fused_scheme_sizes(data.n(), max_slices));

    std::vector<std::vector<int>> slice_ids;
    std::vector<std::vector<double>> masses;
    for (const auto& scheme : schemes) {
        slice_ids.push_back(detail::slice_memberships(data.times, scheme));
        masses.push_back(
            detail::weighted_slice_mass(w.pi, slice_ids.back(), scheme.slice_count()));
    }

    ScreeningResult result;
    result.method = ScreenMethod::fmv;
    result.utilities = Eigen::VectorXd::Zero(data.p());
    parallel_for(0, static_cast<int>(data.p()), threads, [&](int j) {
        const auto order = detail::sorted_column_order(data.covariates, j);
        double q = 0.0;
        for (std::size_t l = 0; l < schemes.size(); ++l)
            q += detail::mv_from_slices(data.covariates, j, order, w.pi, slice_ids[l],
                                        masses[l]);
        result.utilities(j) = q;
    });
    result.order = ranking_order(result.utilities);
    return result;
}

inline std::vector<int> select_active(const ScreeningResult& r, int top_count) {
    const int p = static_cast<int>(r.utilities.size());
    if (top_count < 1 || top_count > p)
        throw Error(ErrorKind::invalid_argument, "screening", "select_active",
                    "top count " + std::to_string(top_count) +
                        " outside [1, " + std::to_string(p) + "]");
    std::vector<int> active(r.order.begin(), r.order.begin() + top_count);
    std::sort(active.begin(), active.end());
    return active;
}

// Disjoint candidate index groups over the top ranks: contiguous rank
// blocks, sizes differing by at most one with larger blocks first.
struct CandidateGroups {
    std::vector<std::vector<int>> groups;
};

inline CandidateGroups build_candidate_groups(const ScreeningResult& r, int top_count,
                                              int group_count) {
    const int p = static_cast<int>(r.utilities.size());
    if (top_count < 1 || top_count > p)
        throw Error(ErrorKind::invalid_argument, "screening", "build_candidate_groups",
                    "top count " + std::to_string(top_count) +
                        " outside [1, " + std::to_string(p) + "]");
    if (group_count < 1 || group_count > top_count)
        throw Error(ErrorKind::invalid_argument, "screening", "build_candidate_groups",
                    "group count " + std::to_string(group_count) +
                        " outside [1, " + std::to_string(top_count) + "]");
    CandidateGroups out;
    const int base = top_count / group_count;
    const int extra = top_count % group_count;
    int rank = 0;
    for (int k = 0; k < group_count; ++k) {
        const int size = base + (k < extra ? 1 : 0);
        std::vector<int> group;
        group.reserve(static_cast<std::size_t>(size));
        for (int m = 0; m < size; ++m) group.push_back(r.order[static_cast<std::size_t>(rank++)]);
        out.groups.push_back(std::move(group));
    }
    return out;
}

// Marginal Pearson-correlation screening on the transformed observed
// response; censoring is ignored by design.
inline ScreeningResult screen_sis(const SurvivalDataset& data) {
    const Eigen::VectorXd y = data.response();
    const Eigen::Index n = data.n();
    const double y_mean = y.mean();
    const double y_ss = (y.array() - y_mean).square().sum();
    if (y_ss <= 0.0)
        throw Error(ErrorKind::invalid_argument, "screening", "screen_sis",
                    "response has zero sample variance");

    ScreeningResult result;
    result.method = ScreenMethod::sis;
    result.utilities = Eigen::VectorXd::Zero(data.p());
    for (int j = 0; j < data.p(); ++j) {
        const auto col = data.covariates.col(j);
        const double x_mean = col.mean();
        const double x_ss = (col.array() - x_mean).square().sum();
        if (x_ss <= 0.0) continue;
        double cov = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            cov += (col(i) - x_mean) * (y(i) - y_mean);
        result.utilities(j) = std::abs(cov / std::sqrt(x_ss * y_ss));
    }
    result.order = ranking_order(result.utilities);
    return result;
}

namespace detail {

// Per-scheme fused-Kolmogorov statistic: the largest gap between
// within-slice empirical covariate distributions, scanned at every
// observed value. Max over slice pairs equals max minus min at each x.
inline double fks_from_slices(const Eigen::MatrixXd& x, int j,
                              const std::vector<int>& order,
                              const std::vector<int>& slice_ids,
                              const std::vector<int>& slice_sizes) {
    const int s = static_cast<int>(slice_sizes.size());
    std::vector<double> within(static_cast<std::size_t>(s), 0.0);
    double best = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
        const double value = x(order[k], j);
        while (k < order.size() && x(order[k], j) == value) {
            within[static_cast<std::size_t>(slice_ids[static_cast<std::size_t>(order[k])])] +=
                1.0;
            ++k;
        }
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (int g = 0; g < s; ++g) {
            if (slice_sizes[static_cast<std::size_t>(g)] == 0) continue;
            const double f = within[static_cast<std::size_t>(g)] /
                             static_cast<double>(slice_sizes[static_cast<std::size_t>(g)]);
            lo = std::min(lo, f);
            hi = std::max(hi, f);
        }
        if (hi > lo) best = std::max(best, hi - lo);
    }
    return best;
}

}  // namespace detail

// Per-scheme Kolmogorov statistic for covariate j, unweighted.
inline double fks_statistic(int j, const SurvivalDataset& data,
                            const SlicingScheme& scheme) {
    if (j < 0 || j >= data.p())
        throw Error(ErrorKind::invalid_argument, "screening", "fks_statistic",
                    "covariate index " + std::to_string(j) + " out of range");
    const auto slice_ids = detail::slice_memberships(data.times, scheme);
    std::vector<int> sizes(static_cast<std::size_t>(scheme.slice_count()), 0);
    for (int g : slice_ids) ++sizes[static_cast<std::size_t>(g)];
    const auto order = detail::sorted_column_order(data.covariates, j);
    return detail::fks_from_slices(data.covariates, j, order, slice_ids, sizes);
}

// Fused Kolmogorov filter on the observed time scale, unweighted: slices
// come from the empirical distribution of T* with every observation
// treated as an event.
inline ScreeningResult screen_fks(const SurvivalDataset& data,
                                  std::optional<int> max_slices = {},
                                  int threads = 1) {
    const Eigen::VectorXi all_events = Eigen::VectorXi::Ones(data.n());
    const StepSurvivalCurve empirical = kaplan_meier(data.times, all_events);
    const auto schemes =
        build_schemes(empirical, fused_scheme_sizes(data.n(), max_slices));

    std::vector<std::vector<int>> slice_ids;
    std::vector<std::vector<int>> sizes;
    for (const auto& scheme : schemes) {
        slice_ids.push_back(detail::slice_memberships(data.times, scheme));
        std::vector<int> counts(static_cast<std::size_t>(scheme.slice_count()), 0);
        for (int g : slice_ids.back()) ++counts[static_cast<std::size_t>(g)];
        sizes.push_back(std::move(counts));
    }

    ScreeningResult result;
    result.method = ScreenMethod::fks;
    result.utilities = Eigen::VectorXd::Zero(data.p());
    parallel_for(0, static_cast<int>(data.p()), threads, [&](int j) {
        const auto order = detail::sorted_column_order(data.covariates, j);
        double q = 0.0;
        for (std::size_t l = 0; l < schemes.size(); ++l)
            q += detail::fks_from_slices(data.covariates, j, order, slice_ids[l],
                                         sizes[l]);
        result.utilities(j) = q;
    });
    result.order = ranking_order(result.utilities);
    return result;
}

}  // namespace censavg
