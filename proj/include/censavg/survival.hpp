#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "censavg/errors.hpp"

namespace censavg {

enum class Transform { identity, log_time };

// Right-censored sample: observed time, event indicator (1 = event,
// 0 = censored) and an n-by-p covariate matrix. `transform` maps raw times
// onto the regression scale; every downstream module reads the response
// through response().
struct SurvivalDataset {
    Eigen::VectorXd times;
    Eigen::VectorXi status;
    Eigen::MatrixXd covariates;
    Transform transform = Transform::identity;

    SurvivalDataset() = default;

    SurvivalDataset(Eigen::VectorXd times_in, Eigen::VectorXi status_in,
                    Eigen::MatrixXd covariates_in,
                    Transform transform_in = Transform::identity)
        : times(std::move(times_in)),
          status(std::move(status_in)),
          covariates(std::move(covariates_in)),
          transform(transform_in) {
        validate();
    }

    Eigen::Index n() const { return times.size(); }
    Eigen::Index p() const { return covariates.cols(); }

    // Response on the regression scale (V = log T* under log_time).
    Eigen::VectorXd response() const {
        if (transform == Transform::identity) return times;
        return times.array().log().matrix();
    }

    void validate() const {
        if (times.size() == 0)
            throw Error(ErrorKind::invalid_argument, "survival", "dataset",
                        "dataset must contain at least one observation");
        if (status.size() != times.size())
            throw Error(ErrorKind::invalid_argument, "survival", "dataset",
                        "times and status lengths differ (" +
                            std::to_string(times.size()) + " vs " +
                            std::to_string(status.size()) + ")");
        if (covariates.rows() != times.size())
            throw Error(ErrorKind::invalid_argument, "survival", "dataset",
                        "covariate row count " + std::to_string(covariates.rows()) +
                            " does not match n = " + std::to_string(times.size()));
        for (Eigen::Index i = 0; i < times.size(); ++i) {
            if (!std::isfinite(times(i)))
                throw Error(ErrorKind::invalid_argument, "survival", "dataset",
                            "non-finite time at observation " + std::to_string(i));
            if (status(i) != 0 && status(i) != 1)
                throw Error(ErrorKind::invalid_argument, "survival", "dataset",
                            "status must be 0 or 1 at observation " + std::to_string(i));
            if (transform == Transform::log_time && times(i) <= 0.0)
                throw Error(ErrorKind::invalid_argument, "survival", "dataset",
                            "log transform requires strictly positive time at observation " +
                                std::to_string(i));
        }
    }
};

// Product-limit curve stored at its drop times only. value() is the
// right-continuous estimate, left_limit() the product over strictly
// smaller grid times; both are exact index lookups, never perturbations.
struct StepSurvivalCurve {
    Eigen::VectorXd times;  // strictly increasing drop times
    Eigen::VectorXd surv;   // survival just after each drop

    double value(double t) const {
        auto end = std::upper_bound(times.begin(), times.end(), t);
        if (end == times.begin()) return 1.0;
        return surv(std::distance(times.begin(), end) - 1);
    }

    double left_limit(double t) const {
        auto end = std::lower_bound(times.begin(), times.end(), t);
        if (end == times.begin()) return 1.0;
        return surv(std::distance(times.begin(), end) - 1);
    }

    // Cumulative incidence just after grid index k.
    double cdf_at(Eigen::Index k) const { return 1.0 - surv(k); }
};

// IPCW observation weights; zero for censored observations except possibly
// the sample maximum.
struct WeightVector {
    Eigen::VectorXd pi;
};

// Product-limit estimator over distinct event times: at-risk counts use
// Y_i >= t, so subjects tied with an event remain at risk for it.
inline StepSurvivalCurve kaplan_meier(const Eigen::VectorXd& times,
                                      const Eigen::VectorXi& events) {
    if (times.size() == 0)
        throw Error(ErrorKind::invalid_argument, "survival", "kaplan_meier",
                    "empty input");
    if (events.size() != times.size())
        throw Error(ErrorKind::invalid_argument, "survival", "kaplan_meier",
                    "times and events lengths differ");
    for (Eigen::Index i = 0; i < times.size(); ++i)
        if (!std::isfinite(times(i)))
            throw Error(ErrorKind::invalid_argument, "survival", "kaplan_meier",
                        "non-finite time at observation " + std::to_string(i));

    const Eigen::Index n = times.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return times(a) < times(b); });

    std::vector<double> grid;
    std::vector<double> surv;
    double s = 1.0;
    Eigen::Index at_risk = n;
    std::size_t k = 0;
    while (k < order.size()) {
        const double t = times(order[k]);
        Eigen::Index d = 0;
        Eigen::Index tied = 0;
        while (k < order.size() && times(order[k]) == t) {
            d += events(order[k]);
            ++tied;
            ++k;
        }
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            grid.push_back(t);
            surv.push_back(s);
        }
        at_risk -= tied;
    }

    StepSurvivalCurve curve;
    curve.times = Eigen::Map<const Eigen::VectorXd>(grid.data(),
                                                    static_cast<Eigen::Index>(grid.size()));
    curve.surv = Eigen::Map<const Eigen::VectorXd>(surv.data(),
                                                   static_cast<Eigen::Index>(surv.size()));
    return curve;
}

inline double left_limit(const StepSurvivalCurve& curve, double t) {
    return curve.left_limit(t);
}

// Censoring-survival estimate used by the weights: KM of (Y, 1 - delta).
inline StepSurvivalCurve censoring_curve(const SurvivalDataset& data) {
    Eigen::VectorXi censor_events = (1 - data.status.array()).matrix();
    return kaplan_meier(data.times, censor_events);
}

// pi_i = delta_i / Gbar(Y_i-); every observation tied at the sample maximum
// receives 1 / Gbar(Y_(n)-) regardless of its status.
inline WeightVector ipcw_weights(const SurvivalDataset& data) {
    const StepSurvivalCurve gbar = censoring_curve(data);
    const Eigen::Index n = data.n();
    const double y_max = data.times.maxCoeff();

    WeightVector w;
    w.pi = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double g = gbar.left_limit(data.times(i));
        if (data.times(i) == y_max) {
            w.pi(i) = 1.0 / g;
            continue;
        }
        if (data.status(i) == 0) continue;
        if (g <= 0.0)
            throw Error(ErrorKind::weight_undefined, "survival", "ipcw_weights",
                        "censoring survival left limit is zero at observation " +
                            std::to_string(i) + " (Y = " + std::to_string(data.times(i)) + ")");
        w.pi(i) = 1.0 / g;
    }
    return w;
}

}  // namespace censavg
