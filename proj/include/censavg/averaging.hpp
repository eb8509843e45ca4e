#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "censavg/errors.hpp"
#include "censavg/regression.hpp"
#include "censavg/survival.hpp"

namespace censavg {

constexpr double kLeverageGuard = 1.0 - 1e-10;

struct MallowsOptions {
    double tol = 1e-10;        // max coordinate / step change
    long max_sweeps = 100000;  // full passes before giving up
    double kkt_tol = 1e-8;     // projected-gradient norm target
};

// Delete-one smoothing matrix: row j rescaled so (HY)_j becomes the
// leave-one-out prediction of observation j under frozen weights.
inline Eigen::MatrixXd deleteone_matrix(const Eigen::MatrixXd& hat,
                                        const Eigen::VectorXd& hat_diag) {
    const Eigen::Index n = hat.rows();
    Eigen::MatrixXd out = hat;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (hat_diag(j) >= kLeverageGuard)
            throw Error(ErrorKind::leverage_one, "averaging", "deleteone_matrix",
                        "observation " + std::to_string(j) +
                            " fully determines its own fit (leverage " +
                            std::to_string(hat_diag(j)) + ")");
        const double scale = 1.0 / (1.0 - hat_diag(j));
        out.row(j) *= scale;
        out(j, j) -= hat_diag(j) * scale;  // D(H - I) + I on the diagonal
    }
    return out;
}

// Closed-form delete-one predictions (u_j - h_jj y_j) / (1 - h_jj); avoids
// materialising the n-by-n smoothing matrix.
inline Eigen::VectorXd deleteone_predictions(const CandidateFit& fit,
                                             const Eigen::VectorXd& response) {
    const Eigen::Index n = response.size();
    Eigen::VectorXd out(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (fit.hat_diag(j) >= kLeverageGuard)
            throw Error(ErrorKind::leverage_one, "averaging", "deleteone_predictions",
                        "observation " + std::to_string(j) +
                            " fully determines its own fit (leverage " +
                            std::to_string(fit.hat_diag(j)) + ")");
        out(j) = (fit.fitted(j) - fit.hat_diag(j) * response(j)) /
                 (1.0 - fit.hat_diag(j));
    }
    return out;
}

// Quadratic form of the delete-one Mallows criterion:
// M(w) = (Y - Ew)' Pi (Y - Ew) = w'Aw - 2b'w + c.
struct AveragingProblem {
    Eigen::MatrixXd deleteone_preds;  // n x K, column k = delete-one predictor
    Eigen::MatrixXd gram;             // A = E' Pi E
    Eigen::VectorXd linear;           // b = E' Pi Y
    double constant = 0.0;            // c = Y' Pi Y

    Eigen::Index model_count() const { return gram.rows(); }

    double criterion(const Eigen::VectorXd& omega) const {
        return omega.dot(gram * omega) - 2.0 * linear.dot(omega) + constant;
    }
};

inline AveragingProblem build_problem(const std::vector<CandidateFit>& fits,
                                      const SurvivalDataset& data,
                                      const WeightVector& w) {
    if (fits.empty())
        throw Error(ErrorKind::invalid_argument, "averaging", "build_problem",
                    "at least one candidate fit is required");
    const Eigen::VectorXd y = data.response();
    const Eigen::Index n = y.size();
    const Eigen::Index k = static_cast<Eigen::Index>(fits.size());

    AveragingProblem prob;
    prob.deleteone_preds.resize(n, k);
    for (Eigen::Index m = 0; m < k; ++m)
        prob.deleteone_preds.col(m) =
            deleteone_predictions(fits[static_cast<std::size_t>(m)], y);
    const Eigen::MatrixXd weighted = w.pi.asDiagonal() * prob.deleteone_preds;
    prob.gram = prob.deleteone_preds.transpose() * weighted;
    prob.linear = weighted.transpose() * y;
    prob.constant = y.dot((w.pi.array() * y.array()).matrix());
    return prob;
}

enum class WeightConstraint { box, simplex };

struct WeightSolution {
    Eigen::VectorXd omega;
    WeightConstraint constraint = WeightConstraint::box;
    double criterion_value = 0.0;
    double kkt_residual = 0.0;
    long iterations = 0;
};

namespace detail {

// Max-norm of the projected gradient for the box [0,1]^K.
inline double box_kkt_residual(const AveragingProblem& prob, const Eigen::VectorXd& omega) {
    Eigen::VectorXd grad = 2.0 * (prob.gram * omega - prob.linear);
    double residual = 0.0;
    for (Eigen::Index k = 0; k < omega.size(); ++k) {
        double g = grad(k);
        if (omega(k) <= 0.0)
            g = std::min(g, 0.0);
        else if (omega(k) >= 1.0)
            g = std::max(g, 0.0);
        residual = std::max(residual, std::abs(g));
    }
    return residual;
}

// Euclidean projection onto the probability simplex.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index k = v.size();
    std::vector<double> sorted(v.data(), v.data() + k);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumulative = 0.0;
    double threshold = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        cumulative += sorted[static_cast<std::size_t>(i)];
        const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
        if (sorted[static_cast<std::size_t>(i)] > candidate) threshold = candidate;
    }
    return (v.array() - threshold).max(0.0).matrix();
}

}  // namespace detail

// Cyclic coordinate descent over [0,1]^K with exact clipped coordinate
// minimisation. Zero-curvature coordinates (a constant-zero candidate
// predictor) stay fixed at zero. Stops once a sweep moves no coordinate
// by more than tol and the projected gradient meets kkt_tol.
inline WeightSolution optimize_weights_box(const AveragingProblem& prob,
                                           const MallowsOptions& opts = {}) {
    const Eigen::Index k = prob.model_count();
    Eigen::VectorXd omega = Eigen::VectorXd::Zero(k);
    double previous = prob.criterion(omega);

    long sweep = 0;
    for (; sweep < opts.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double curvature = prob.gram(j, j);
            if (curvature <= 0.0) {
                omega(j) = 0.0;
                continue;
            }
            const double gradient_rest = prob.gram.row(j).dot(omega) -
                                         prob.gram(j, j) * omega(j) - prob.linear(j);
            const double candidate = std::clamp(-gradient_rest / curvature, 0.0, 1.0);
            max_change = std::max(max_change, std::abs(candidate - omega(j)));
            omega(j) = candidate;
        }
        const double current = prob.criterion(omega);
        if (current > previous + 1e-9 * (1.0 + std::abs(previous)))
            throw Error(ErrorKind::convergence_failure, "averaging",
                        "optimize_weights_box", "criterion increased during a sweep");
        previous = current;
        if (max_change <= opts.tol &&
            detail::box_kkt_residual(prob, omega) <= opts.kkt_tol)
            break;
    }
    if (sweep >= opts.max_sweeps)
        throw ConvergenceError(
            "averaging", "optimize_weights_box",
            "no convergence after " + std::to_string(opts.max_sweeps) + " sweeps",
            std::vector<double>(omega.data(), omega.data() + omega.size()));

    WeightSolution sol;
    sol.omega = omega;
    sol.constraint = WeightConstraint::box;
    sol.criterion_value = prob.criterion(omega);
    sol.kkt_residual = detail::box_kkt_residual(prob, omega);
    sol.iterations = sweep + 1;
    return sol;
}

// Projected gradient over the probability simplex with backtracking line
// search; stops when the unit-step gradient mapping has norm <= kkt_tol.
inline WeightSolution optimize_weights_simplex(const AveragingProblem& prob,
                                               const MallowsOptions& opts = {}) {
    const Eigen::Index k = prob.model_count();
    if (k == 1) {
        WeightSolution sol;
        sol.omega = Eigen::VectorXd::Ones(1);
        sol.constraint = WeightConstraint::simplex;
        sol.criterion_value = prob.criterion(sol.omega);
        sol.kkt_residual = 0.0;
        sol.iterations = 0;
        return sol;
    }

    Eigen::VectorXd omega = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    const double trace = std::max(prob.gram.trace(), 1e-12);
    double step = 1.0 / trace;

    long iter = 0;
    double residual = 0.0;
    for (; iter < opts.max_sweeps; ++iter) {
        const Eigen::VectorXd grad = 2.0 * (prob.gram * omega - prob.linear);
        residual = (omega - detail::project_simplex(omega - grad)).norm();
        if (residual <= opts.kkt_tol) break;

        // The objective is an exact quadratic, so the sufficient-decrease
        // test reduces to d'Ad <= |d|^2 / (2t); evaluating criterion
        // differences directly would cancel catastrophically near the
        // optimum.
        double t = step * 4.0;
        Eigen::VectorXd next;
        for (int half = 0; half < 80; ++half) {
            next = detail::project_simplex(omega - t * grad);
            const Eigen::VectorXd delta = next - omega;
            const double curvature = delta.dot(prob.gram * delta);
            if (2.0 * t * curvature <= delta.squaredNorm()) break;
            t *= 0.5;
        }
        step = t;
        omega = next;
    }
    if (iter >= opts.max_sweeps)
        throw ConvergenceError(
            "averaging", "optimize_weights_simplex",
            "no convergence after " + std::to_string(opts.max_sweeps) + " iterations",
            std::vector<double>(omega.data(), omega.data() + omega.size()));

    WeightSolution sol;
    sol.omega = omega;
    sol.constraint = WeightConstraint::simplex;
    sol.criterion_value = prob.criterion(omega);
    sol.kkt_residual = residual;
    sol.iterations = iter;
    return sol;
}

enum class InfoCriterion { aic, bic };

// Smoothed information-criterion weights over the candidate fits:
// IC_k = n log(RSS_k / n) + penalty * p_k, weights ~ exp(-(IC - min)/2).
inline WeightSolution info_criterion_weights(const std::vector<CandidateFit>& fits,
                                             const SurvivalDataset& data,
                                             const WeightVector& w,
                                             InfoCriterion criterion) {
    if (fits.empty())
        throw Error(ErrorKind::invalid_argument, "averaging", "info_criterion_weights",
                    "at least one candidate fit is required");
    const Eigen::VectorXd y = data.response();
    const double n = static_cast<double>(y.size());
    const double penalty = criterion == InfoCriterion::aic ? 2.0 : std::log(n);

    Eigen::VectorXd ic(static_cast<Eigen::Index>(fits.size()));
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const Eigen::VectorXd resid = y - fits[m].fitted;
        const double rss = resid.dot((w.pi.array() * resid.array()).matrix());
        if (rss <= 0.0)
            throw Error(ErrorKind::infinite_fit, "averaging", "info_criterion_weights",
                        "candidate model " + std::to_string(m) +
                            " has zero weighted residual sum of squares");
        ic(static_cast<Eigen::Index>(m)) =
            n * std::log(rss / n) +
            penalty * static_cast<double>(fits[m].index_set.size());
    }
    const double best = ic.minCoeff();
    Eigen::VectorXd omega = ((best - ic.array()) / 2.0).exp();
    omega /= omega.sum();

    WeightSolution sol;
    sol.omega = omega;
    sol.constraint = WeightConstraint::simplex;
    sol.criterion_value = best;
    sol.kkt_residual = 0.0;
    sol.iterations = 0;
    return sol;
}

// Averaged out-of-sample prediction: x_new carries the full covariate set
// and is restricted per candidate model.
inline Eigen::VectorXd average_predict(const std::vector<CandidateFit>& fits,
                                       const Eigen::VectorXd& omega,
                                       const Eigen::MatrixXd& x_new) {
    if (omega.size() != static_cast<Eigen::Index>(fits.size()))
        throw Error(ErrorKind::invalid_argument, "averaging", "average_predict",
                    "weight count " + std::to_string(omega.size()) +
                        " does not match " + std::to_string(fits.size()) + " models");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x_new.rows());
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const auto& fit = fits[m];
        Eigen::MatrixXd restricted(x_new.rows(),
                                   static_cast<Eigen::Index>(fit.index_set.size()));
        for (std::size_t c = 0; c < fit.index_set.size(); ++c) {
            const int j = fit.index_set[c];
            if (j < 0 || j >= x_new.cols())
                throw Error(ErrorKind::invalid_argument, "averaging", "average_predict",
                            "new data lacks covariate column " + std::to_string(j));
            restricted.col(static_cast<Eigen::Index>(c)) = x_new.col(j);
        }
        out += omega(static_cast<Eigen::Index>(m)) * predict(fit, restricted);
    }
    return out;
}

}  // namespace censavg
