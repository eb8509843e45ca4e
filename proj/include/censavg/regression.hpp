#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "censavg/errors.hpp"
#include "censavg/survival.hpp"

namespace censavg {

// One fitted candidate model: coefficient vector over its index set, the
// diagonal of the oblique hat matrix H = X (X'PiX)^-1 X' Pi, and the
// in-sample predictor X beta.
struct CandidateFit {
    std::vector<int> index_set;
    Eigen::VectorXd beta;
    Eigen::VectorXd hat_diag;
    Eigen::VectorXd fitted;
};

namespace detail {

inline std::string index_set_label(std::span<const int> indices) {
    std::string label = "{";
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (k > 0) label += ",";
        label += std::to_string(indices[k]);
    }
    return label + "}";
}

inline Eigen::MatrixXd submatrix(const Eigen::MatrixXd& x, std::span<const int> indices) {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const int j = indices[k];
        if (j < 0 || j >= x.cols())
            throw Error(ErrorKind::invalid_argument, "regression", "wls_fit",
                        "covariate index " + std::to_string(j) + " out of range");
        out.col(static_cast<Eigen::Index>(k)) = x.col(j);
    }
    return out;
}

// Spectral inverse of the weighted normal matrix with a condition guard.
inline Eigen::MatrixXd guarded_normal_inverse(const Eigen::MatrixXd& normal,
                                              std::span<const int> indices,
                                              const char* operation) {
    constexpr double kMaxCondition = 1e12;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    const auto& values = eig.eigenvalues();
    const double largest = values(values.size() - 1);
    const double smallest = values(0);
    if (!(smallest > 0.0) || largest > kMaxCondition * smallest)
        throw Error(ErrorKind::singular_design, "regression", operation,
                    "weighted normal matrix is numerically singular for candidate model " +
                        index_set_label(indices));
    return eig.eigenvectors() * values.cwiseInverse().asDiagonal() *
           eig.eigenvectors().transpose();
}

}  // namespace detail

// Weighted least squares for the candidate model over `indices`:
// beta = (X'PiX)^-1 X'PiY on the transformed response scale.
inline CandidateFit wls_fit(const SurvivalDataset& data, const WeightVector& w,
                            std::span<const int> indices) {
    if (indices.empty())
        throw Error(ErrorKind::invalid_argument, "regression", "wls_fit",
                    "candidate model has no covariates");
    const Eigen::MatrixXd x = detail::submatrix(data.covariates, indices);
    const Eigen::VectorXd y = data.response();
    const Eigen::MatrixXd normal = x.transpose() * w.pi.asDiagonal() * x;
    const Eigen::MatrixXd inverse =
        detail::guarded_normal_inverse(normal, indices, "wls_fit");

    CandidateFit fit;
    fit.index_set.assign(indices.begin(), indices.end());
    fit.beta = inverse * (x.transpose() * (w.pi.array() * y.array()).matrix());
    fit.fitted = x * fit.beta;
    fit.hat_diag = ((x * inverse).array() * x.array()).rowwise().sum() * w.pi.array();
    return fit;
}

// Full oblique hat matrix H = X (X'PiX)^-1 X' Pi.
inline Eigen::MatrixXd hat_matrix(const SurvivalDataset& data, const WeightVector& w,
                                  std::span<const int> indices) {
    if (indices.empty())
        throw Error(ErrorKind::invalid_argument, "regression", "hat_matrix",
                    "candidate model has no covariates");
    const Eigen::MatrixXd x = detail::submatrix(data.covariates, indices);
    const Eigen::MatrixXd normal = x.transpose() * w.pi.asDiagonal() * x;
    const Eigen::MatrixXd inverse =
        detail::guarded_normal_inverse(normal, indices, "hat_matrix");
    return x * inverse * x.transpose() * w.pi.asDiagonal();
}

// Out-of-sample prediction; x_new columns must already match the fit's
// index set.
inline Eigen::VectorXd predict(const CandidateFit& fit, const Eigen::MatrixXd& x_new) {
    if (x_new.cols() != static_cast<Eigen::Index>(fit.index_set.size()))
        throw Error(ErrorKind::invalid_argument, "regression", "predict",
                    "new data has " + std::to_string(x_new.cols()) +
                        " columns, expected " + std::to_string(fit.index_set.size()));
    return x_new * fit.beta;
}

}  // namespace censavg
