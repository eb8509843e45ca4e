#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "censavg/averaging.hpp"
#include "censavg/errors.hpp"
#include "censavg/regression.hpp"
#include "censavg/screening.hpp"
#include "censavg/survival.hpp"

namespace censavg {

// Screening + weighting combinations benchmarked against each other.
enum class Method { fmv_mcv2, fmv_mcv1, sis_mcv2, fks_mcv2, maic, mbic };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::fmv_mcv2: return "fmv_mcv2";
        case Method::fmv_mcv1: return "fmv_mcv1";
        case Method::sis_mcv2: return "sis_mcv2";
        case Method::fks_mcv2: return "fks_mcv2";
        case Method::maic: return "maic";
        case Method::mbic: return "mbic";
    }
    return "?";
}

inline Method method_from_string(const std::string& name) {
    if (name == "fmv_mcv2") return Method::fmv_mcv2;
    if (name == "fmv_mcv1") return Method::fmv_mcv1;
    if (name == "sis_mcv2") return Method::sis_mcv2;
    if (name == "fks_mcv2") return Method::fks_mcv2;
    if (name == "maic") return Method::maic;
    if (name == "mbic") return Method::mbic;
    throw Error(ErrorKind::config, "methods", "method_from_string",
                "unknown method '" + name + "'");
}

inline ScreenMethod screening_of(Method m) {
    switch (m) {
        case Method::sis_mcv2: return ScreenMethod::sis;
        case Method::fks_mcv2: return ScreenMethod::fks;
        default: return ScreenMethod::fmv;  // MAIC/MBIC reuse the FMV groups
    }
}

// Screening, grouping and per-group WLS fits shared by every weighting
// scheme that uses the same filter.
struct PipelineComponents {
    ScreeningResult screening;
    CandidateGroups groups;
    std::vector<CandidateFit> fits;
};

inline ScreeningResult run_screening(const SurvivalDataset& data, ScreenMethod method,
                                     std::optional<int> max_slices, int threads) {
    switch (method) {
        case ScreenMethod::fmv: return screen_fmv(data, max_slices, threads);
        case ScreenMethod::sis: return screen_sis(data);
        case ScreenMethod::fks: return screen_fks(data, max_slices, threads);
    }
    throw Error(ErrorKind::invalid_argument, "methods", "run_screening",
                "unknown screening method");
}

inline PipelineComponents build_components(const SurvivalDataset& data,
                                           const WeightVector& w, ScreenMethod method,
                                           int top_count, int group_count,
                                           std::optional<int> max_slices = {},
                                           int threads = 1) {
    PipelineComponents out;
    out.screening = run_screening(data, method, max_slices, threads);
    out.groups = build_candidate_groups(out.screening, top_count, group_count);
    out.fits.reserve(out.groups.groups.size());
    for (const auto& group : out.groups.groups)
        out.fits.push_back(wls_fit(data, w, group));
    return out;
}

inline WeightSolution solve_weights(Method m, const std::vector<CandidateFit>& fits,
                                    const SurvivalDataset& data, const WeightVector& w,
                                    const MallowsOptions& opts = {}) {
    switch (m) {
        case Method::fmv_mcv1:
            return optimize_weights_simplex(build_problem(fits, data, w), opts);
        case Method::maic:
            return info_criterion_weights(fits, data, w, InfoCriterion::aic);
        case Method::mbic:
            return info_criterion_weights(fits, data, w, InfoCriterion::bic);
        default:
            return optimize_weights_box(build_problem(fits, data, w), opts);
    }
}

// In-sample averaged predictor sum_k omega_k * (H_k Y).
inline Eigen::VectorXd averaged_fitted(const std::vector<CandidateFit>& fits,
                                       const Eigen::VectorXd& omega) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(fits.front().fitted.size());
    for (std::size_t k = 0; k < fits.size(); ++k)
        out += omega(static_cast<Eigen::Index>(k)) * fits[k].fitted;
    return out;
}

}  // namespace censavg
