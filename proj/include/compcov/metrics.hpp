#pragma once

#include <compcov/error.hpp>
#include <compcov/solver.hpp>
#include <compcov/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace compcov {

/// Entries with magnitude at or below this are read as zero.
inline constexpr double kSupportThreshold = 1e-8;

inline bool is_nonzero(double v) noexcept { return std::abs(v) > kSupportThreshold; }

/// R_hjk = Omega_hjk / sqrt(Omega_hjj Omega_hkk).
inline CovarianceTensor to_correlation(const CovarianceTensor& omega)
{
    const Index p = omega.dim();
    Tensor3 r = Tensor3::zeros_like(omega.omega);
    for (std::size_t h = 0; h < omega.h_count(); ++h) {
        const Vector d = omega[h].diagonal();
        if (!(d.array() > 0.0).all()) {
            throw DomainError("to_correlation: slice " + std::to_string(h) +
                              " has a nonpositive diagonal entry");
        }
        const Vector inv = d.cwiseSqrt().cwiseInverse();
        r[h] = inv.asDiagonal() * omega[h] * inv.asDiagonal();
        for (Index j = 0; j < p; ++j) r[h](j, j) = 1.0;
        mirror_upper(r[h]);
    }
    return CovarianceTensor(std::move(r));
}

struct ErrorNorms {
    /// (1/H) sum_h ||est_h - truth_h||_F / p
    double frob_per_p = 0.0;
    /// (1/H) sum_h max_k sum_j |est_hjk - truth_hjk| / p
    double l1_per_p = 0.0;
    std::vector<double> frob_per_population;
    std::vector<double> l1_per_population;
};

inline ErrorNorms error_norms(const CovarianceTensor& est, const CovarianceTensor& truth)
{
    est.omega.require_same_shape(truth.omega, "error_norms");
    const double p = static_cast<double>(est.dim());
    const double hc = static_cast<double>(est.h_count());
    ErrorNorms e;
    for (std::size_t h = 0; h < est.h_count(); ++h) {
        const Matrix d = est[h] - truth[h];
        const double frob = d.norm() / p;
        const double l1 = d.cwiseAbs().colwise().sum().maxCoeff() / p;
        e.frob_per_population.push_back(frob);
        e.l1_per_population.push_back(l1);
        e.frob_per_p += frob / hc;
        e.l1_per_p += l1 / hc;
    }
    return e;
}

struct SupportRates {
    double tpr = std::numeric_limits<double>::quiet_NaN();
    double tnr = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> tpr_per_population;
    std::vector<double> tnr_per_population;
    /// Populations left out of the average because the denominator was zero.
    std::vector<std::size_t> tpr_excluded;
    std::vector<std::size_t> tnr_excluded;
};

/**
 * True positive and true negative rates of the off-diagonal support,
 * averaged over populations. Counts run over ordered pairs j != k.
 * A population with no true nonzeros (zeros) is left out of the TPR (TNR)
 * average and listed in the matching `*_excluded` vector; its per-population
 * entry is NaN.
 */
inline SupportRates tpr_tnr(const CovarianceTensor& est, const CovarianceTensor& truth)
{
    est.omega.require_same_shape(truth.omega, "tpr_tnr");
    const Index p = est.dim();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SupportRates r;
    double tpr_sum = 0.0;
    double tnr_sum = 0.0;
    for (std::size_t h = 0; h < est.h_count(); ++h) {
        long tp = 0, pos = 0, tn = 0, neg = 0;
        for (Index j = 0; j < p; ++j) {
            for (Index k = 0; k < p; ++k) {
                if (j == k) continue;
                const bool e = is_nonzero(est[h](j, k));
                if (is_nonzero(truth[h](j, k))) {
                    ++pos;
                    tp += e ? 1 : 0;
                } else {
                    ++neg;
                    tn += e ? 0 : 1;
                }
            }
        }
        if (pos > 0) {
            r.tpr_per_population.push_back(static_cast<double>(tp) / static_cast<double>(pos));
            tpr_sum += r.tpr_per_population.back();
        } else {
            r.tpr_per_population.push_back(nan);
            r.tpr_excluded.push_back(h);
        }
        if (neg > 0) {
            r.tnr_per_population.push_back(static_cast<double>(tn) / static_cast<double>(neg));
            tnr_sum += r.tnr_per_population.back();
        } else {
            r.tnr_per_population.push_back(nan);
            r.tnr_excluded.push_back(h);
        }
    }
    const auto used_tpr = est.h_count() - r.tpr_excluded.size();
    const auto used_tnr = est.h_count() - r.tnr_excluded.size();
    if (used_tpr > 0) r.tpr = tpr_sum / static_cast<double>(used_tpr);
    if (used_tnr > 0) r.tnr = tnr_sum / static_cast<double>(used_tnr);
    return r;
}

/// Support recovery plus error norms on both scales.
struct MetricsReport {
    SupportRates support;
    ErrorNorms covariance;
    ErrorNorms correlation;
};

inline MetricsReport evaluate(const CovarianceTensor& est, const CovarianceTensor& truth)
{
    MetricsReport m;
    m.support = tpr_tnr(est, truth);
    m.covariance = error_norms(est, truth);
    m.correlation = error_norms(to_correlation(est), to_correlation(truth));
    return m;
}

// ---------------------------------------------------------------------------
// Oracle baseline: soft-thresholded sample covariance of the latent log-abundances.

/// Sample covariance with divisor n (matches the variation-matrix divisor).
inline Matrix sample_covariance(const Matrix& samples)
{
    if (samples.rows() < 1) throw DomainError("sample_covariance: no samples");
    const Matrix centered = samples.rowwise() - samples.colwise().mean();
    Matrix s = centered.transpose() * centered / static_cast<double>(samples.rows());
    mirror_upper(s);
    return s;
}

/// Soft-threshold the off-diagonal entries at t; the diagonal is untouched.
inline Matrix soft_threshold_offdiagonal(const Matrix& s, double t)
{
    Matrix out = s;
    for (Index j = 0; j < s.rows(); ++j) {
        for (Index k = 0; k < s.cols(); ++k) {
            if (j != k) out(j, k) = soft_threshold(s(j, k), t);
        }
    }
    return out;
}

/// Ascending thresholds 0 = t_0 < ... < t_{m-1} = max off-diagonal |s|, evenly spaced.
inline std::vector<double> default_threshold_grid(const Matrix& s, int count = 40)
{
    double top = 0.0;
    for (Index j = 0; j < s.rows(); ++j) {
        for (Index k = 0; k < s.cols(); ++k) {
            if (j != k) top = std::max(top, std::abs(s(j, k)));
        }
    }
    std::vector<double> grid;
    for (int i = 0; i < count; ++i) {
        grid.push_back(top * static_cast<double>(i) / static_cast<double>(std::max(1, count - 1)));
    }
    return grid;
}

struct OracleResult {
    CovarianceTensor estimate;
    /// Selected threshold per population.
    std::vector<double> thresholds;
    /// Label used in reports; plain (not adaptive) soft-thresholding.
    static constexpr const char* kName = "oracle-soft";
};

/**
 * Per population, soft-threshold the training sample covariance of log W and
 * keep the threshold whose estimate is closest in Frobenius norm to the
 * validation-set sample covariance. An empty `thresholds` uses
 * default_threshold_grid of each training covariance.
 */
inline OracleResult oracle_baseline(const std::vector<Matrix>& train_log_basis,
                                    const std::vector<Matrix>& validation_log_basis,
                                    const std::vector<double>& thresholds = {})
{
    if (train_log_basis.empty() || train_log_basis.size() != validation_log_basis.size()) {
        throw DomainError("oracle_baseline: need matching, nonempty training and validation sets");
    }
    const Index p = train_log_basis.front().cols();
    Tensor3 est(train_log_basis.size(), p);
    OracleResult out;
    for (std::size_t h = 0; h < train_log_basis.size(); ++h) {
        if (train_log_basis[h].cols() != p || validation_log_basis[h].cols() != p) {
            throw DomainError("oracle_baseline: dimension mismatch");
        }
        const Matrix s_train = sample_covariance(train_log_basis[h]);
        const Matrix s_val = sample_covariance(validation_log_basis[h]);
        const std::vector<double> grid = thresholds.empty() ? default_threshold_grid(s_train) : thresholds;
        double best = std::numeric_limits<double>::infinity();
        double best_t = 0.0;
        for (double t : grid) {
            if (t < 0.0) throw DomainError("oracle_baseline: thresholds must be >= 0");
            const double score = (soft_threshold_offdiagonal(s_train, t) - s_val).squaredNorm();
            if (score < best) {
                best = score;
                best_t = t;
            }
        }
        est[h] = soft_threshold_offdiagonal(s_train, best_t);
        out.thresholds.push_back(best_t);
    }
    out.estimate = CovarianceTensor(std::move(est));
    return out;
}

} // namespace compcov
