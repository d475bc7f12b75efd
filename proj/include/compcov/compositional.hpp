#pragma once

#include <compcov/error.hpp>
#include <compcov/parallel.hpp>
#include <compcov/tensor.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace compcov {

/// Row-sum tolerance for compositions on the simplex.
inline constexpr double kSimplexTolerance = 1e-9;

/**
 * Compositional samples from H populations sharing p parts.
 *
 * Block h is an n_h x p matrix whose rows are strictly positive and sum to
 * one. Zeros have to be removed (pseudocount) before construction.
 */
class CompositionDataset {
public:
    CompositionDataset(std::vector<Matrix> populations,
                       std::vector<std::string> population_names = {},
                       std::vector<std::string> labels = {})
        : populations_(std::move(populations)),
          population_names_(std::move(population_names)),
          labels_(std::move(labels))
    {
        if (populations_.empty()) {
            throw InvalidInput("CompositionDataset: at least one population is required");
        }
        p_ = populations_.front().cols();
        if (p_ < 2) throw InvalidInput("CompositionDataset: need at least two parts");

        for (std::size_t h = 0; h < populations_.size(); ++h) {
            const Matrix& x = populations_[h];
            const std::string where = "population " + std::to_string(h);
            if (x.cols() != p_) {
                throw InvalidInput("CompositionDataset: " + where + " has " +
                                   std::to_string(x.cols()) + " parts, expected " +
                                   std::to_string(p_));
            }
            if (x.rows() < 2) {
                throw InvalidInput("CompositionDataset: " + where + " needs at least 2 samples");
            }
            for (Index i = 0; i < x.rows(); ++i) {
                for (Index j = 0; j < p_; ++j) {
                    if (!(x(i, j) > 0.0) || !std::isfinite(x(i, j))) {
                        throw InvalidInput("CompositionDataset: " + where + " row " +
                                           std::to_string(i) + " column " + std::to_string(j) +
                                           " is not strictly positive");
                    }
                }
                if (std::abs(x.row(i).sum() - 1.0) > kSimplexTolerance) {
                    throw InvalidInput("CompositionDataset: " + where + " row " +
                                       std::to_string(i) + " does not sum to 1");
                }
            }
        }

        if (population_names_.empty()) {
            for (std::size_t h = 0; h < populations_.size(); ++h) {
                population_names_.push_back("population" + std::to_string(h + 1));
            }
        } else if (population_names_.size() != populations_.size()) {
            throw InvalidInput("CompositionDataset: population_names length must equal H");
        }

        if (labels_.empty()) {
            for (Index j = 0; j < p_; ++j) labels_.push_back("V" + std::to_string(j + 1));
        } else if (static_cast<Index>(labels_.size()) != p_) {
            throw InvalidInput("CompositionDataset: labels length must equal p");
        }
    }

    std::size_t h_count() const noexcept { return populations_.size(); }
    Index dim() const noexcept { return p_; }
    const Matrix& population(std::size_t h) const { return populations_[h]; }
    const std::vector<Matrix>& populations() const noexcept { return populations_; }
    const std::vector<std::string>& population_names() const noexcept { return population_names_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    std::vector<Index> sizes() const
    {
        std::vector<Index> n;
        for (const auto& x : populations_) n.push_back(x.rows());
        return n;
    }

private:
    std::vector<Matrix> populations_;
    std::vector<std::string> population_names_;
    std::vector<std::string> labels_;
    Index p_ = 0;
};

/// Divide each row by its sum.
inline Matrix close_rows(const Matrix& w)
{
    Matrix x = w;
    for (Index i = 0; i < x.rows(); ++i) x.row(i) /= x.row(i).sum();
    return x;
}

/**
 * Sample variation matrix of one block of compositions:
 * Theta_jk = (1/n) sum_i (z_ijk - mean_i z_ijk)^2 with z_ijk = log(x_ij / x_ik).
 *
 * The divisor is n, not n - 1. Only the upper triangle is computed, the
 * lower one is mirrored, and the diagonal is left at exactly zero. Any
 * positive row scale cancels inside the log-ratios, so rows need not be
 * closed. A single-row block yields the zero matrix.
 */
inline Matrix variation_matrix(const Matrix& x)
{
    const Index n = x.rows();
    const Index p = x.cols();
    if (n < 1) throw InvalidInput("variation_matrix: empty sample block");

    const Matrix logs = x.array().log().matrix();
    if (!logs.allFinite()) {
        throw InvalidInput("variation_matrix: non-finite log-ratio (zero or negative part)");
    }

    Matrix theta = Matrix::Zero(p, p);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Index j = 0; j < p; ++j) {
        for (Index k = j + 1; k < p; ++k) {
            double mean = 0.0;
            for (Index i = 0; i < n; ++i) mean += logs(i, j) - logs(i, k);
            mean *= inv_n;
            double ss = 0.0;
            for (Index i = 0; i < n; ++i) {
                const double d = logs(i, j) - logs(i, k) - mean;
                ss += d * d;
            }
            theta(j, k) = ss * inv_n;
            theta(k, j) = theta(j, k);
        }
    }
    return theta;
}

/// Stack of per-population sample variation matrices.
inline VariationTensor variation_tensor(const CompositionDataset& data)
{
    std::vector<Matrix> slices(data.h_count());
    parallel_for(data.h_count(),
                 [&](std::size_t h) { slices[h] = variation_matrix(data.population(h)); });
    return VariationTensor(std::move(slices));
}

/**
 * Closed-form variances of the best diagonal fit to a variation matrix:
 *
 *   w_j = (p-1)^-1 sum_{k != j} Theta_jk
 *         - {2 (p-1)(p-2)}^-1 sum_{k != j} sum_{l != j} Theta_lk.
 *
 * This is the unique minimizer of ||Theta - w 1' - 1 w' + 2 diag(w)||_F^2
 * over w when p >= 3. Entries may be negative; no clamping is applied.
 */
inline Vector closed_form_diagonal(const Matrix& theta)
{
    const Index p = theta.rows();
    if (theta.cols() != p) throw DomainError("closed_form_diagonal: theta must be square");
    if (p < 3) throw DomainError("closed_form_diagonal: requires p >= 3");

    const Vector row_sums = theta.rowwise().sum();
    const double total = theta.sum();
    const double a = 1.0 / static_cast<double>(p - 1);
    const double b = 1.0 / (2.0 * static_cast<double>(p - 1) * static_cast<double>(p - 2));

    Vector w(p);
    for (Index j = 0; j < p; ++j) {
        // Zero diagonal: sum over l != j, k != j is the total minus row j and column j.
        w(j) = a * row_sums(j) - b * (total - 2.0 * row_sums(j));
    }
    return w;
}

/// Variation matrix implied by a covariance matrix: w 1' + 1 w' - 2 Omega, w = diag(Omega).
inline Matrix variation_from_covariance(const Matrix& omega)
{
    const Index p = omega.rows();
    Matrix theta(p, p);
    for (Index j = 0; j < p; ++j) {
        for (Index k = 0; k < p; ++k) {
            theta(j, k) = j == k ? 0.0 : omega(j, j) + omega(k, k) - 2.0 * omega(j, k);
        }
    }
    mirror_upper(theta);
    return theta;
}

// ---------------------------------------------------------------------------
// Simulation models

/// Ground-truth configuration of one of the three simulation models.
struct GroundTruthSpec {
    int model_id = 1;
    Index p = 40;
    /// The models are defined for exactly four populations.
    std::size_t h_count = 4;
};

namespace detail {

/// Half-open 0-based index range [begin, end).
struct IndexRange {
    Index begin;
    Index end;
    bool contains(Index i) const noexcept { return i >= begin && i < end; }
};

inline void require_pd(const Matrix& m, int model_id, std::size_t h)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0)) {
        throw NumericError("model_truth: model " + std::to_string(model_id) + " slice " +
                           std::to_string(h) + " is not positive definite");
    }
}

} // namespace detail

/**
 * Diagonal blocks (0-based, half-open) used by Models 2 and 3.
 *
 * Model 2: A_h = {(h-1)p/4 + 1, ..., hp/4}^2 in 1-based notation.
 * Model 3: B_1 = [p/2]^2, B_2 = {p/6+1..2p/3}^2, B_3 = {p/3+1..5p/6}^2,
 *          B_4 = {p/2+1..p}^2.
 */
inline std::vector<std::pair<Index, Index>> model_blocks(int model_id, Index p)
{
    if (model_id == 2) {
        const Index q = p / 4;
        return {{0, q}, {q, 2 * q}, {2 * q, 3 * q}, {3 * q, p}};
    }
    if (model_id == 3) {
        const Index s = p / 6;
        return {{0, 3 * s}, {s, 4 * s}, {2 * s, 5 * s}, {3 * s, p}};
    }
    throw DomainError("model_blocks: only models 2 and 3 are block models");
}

/**
 * Ground-truth covariance tensor of simulation Model 1, 2 or 3 (H = 4).
 *
 * Model 1: entries 0.3 (h = 1, 2) or -0.2 (h = 3, 4) where 1 <= |j-k| <= 2,
 *          unit diagonal.
 * Model 2: 0.8^|j-k| on the block A_h where |j-k| < p/4, unit diagonal
 *          elsewhere. Requires p divisible by 4.
 * Model 3: D C_h D with C_h = 0.9^|j-k| on B_h, unit diagonal elsewhere, and
 *          D diagonal equally spaced from 3 down to 1. Requires p divisible by 6.
 */
inline CovarianceTensor model_truth(const GroundTruthSpec& spec)
{
    const Index p = spec.p;
    if (spec.h_count != 4) throw DomainError("model_truth: the models are defined for H = 4");
    if (p < 3) throw DomainError("model_truth: p must be at least 3");

    Tensor3 t(4, p);
    switch (spec.model_id) {
    case 1:
        for (std::size_t h = 0; h < 4; ++h) {
            const double v = h < 2 ? 0.3 : -0.2;
            for (Index j = 0; j < p; ++j) {
                for (Index k = 0; k < p; ++k) {
                    const Index d = std::abs(j - k);
                    t[h](j, k) = d == 0 ? 1.0 : (d <= 2 ? v : 0.0);
                }
            }
        }
        break;
    case 2: {
        if (p % 4 != 0) throw DomainError("model_truth: Model 2 requires p divisible by 4");
        const auto blocks = model_blocks(2, p);
        for (std::size_t h = 0; h < 4; ++h) {
            const detail::IndexRange a{blocks[h].first, blocks[h].second};
            for (Index j = 0; j < p; ++j) {
                for (Index k = 0; k < p; ++k) {
                    const Index d = std::abs(j - k);
                    // |j-k| < p/4 is implied inside a block of side p/4; kept for fidelity.
                    if (a.contains(j) && a.contains(k) && 4 * d < p) {
                        t[h](j, k) = std::pow(0.8, static_cast<double>(d));
                    } else {
                        t[h](j, k) = j == k ? 1.0 : 0.0;
                    }
                }
            }
        }
        break;
    }
    case 3: {
        if (p % 6 != 0) throw DomainError("model_truth: Model 3 requires p divisible by 6");
        const auto blocks = model_blocks(3, p);
        Vector scale(p);
        for (Index j = 0; j < p; ++j) {
            scale(j) = 3.0 - 2.0 * static_cast<double>(j) / static_cast<double>(p - 1);
        }
        for (std::size_t h = 0; h < 4; ++h) {
            const detail::IndexRange b{blocks[h].first, blocks[h].second};
            for (Index j = 0; j < p; ++j) {
                for (Index k = 0; k < p; ++k) {
                    double c = 0.0;
                    if (b.contains(j) && b.contains(k)) {
                        c = std::pow(0.9, static_cast<double>(std::abs(j - k)));
                    } else if (j == k) {
                        c = 1.0;
                    }
                    t[h](j, k) = scale(j) * c * scale(k);
                }
            }
        }
        break;
    }
    default:
        throw DomainError("model_truth: model_id must be 1, 2 or 3");
    }

    for (std::size_t h = 0; h < 4; ++h) {
        mirror_upper(t[h]);
        detail::require_pd(t[h], spec.model_id, h);
    }
    return CovarianceTensor(std::move(t));
}

/// Compositions together with the latent log-abundances they were built from.
struct SimulatedData {
    CompositionDataset data;
    /// log W per population (n_h x p); only available for synthetic data.
    std::vector<Matrix> log_basis;
};

/**
 * Draw log W_(h)i ~ N_p(0, Omega*_(h)) independently and close exp(log W)
 * to the simplex.
 *
 * Sampling uses the lower Cholesky factor of each slice times standard
 * normals from std::mt19937_64 seeded with `seed`; populations and rows are
 * drawn in order, so the output is a pure function of (truth, sizes, seed).
 */
inline SimulatedData simulate_dataset(const CovarianceTensor& truth, std::span<const Index> sizes,
                                      std::uint64_t seed)
{
    if (sizes.size() != truth.h_count()) {
        throw DomainError("simulate_dataset: sizes must have one entry per population");
    }
    for (Index n : sizes) {
        if (n < 2) throw DomainError("simulate_dataset: every population needs n >= 2");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index p = truth.dim();

    std::vector<Matrix> comps;
    std::vector<Matrix> logs;
    for (std::size_t h = 0; h < truth.h_count(); ++h) {
        Eigen::LLT<Matrix> llt(truth[h]);
        if (llt.info() != Eigen::Success) {
            throw DomainError("simulate_dataset: truth slice " + std::to_string(h) +
                              " is not positive definite");
        }
        const Matrix lower = llt.matrixL();
        Matrix z(sizes[h], p);
        for (Index i = 0; i < z.rows(); ++i) {
            for (Index j = 0; j < p; ++j) z(i, j) = normal(rng);
        }
        Matrix log_w = z * lower.transpose();
        // Shift each row by its max before exponentiating; closure removes the factor.
        Matrix w(log_w.rows(), p);
        for (Index i = 0; i < w.rows(); ++i) {
            const double m = log_w.row(i).maxCoeff();
            w.row(i) = (log_w.row(i).array() - m).exp().matrix();
        }
        comps.push_back(close_rows(w));
        logs.push_back(std::move(log_w));
    }

    std::vector<std::string> names;
    for (std::size_t h = 0; h < truth.h_count(); ++h) {
        names.push_back("population" + std::to_string(h + 1));
    }
    return SimulatedData{CompositionDataset(std::move(comps), std::move(names)), std::move(logs)};
}

} // namespace compcov
