#pragma once

#include <compcov/compositional.hpp>
#include <compcov/error.hpp>
#include <compcov/tensor.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace compcov {

/// Eigenvalue floor epsilon; std::nullopt drops the PSD constraint entirely.
using EigenFloor = std::optional<double>;
inline constexpr EigenFloor kUnconstrained = std::nullopt;

/// Default floor on the smallest eigenvalue of every estimate.
inline constexpr double kDefaultEpsilon = 1e-4;

/**
 * Tuning and control parameters of the joint estimator
 *
 *   min  sum_h ||Theta_h - w_h 1' - 1 w_h' + 2 Omega_h||_F^2
 *        + sum_h lambda_h ||Omega_h^-||_1 + gamma sum_{j != k} ||Omega_.jk||_2
 *   s.t. Omega_h = Omega_h',  Omega_h >= epsilon I.
 *
 * Both penalties run over ordered pairs j != k (both triangles).
 */
struct SolverConfig {
    double lambda = 0.0;
    double gamma = 0.0;
    /// Overrides `lambda` with one value per population when set.
    std::optional<std::vector<double>> per_population_lambda;
    EigenFloor epsilon = kDefaultEpsilon;
    /// Initial step; 1/(8p) when unset.
    std::optional<double> alpha0;
    double tau = 0.5;
    double tol = 1e-7;
    int max_iter = 10000;
    int max_backtracks = 60;

    /// Elementwise threshold lambda_h for each of h_count populations.
    Vector lambdas(std::size_t h_count) const
    {
        if (per_population_lambda) {
            Vector l(static_cast<Index>(per_population_lambda->size()));
            for (std::size_t h = 0; h < per_population_lambda->size(); ++h) {
                l(static_cast<Index>(h)) = (*per_population_lambda)[h];
            }
            return l;
        }
        return Vector::Constant(static_cast<Index>(h_count), lambda);
    }

    void validate(std::size_t h_count) const
    {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("SolverConfig: lambda must be >= 0");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("SolverConfig: gamma must be >= 0");
        if (per_population_lambda) {
            if (per_population_lambda->size() != h_count) {
                throw DomainError("SolverConfig: per_population_lambda must have length H");
            }
            for (double l : *per_population_lambda) {
                if (!(l >= 0.0) || !std::isfinite(l)) {
                    throw DomainError("SolverConfig: per_population_lambda entries must be >= 0");
                }
            }
        }
        if (epsilon && !std::isfinite(*epsilon)) {
            throw DomainError("SolverConfig: epsilon must be finite when the floor is active");
        }
        if (alpha0 && !(*alpha0 > 0.0)) throw DomainError("SolverConfig: alpha0 must be > 0");
        if (!(tau > 0.0 && tau < 1.0)) throw DomainError("SolverConfig: tau must lie in (0, 1)");
        if (!(tol > 0.0)) throw DomainError("SolverConfig: tol must be > 0");
        if (max_iter < 1) throw DomainError("SolverConfig: max_iter must be >= 1");
        if (max_backtracks < 1) throw DomainError("SolverConfig: max_backtracks must be >= 1");
    }
};

/// Iterates of the adaptive three-operator splitting.
struct SolverState {
    /// Output of the sparse-group prox (sparse, possibly infeasible).
    Tensor3 omega;
    /// Output of the PSD projection (feasible, returned as the estimate).
    Tensor3 omega_tilde;
    /// Running correction linking the two proximal maps.
    Tensor3 psi;
    double alpha = 0.0;
    int iter = 0;
};

struct FitResult {
    CovarianceTensor estimate;
    /// Penalized objective at the feasible iterate after every iteration.
    std::vector<double> objective_trace;
    bool converged = false;
    int iterations = 0;
    double final_alpha = 0.0;
    int backtrack_count = 0;

    double final_objective() const
    {
        return objective_trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : objective_trace.back();
    }
};

/// What the observer sees for each accepted step.
struct IterationInfo {
    int iter = 0;
    double alpha = 0.0;
    /// loss at the prox output and the surrogate Q it was accepted against.
    double candidate_loss = 0.0;
    double surrogate = 0.0;
    int backtracks = 0;
    /// Penalized objective at the new feasible iterate.
    double objective = 0.0;
};

using IterationObserver = std::function<void(const IterationInfo&, const SolverState&)>;

namespace detail {

inline void require_match(const Tensor3& omega, const Tensor3& theta, const char* what)
{
    if (!omega.same_shape(theta)) {
        throw DomainError(std::string(what) + ": omega and theta shapes differ");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Smooth part

/// sum_h ||Theta_h - w_h 1' - 1 w_h' + 2 Omega_h||_F^2 with w_h = diag(Omega_h).
inline double loss(const Tensor3& omega, const Tensor3& theta)
{
    detail::require_match(omega, theta, "loss");
    const Index p = omega.dim();
    double acc = 0.0;
    for (std::size_t h = 0; h < omega.h_count(); ++h) {
        const Matrix& o = omega[h];
        const Matrix& t = theta[h];
        for (Index k = 0; k < p; ++k) {
            for (Index j = 0; j < p; ++j) {
                if (j == k) continue; // residual is identically zero on the diagonal
                const double r = t(j, k) - o(j, j) - o(k, k) + 2.0 * o(j, k);
                acc += r * r;
            }
        }
    }
    return acc;
}

inline double loss(const CovarianceTensor& omega, const VariationTensor& theta)
{
    return loss(omega.omega, theta.theta());
}

/**
 * Gradient of `loss`, treating every entry of Omega as a free coordinate:
 *
 *   [grad]_hjj = sum_{l != j} (4 O_hjj - 4 T_hjl - 8 O_hjl + 4 O_hll)
 *   [grad]_hjk = 8 O_hjk - 4 O_hjj - 4 O_hkk + 4 T_hjk,   j != k.
 *
 * The displayed diagonal form assumes symmetric slices.
 */
inline Tensor3 grad_loss(const Tensor3& omega, const Tensor3& theta)
{
    detail::require_match(omega, theta, "grad_loss");
    const Index p = omega.dim();
    Tensor3 g = Tensor3::zeros_like(omega);
    for (std::size_t h = 0; h < omega.h_count(); ++h) {
        const Matrix& o = omega[h];
        const Matrix& t = theta[h];
        Matrix& out = g[h];
        for (Index k = 0; k < p; ++k) {
            for (Index j = 0; j < p; ++j) {
                if (j != k) out(j, k) = 8.0 * o(j, k) - 4.0 * o(j, j) - 4.0 * o(k, k) + 4.0 * t(j, k);
            }
        }
        for (Index j = 0; j < p; ++j) {
            double s = 0.0;
            for (Index l = 0; l < p; ++l) {
                if (l != j) s += 4.0 * o(j, j) - 4.0 * t(j, l) - 8.0 * o(j, l) + 4.0 * o(l, l);
            }
            out(j, j) = s;
        }
    }
    return g;
}

/**
 * Quadratic upper model of `loss` around `base`:
 * l(base) + <grad, c - base> + (1 / 2 alpha) ||c - base||^2.
 */
inline double surrogate_q(const Tensor3& candidate, const Tensor3& base, const Tensor3& grad_at_base,
                          double loss_at_base, double alpha)
{
    candidate.require_same_shape(base, "surrogate_q");
    candidate.require_same_shape(grad_at_base, "surrogate_q");
    if (!(alpha > 0.0)) throw DomainError("surrogate_q: alpha must be > 0");
    const Tensor3 diff = candidate - base;
    return loss_at_base + grad_at_base.dot(diff) + diff.squared_norm() / (2.0 * alpha);
}

// ---------------------------------------------------------------------------
// Nonsmooth parts

/// sum_h lambda_h ||Omega_h^-||_1 + gamma sum_{j != k} ||Omega_.jk||_2 over ordered pairs.
inline double penalty(const Tensor3& omega, const Vector& lambdas, double gamma)
{
    if (lambdas.size() != static_cast<Index>(omega.h_count())) {
        throw DomainError("penalty: need one lambda per population");
    }
    const Index p = omega.dim();
    double l1 = 0.0;
    for (std::size_t h = 0; h < omega.h_count(); ++h) {
        const double off = omega[h].cwiseAbs().sum() - omega[h].diagonal().cwiseAbs().sum();
        l1 += lambdas(static_cast<Index>(h)) * off;
    }
    double group = 0.0;
    if (gamma != 0.0) {
        for (Index k = 0; k < p; ++k) {
            for (Index j = 0; j < p; ++j) {
                if (j == k) continue;
                double sq = 0.0;
                for (const auto& s : omega) sq += s(j, k) * s(j, k);
                group += std::sqrt(sq);
            }
        }
    }
    return l1 + gamma * group;
}

inline double penalty(const Tensor3& omega, const SolverConfig& cfg)
{
    return penalty(omega, cfg.lambdas(omega.h_count()), cfg.gamma);
}

inline double penalty(const CovarianceTensor& omega, const SolverConfig& cfg)
{
    return penalty(omega.omega, cfg);
}

/// max(|y| - t, 0) sign(y).
inline double soft_threshold(double y, double t) noexcept
{
    const double m = std::abs(y) - t;
    return m > 0.0 ? std::copysign(m, y) : 0.0;
}

/**
 * Proximal map of x -> sum_h a_h |x_h| + b ||x||_2 at y: elementwise soft
 * thresholding followed by group shrinkage (1 - b / ||w||)_+ w.
 */
template <class Derived, class ThresholdDerived>
Vector prox_fiber(const Eigen::MatrixBase<Derived>& y, const Eigen::MatrixBase<ThresholdDerived>& a_lambda,
                  double a_gamma)
{
    Vector w(y.size());
    for (Index h = 0; h < y.size(); ++h) w(h) = soft_threshold(y(h), a_lambda(h));
    const double norm = w.norm();
    if (norm == 0.0) return Vector::Zero(y.size());
    const double shrink = 1.0 - a_gamma / norm;
    if (shrink <= 0.0) return Vector::Zero(y.size());
    return shrink * w;
}

/**
 * Fiber-wise sparse-group prox of the whole tensor. Diagonal fibers pass
 * through unchanged; every off-diagonal ordered pair (j, k) is mapped with
 * `prox_fiber` using thresholds a_lambda (one per population) and a_gamma.
 */
inline Tensor3 prox_sparse_group(const Tensor3& point, const Vector& a_lambda, double a_gamma)
{
    if (a_lambda.size() != static_cast<Index>(point.h_count())) {
        throw DomainError("prox_sparse_group: need one threshold per population");
    }
    if ((a_lambda.array() < 0.0).any() || a_gamma < 0.0) {
        throw DomainError("prox_sparse_group: thresholds must be >= 0");
    }
    const Index p = point.dim();
    const std::size_t hc = point.h_count();
    Tensor3 out = point;
    Vector y(static_cast<Index>(hc));
    for (Index k = 0; k < p; ++k) {
        for (Index j = 0; j < p; ++j) {
            if (j == k) continue;
            for (std::size_t h = 0; h < hc; ++h) y(static_cast<Index>(h)) = point[h](j, k);
            out.set_fiber(j, k, prox_fiber(y, a_lambda, a_gamma));
        }
    }
    return out;
}

inline Tensor3 prox_sparse_group(const Tensor3& point, double a_lambda, double a_gamma)
{
    return prox_sparse_group(point, Vector::Constant(static_cast<Index>(point.h_count()), a_lambda),
                             a_gamma);
}

/**
 * Frobenius projection onto {M = M', M >= epsilon I}.
 *
 * The input is symmetrized as (A + A')/2; eigenvalues below epsilon are
 * raised to epsilon. With the floor disabled only the symmetrization is
 * applied. The result is exactly symmetric.
 */
inline Matrix project_psd_floor(const Matrix& a, EigenFloor epsilon)
{
    if (a.rows() != a.cols()) throw DomainError("project_psd_floor: matrix must be square");
    if (!a.allFinite()) throw NumericError("project_psd_floor: non-finite input");

    Matrix sym = 0.5 * (a + a.transpose());
    mirror_upper(sym);
    if (!epsilon) return sym;

    const Index p = sym.rows();
    // Already feasible: the projection is the point itself.
    Eigen::LLT<Matrix> llt(sym - *epsilon * Matrix::Identity(p, p));
    if (llt.info() == Eigen::Success) return sym;

    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "project_psd_floor: eigendecomposition failed (p = " << p
            << ", max |a| = " << sym.cwiseAbs().maxCoeff() << ")";
        throw NumericError(msg.str());
    }
    const Vector clamped = es.eigenvalues().cwiseMax(*epsilon);
    Matrix out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
    mirror_upper(out);
    return out;
}

inline double min_eigenvalue(const Matrix& m)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("min_eigenvalue: eigensolver failed");
    return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Algorithm

/// Diagonal starting point with variances max(closed_form_diagonal(Theta_h), epsilon).
inline Tensor3 diagonal_start(const Tensor3& theta, EigenFloor epsilon)
{
    Tensor3 start = Tensor3::zeros_like(theta);
    for (std::size_t h = 0; h < theta.h_count(); ++h) {
        Vector w;
        if (theta.dim() >= 3) {
            w = closed_form_diagonal(theta[h]);
        } else {
            w = Vector::Constant(theta.dim(), 0.5 * theta[h](0, 1));
        }
        if (epsilon) w = w.cwiseMax(*epsilon);
        start[h].diagonal() = w;
    }
    return start;
}

/**
 * Adaptive proximal-proximal gradient descent for the joint estimator.
 *
 * Each iteration
 *   1. Omega   <- prox_sparse_group(Omega~ - a Psi - a grad l(Omega~), a lambda, a gamma)
 *   2. while l(Omega) > Q(Omega, a) with base Omega~: a <- tau a, redo 1
 *   3. Omega~  <- slice-wise project_psd_floor(Omega + a Psi, epsilon)
 *   4. Psi     <- Psi + (Omega - Omega~) / a
 *   5. stop when |F_new - F_old| / max(1, |F_old|) < tol, F = loss + penalty at Omega~.
 *
 * The step never grows between iterations. Starts from Psi = 0 and the
 * diagonal initializer unless `init` is given. Returns Omega~.
 */
inline FitResult fit(const VariationTensor& theta_in, const SolverConfig& cfg,
                     const std::optional<CovarianceTensor>& init = std::nullopt,
                     const IterationObserver& observer = {})
{
    const Tensor3& theta = theta_in.theta();
    const std::size_t hc = theta.h_count();
    const Index p = theta.dim();
    if (p < 2) throw DomainError("fit: p must be at least 2");
    cfg.validate(hc);

    const Vector lambdas = cfg.lambdas(hc);
    const double gamma = cfg.gamma;

    SolverState st;
    if (init) {
        if (!init->omega.same_shape(theta)) throw DomainError("fit: init shape differs from theta");
        st.omega_tilde = Tensor3::zeros_like(theta);
        for (std::size_t h = 0; h < hc; ++h) {
            st.omega_tilde[h] = project_psd_floor(init->omega[h], cfg.epsilon);
        }
    } else {
        st.omega_tilde = diagonal_start(theta, cfg.epsilon);
    }
    st.omega = st.omega_tilde;
    st.psi = Tensor3::zeros_like(theta);
    st.alpha = cfg.alpha0.value_or(1.0 / (8.0 * static_cast<double>(p)));

    FitResult result;
    Tensor3 grad = grad_loss(st.omega_tilde, theta);
    double base_loss = loss(st.omega_tilde, theta);
    double f_prev = base_loss + penalty(st.omega_tilde, lambdas, gamma);
    if (!std::isfinite(f_prev)) throw NumericError("fit: non-finite objective at the starting point");

    for (st.iter = 0; st.iter < cfg.max_iter; ++st.iter) {
        int backtracks = 0;
        double cand_loss = 0.0;
        double q = 0.0;
        for (;;) {
            Tensor3 point = st.omega_tilde;
            for (std::size_t h = 0; h < hc; ++h) {
                point[h] -= st.alpha * (st.psi[h] + grad[h]);
            }
            st.omega = prox_sparse_group(point, st.alpha * lambdas, st.alpha * gamma);
            cand_loss = loss(st.omega, theta);
            q = surrogate_q(st.omega, st.omega_tilde, grad, base_loss, st.alpha);
            if (!std::isfinite(cand_loss) || !std::isfinite(q)) {
                throw NumericError("fit: non-finite loss during backtracking at iteration " +
                                   std::to_string(st.iter));
            }
            if (cand_loss <= q) break;
            if (++backtracks > cfg.max_backtracks) {
                throw NumericError("fit: backtracking exhausted after " +
                                   std::to_string(cfg.max_backtracks) + " reductions at iteration " +
                                   std::to_string(st.iter));
            }
            st.alpha *= cfg.tau;
        }
        result.backtrack_count += backtracks;

        Tensor3 next_tilde = Tensor3::zeros_like(theta);
        for (std::size_t h = 0; h < hc; ++h) {
            next_tilde[h] = project_psd_floor(st.omega[h] + st.alpha * st.psi[h], cfg.epsilon);
        }
        for (std::size_t h = 0; h < hc; ++h) {
            st.psi[h] += (st.omega[h] - next_tilde[h]) / st.alpha;
        }
        st.omega_tilde = std::move(next_tilde);

        grad = grad_loss(st.omega_tilde, theta);
        base_loss = loss(st.omega_tilde, theta);
        const double f = base_loss + penalty(st.omega_tilde, lambdas, gamma);
        if (!std::isfinite(f)) {
            throw NumericError("fit: non-finite objective at iteration " + std::to_string(st.iter));
        }
        result.objective_trace.push_back(f);

        if (observer) {
            observer(IterationInfo{st.iter, st.alpha, cand_loss, q, backtracks, f}, st);
        }

        if (std::abs(f - f_prev) / std::max(1.0, std::abs(f_prev)) < cfg.tol) {
            result.converged = true;
            ++st.iter;
            break;
        }
        f_prev = f;
    }

    result.iterations = st.iter;
    result.final_alpha = st.alpha;
    result.estimate = CovarianceTensor(std::move(st.omega_tilde), cfg.epsilon);
    return result;
}

/// Penalized objective (loss + penalty) of an estimate.
inline double objective(const CovarianceTensor& omega, const VariationTensor& theta,
                        const SolverConfig& cfg)
{
    return loss(omega, theta) + penalty(omega, cfg);
}

} // namespace compcov
