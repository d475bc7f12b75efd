#pragma once

// Reference problems expressed for the barrier solver. Each builder is an
// independent formulation of the quantity under test, with no calls into
// the library.

#include "barrier_oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

inline MatrixXd unit_sym(Eigen::Index n, Eigen::Index j, Eigen::Index k)
{
    MatrixXd e = MatrixXd::Zero(n, n);
    e(j, k) = 1.0;
    e(k, j) = 1.0;
    return e;
}

inline Lmi positive_scalar(Eigen::Index n_vars, Eigen::Index var)
{
    Lmi c{MatrixXd::Zero(1, 1), std::vector<MatrixXd>(static_cast<std::size_t>(n_vars))};
    c.fa[static_cast<std::size_t>(var)] = MatrixXd::Ones(1, 1);
    return c;
}

/**
 * argmin_x 0.5 ||x - y||^2 + sum_h a_h |x_h| + b ||x||_2, with all a_h, b > 0.
 * Variables (x+, x-, t) with x = x+ - x-, x+/- >= 0 and ||x|| <= t written
 * as the arrow LMI [[t I, x], [x', t]] >= 0.
 */
inline VectorXd prox_reference(const VectorXd& y, const VectorXd& a, double b)
{
    const Eigen::Index h = y.size();
    const Eigen::Index n = 2 * h + 1;
    if ((a.array() <= 0.0).any() || !(b > 0.0)) throw std::invalid_argument("prox_reference: a, b must be > 0");

    QuadraticProgram qp;
    qp.p = MatrixXd::Zero(n, n);
    qp.p.topLeftCorner(h, h).setIdentity();
    qp.p.block(h, h, h, h).setIdentity();
    qp.p.block(0, h, h, h) = -MatrixXd::Identity(h, h);
    qp.p.block(h, 0, h, h) = -MatrixXd::Identity(h, h);
    qp.q = VectorXd::Zero(n);
    qp.q.head(h) = a - y;
    qp.q.segment(h, h) = a + y;
    qp.q(2 * h) = b;

    for (Eigen::Index v = 0; v < 2 * h; ++v) qp.constraints.push_back(positive_scalar(n, v));
    Lmi arrow{MatrixXd::Zero(h + 1, h + 1), std::vector<MatrixXd>(static_cast<std::size_t>(n))};
    for (Eigen::Index i = 0; i < h; ++i) {
        arrow.fa[static_cast<std::size_t>(i)] = unit_sym(h + 1, i, h);
        arrow.fa[static_cast<std::size_t>(h + i)] = -unit_sym(h + 1, i, h);
    }
    arrow.fa[static_cast<std::size_t>(2 * h)] = MatrixXd::Identity(h + 1, h + 1);
    qp.constraints.push_back(std::move(arrow));

    VectorXd z = VectorXd::Ones(n);
    const VectorXd sol = solve(qp, z, 1e-13);
    return sol.head(h) - sol.segment(h, h);
}

/// argmin ||M - A||_F over symmetric M with M - eps I positive semidefinite.
inline MatrixXd psd_reference(const MatrixXd& a_in, double eps)
{
    const Eigen::Index p = a_in.rows();
    const MatrixXd a = 0.5 * (a_in + a_in.transpose());
    std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = j; k < p; ++k) idx.emplace_back(j, k);
    }
    const auto n = static_cast<Eigen::Index>(idx.size());

    QuadraticProgram qp;
    qp.p = MatrixXd::Zero(n, n);
    qp.q = VectorXd::Zero(n);
    Lmi c{-eps * MatrixXd::Identity(p, p), std::vector<MatrixXd>(static_cast<std::size_t>(n))};
    VectorXd z = VectorXd::Zero(n);
    for (Eigen::Index v = 0; v < n; ++v) {
        const auto [j, k] = idx[static_cast<std::size_t>(v)];
        const double w = j == k ? 1.0 : 2.0;
        qp.p(v, v) = w;
        qp.q(v) = -w * a(j, k);
        c.fa[static_cast<std::size_t>(v)] = unit_sym(p, j, k);
        if (j == k) z(v) = eps + 1.0 + a.cwiseAbs().maxCoeff() * static_cast<double>(p);
    }
    qp.constraints.push_back(std::move(c));

    const VectorXd sol = solve(qp, z, 1e-13);
    MatrixXd m(p, p);
    for (Eigen::Index v = 0; v < n; ++v) {
        const auto [j, k] = idx[static_cast<std::size_t>(v)];
        m(j, k) = m(k, j) = sol(v);
    }
    return m;
}

struct SinglePopulationOptimum {
    MatrixXd omega;
    double objective = 0.0;
};

/**
 * Global optimum of the single-population (H = 1) problem
 *   sum_{j != k} (Theta_jk - w_j - w_k + 2 O_jk)^2 + 2 (lambda + gamma) sum_{j < k} |O_jk|
 *   s.t. O - eps I positive semidefinite,
 * which is the joint objective with one population (ordered pairs, unit fibers).
 */
inline SinglePopulationOptimum single_population_reference(const MatrixXd& theta, double lambda, double gamma,
                                                           double eps)
{
    const Eigen::Index p = theta.rows();
    const double weight = 2.0 * (lambda + gamma);
    if (!(weight > 0.0)) throw std::invalid_argument("single_population_reference: need lambda + gamma > 0");

    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = j + 1; k < p; ++k) pairs.emplace_back(j, k);
    }
    const auto m = static_cast<Eigen::Index>(pairs.size());
    const Eigen::Index n = p + 2 * m;

    // Residuals of the upper triangle: r = c + B z; each appears twice in the loss.
    MatrixXd bmat = MatrixXd::Zero(m, n);
    VectorXd cvec(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto [j, k] = pairs[static_cast<std::size_t>(r)];
        cvec(r) = theta(j, k);
        bmat(r, j) = -1.0;
        bmat(r, k) = -1.0;
        bmat(r, p + r) = 2.0;
        bmat(r, p + m + r) = -2.0;
    }

    QuadraticProgram qp;
    qp.p = 4.0 * bmat.transpose() * bmat;
    qp.q = 4.0 * bmat.transpose() * cvec;
    qp.q.tail(2 * m).array() += weight;

    for (Eigen::Index v = p; v < n; ++v) qp.constraints.push_back(positive_scalar(n, v));
    Lmi c{-eps * MatrixXd::Identity(p, p), std::vector<MatrixXd>(static_cast<std::size_t>(n))};
    for (Eigen::Index j = 0; j < p; ++j) {
        MatrixXd e = MatrixXd::Zero(p, p);
        e(j, j) = 1.0;
        c.fa[static_cast<std::size_t>(j)] = e;
    }
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto [j, k] = pairs[static_cast<std::size_t>(r)];
        c.fa[static_cast<std::size_t>(p + r)] = unit_sym(p, j, k);
        c.fa[static_cast<std::size_t>(p + m + r)] = -unit_sym(p, j, k);
    }
    qp.constraints.push_back(std::move(c));

    VectorXd z = VectorXd::Ones(n);
    z.head(p).setConstant(eps + 1.0 + theta.cwiseAbs().maxCoeff() * static_cast<double>(p));
    const VectorXd sol = solve(qp, z, 1e-12);

    SinglePopulationOptimum out;
    out.omega = MatrixXd::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) out.omega(j, j) = sol(j);
    double l1 = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto [j, k] = pairs[static_cast<std::size_t>(r)];
        out.omega(j, k) = out.omega(k, j) = sol(p + r) - sol(p + m + r);
        l1 += std::abs(out.omega(j, k));
    }
    const VectorXd resid = cvec + bmat * sol;
    out.objective = 2.0 * resid.squaredNorm() + weight * l1;
    return out;
}

} // namespace oracle
