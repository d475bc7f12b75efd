#pragma once

// Slow, high-precision reference solver used only by the tests:
//   minimize 0.5 z'Pz + q'z  subject to  F_i(z) = F_i0 + sum_a z_a F_ia  positive definite
// by a log-barrier path with damped Newton steps.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Lmi {
    MatrixXd f0;
    /// One coefficient matrix per variable (zero matrices allowed).
    std::vector<MatrixXd> fa;
};

struct QuadraticProgram {
    MatrixXd p;
    VectorXd q;
    std::vector<Lmi> constraints;
};

inline MatrixXd lmi_value(const Lmi& c, const VectorXd& z)
{
    MatrixXd s = c.f0;
    for (Eigen::Index a = 0; a < z.size(); ++a) {
        if (c.fa[static_cast<std::size_t>(a)].size() != 0) s += z(a) * c.fa[static_cast<std::size_t>(a)];
    }
    return s;
}

/// -sum log det F_i(z), or +inf outside the interior.
inline double barrier_value(const QuadraticProgram& qp, const VectorXd& z)
{
    double v = 0.0;
    for (const auto& c : qp.constraints) {
        Eigen::LLT<MatrixXd> llt(lmi_value(c, z));
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        const VectorXd d = MatrixXd(llt.matrixL()).diagonal();
        if ((d.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
        v -= 2.0 * d.array().log().sum();
    }
    return v;
}

inline double quad_value(const QuadraticProgram& qp, const VectorXd& z)
{
    return 0.5 * z.dot(qp.p * z) + qp.q.dot(z);
}

inline std::size_t barrier_degree(const QuadraticProgram& qp)
{
    std::size_t m = 0;
    for (const auto& c : qp.constraints) m += static_cast<std::size_t>(c.f0.rows());
    return m;
}

/// Returns the minimizer; z0 must be strictly feasible. Duality gap at exit <= gap.
inline VectorXd solve(const QuadraticProgram& qp, VectorXd z, double gap = 1e-11)
{
    const auto n = z.size();
    if (!std::isfinite(barrier_value(qp, z))) throw std::invalid_argument("barrier oracle: infeasible start");
    const double m = static_cast<double>(barrier_degree(qp));
    double t = 1.0;
    for (int outer = 0; outer < 200; ++outer) {
        for (int it = 0; it < 200; ++it) {
            VectorXd g = t * (qp.p * z + qp.q);
            MatrixXd h = t * qp.p;
            for (const auto& c : qp.constraints) {
                const MatrixXd sinv = lmi_value(c, z).inverse();
                std::vector<MatrixXd> ga(static_cast<std::size_t>(n));
                for (Eigen::Index a = 0; a < n; ++a) {
                    const auto& fa = c.fa[static_cast<std::size_t>(a)];
                    if (fa.size() == 0) continue;
                    ga[static_cast<std::size_t>(a)] = sinv * fa;
                    g(a) -= ga[static_cast<std::size_t>(a)].trace();
                }
                for (Eigen::Index a = 0; a < n; ++a) {
                    if (ga[static_cast<std::size_t>(a)].size() == 0) continue;
                    for (Eigen::Index b = a; b < n; ++b) {
                        if (ga[static_cast<std::size_t>(b)].size() == 0) continue;
                        const double v =
                            (ga[static_cast<std::size_t>(a)].array() *
                             ga[static_cast<std::size_t>(b)].transpose().array())
                                .sum();
                        h(a, b) += v;
                        if (b != a) h(b, a) += v;
                    }
                }
            }
            const VectorXd dz = -h.ldlt().solve(g);
            const double decrement = -g.dot(dz);
            if (decrement < 1e-14) break;
            const double f0 = t * quad_value(qp, z) + barrier_value(qp, z);
            double s = 1.0;
            for (int ls = 0; ls < 80; ++ls, s *= 0.5) {
                const VectorXd zn = z + s * dz;
                const double b = barrier_value(qp, zn);
                if (std::isfinite(b) && t * quad_value(qp, zn) + b <= f0 - 0.25 * s * decrement) {
                    z = zn;
                    break;
                }
            }
        }
        if (m / t < gap) break;
        t *= 8.0;
    }
    return z;
}

} // namespace oracle
