#pragma once

#include <compcov/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace compcov {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/**
 * Three-way array of shape H x p x p stored as H square slices.
 *
 * Slice h is the p x p matrix of population h. The fiber at (j, k) is the
 * length-H vector holding entry (j, k) of every slice.
 */
class Tensor3 {
public:
    Tensor3() = default;

    Tensor3(std::size_t h_count, Index p)
        : slices_(h_count, Matrix::Zero(p, p)), p_(p)
    {
    }

    explicit Tensor3(std::vector<Matrix> slices)
        : slices_(std::move(slices))
    {
        if (slices_.empty()) {
            throw DomainError("Tensor3: at least one slice is required");
        }
        p_ = slices_.front().rows();
        for (const auto& s : slices_) {
            if (s.rows() != p_ || s.cols() != p_) {
                throw DomainError("Tensor3: slices must be square and share one dimension");
            }
        }
    }

    static Tensor3 zeros_like(const Tensor3& other)
    {
        return Tensor3(other.h_count(), other.dim());
    }

    std::size_t h_count() const noexcept { return slices_.size(); }
    Index dim() const noexcept { return p_; }

    Matrix& operator[](std::size_t h) { return slices_[h]; }
    const Matrix& operator[](std::size_t h) const { return slices_[h]; }

    auto begin() noexcept { return slices_.begin(); }
    auto end() noexcept { return slices_.end(); }
    auto begin() const noexcept { return slices_.begin(); }
    auto end() const noexcept { return slices_.end(); }

    const std::vector<Matrix>& slices() const noexcept { return slices_; }

    Vector fiber(Index j, Index k) const
    {
        Vector f(static_cast<Index>(h_count()));
        for (std::size_t h = 0; h < h_count(); ++h) {
            f(static_cast<Index>(h)) = slices_[h](j, k);
        }
        return f;
    }

    template <class Derived>
    void set_fiber(Index j, Index k, const Eigen::MatrixBase<Derived>& f)
    {
        for (std::size_t h = 0; h < h_count(); ++h) {
            slices_[h](j, k) = f(static_cast<Index>(h));
        }
    }

    bool same_shape(const Tensor3& other) const noexcept
    {
        return h_count() == other.h_count() && dim() == other.dim();
    }

    Tensor3& operator+=(const Tensor3& rhs)
    {
        require_same_shape(rhs, "+=");
        for (std::size_t h = 0; h < h_count(); ++h) slices_[h] += rhs.slices_[h];
        return *this;
    }

    Tensor3& operator-=(const Tensor3& rhs)
    {
        require_same_shape(rhs, "-=");
        for (std::size_t h = 0; h < h_count(); ++h) slices_[h] -= rhs.slices_[h];
        return *this;
    }

    Tensor3& operator*=(double s)
    {
        for (auto& m : slices_) m *= s;
        return *this;
    }

    friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
    friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
    friend Tensor3 operator*(Tensor3 a, double s) { return a *= s; }
    friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

    /// Frobenius inner product over all H * p * p entries.
    double dot(const Tensor3& other) const
    {
        require_same_shape(other, "dot");
        double acc = 0.0;
        for (std::size_t h = 0; h < h_count(); ++h) {
            acc += slices_[h].cwiseProduct(other.slices_[h]).sum();
        }
        return acc;
    }

    double squared_norm() const
    {
        double acc = 0.0;
        for (const auto& m : slices_) acc += m.squaredNorm();
        return acc;
    }

    double max_abs() const
    {
        double acc = 0.0;
        for (const auto& m : slices_) acc = std::max(acc, m.cwiseAbs().maxCoeff());
        return acc;
    }

    bool all_finite() const
    {
        return std::all_of(slices_.begin(), slices_.end(),
                           [](const Matrix& m) { return m.allFinite(); });
    }

    void require_same_shape(const Tensor3& other, const char* what) const
    {
        if (!same_shape(other)) {
            throw DomainError(std::string("Tensor3 shape mismatch in ") + what);
        }
    }

private:
    std::vector<Matrix> slices_;
    Index p_ = 0;
};

/// Copy the upper triangle onto the lower one so that m == m^T bit-exactly.
inline void mirror_upper(Matrix& m)
{
    for (Index j = 0; j < m.rows(); ++j) {
        for (Index k = j + 1; k < m.cols(); ++k) m(k, j) = m(j, k);
    }
}

/**
 * Stacked sample variation matrices, one per population.
 *
 * Every slice is exactly symmetric with a zero diagonal and nonnegative
 * entries; the constructor rejects anything else.
 */
class VariationTensor {
public:
    explicit VariationTensor(Tensor3 theta) : theta_(std::move(theta))
    {
        for (std::size_t h = 0; h < theta_.h_count(); ++h) {
            const Matrix& s = theta_[h];
            for (Index j = 0; j < s.rows(); ++j) {
                if (s(j, j) != 0.0) {
                    throw InvalidInput("VariationTensor: nonzero diagonal in slice " +
                                       std::to_string(h));
                }
                for (Index k = 0; k < s.cols(); ++k) {
                    if (!std::isfinite(s(j, k)) || s(j, k) < 0.0) {
                        throw InvalidInput("VariationTensor: entries must be finite and >= 0");
                    }
                    if (s(j, k) != s(k, j)) {
                        throw InvalidInput("VariationTensor: slice " + std::to_string(h) +
                                           " is not symmetric");
                    }
                }
            }
        }
    }

    explicit VariationTensor(std::vector<Matrix> slices)
        : VariationTensor(Tensor3(std::move(slices)))
    {
    }

    const Tensor3& theta() const noexcept { return theta_; }
    const Matrix& operator[](std::size_t h) const { return theta_[h]; }
    std::size_t h_count() const noexcept { return theta_.h_count(); }
    Index dim() const noexcept { return theta_.dim(); }

private:
    Tensor3 theta_;
};

/**
 * H x p x p covariance tensor (estimates and ground truths).
 *
 * `feasible_floor` is set when the tensor was produced under an eigenvalue
 * floor epsilon; every slice then has smallest eigenvalue >= epsilon - 1e-8.
 */
struct CovarianceTensor {
    Tensor3 omega;
    std::optional<double> feasible_floor;

    CovarianceTensor() = default;
    explicit CovarianceTensor(Tensor3 t, std::optional<double> floor = std::nullopt)
        : omega(std::move(t)), feasible_floor(floor)
    {
    }

    std::size_t h_count() const noexcept { return omega.h_count(); }
    Index dim() const noexcept { return omega.dim(); }
    const Matrix& operator[](std::size_t h) const { return omega[h]; }
    Matrix& operator[](std::size_t h) { return omega[h]; }

    /// diag(Omega_(h)) as a vector.
    Vector diagonal(std::size_t h) const { return omega[h].diagonal(); }
};

} // namespace compcov
