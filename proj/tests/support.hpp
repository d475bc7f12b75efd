#pragma once

#include <compcov/compcov.hpp>

#include <random>
#include <vector>

namespace testing_support {

using compcov::CovarianceTensor;
using compcov::Index;
using compcov::Matrix;
using compcov::Tensor3;
using compcov::VariationTensor;

inline Matrix random_symmetric(Index p, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> z(0.0, scale);
    Matrix a(p, p);
    for (Index j = 0; j < p; ++j) {
        for (Index k = 0; k <= j; ++k) a(j, k) = a(k, j) = z(rng);
    }
    return a;
}

/// Random SPD matrix with smallest eigenvalue at least `floor`.
inline Matrix random_spd(Index p, std::mt19937_64& rng, double floor = 0.5)
{
    const Matrix b = random_symmetric(p, rng);
    return b * b.transpose() / static_cast<double>(p) + floor * Matrix::Identity(p, p);
}

inline Tensor3 random_spd_tensor(std::size_t h_count, Index p, std::mt19937_64& rng, double floor = 0.5)
{
    std::vector<Matrix> s;
    for (std::size_t h = 0; h < h_count; ++h) s.push_back(random_spd(p, rng, floor));
    return Tensor3(std::move(s));
}

/// Theta_h = w 1' + 1 w' - 2 Omega_h, with the diagonal forced to exact zero.
inline VariationTensor theta_from(const Tensor3& omega)
{
    std::vector<Matrix> s;
    for (const auto& m : omega) s.push_back(compcov::variation_from_covariance(m));
    return VariationTensor(std::move(s));
}

/// Sample variation tensor of `n` draws per population from the given covariances.
inline VariationTensor sampled_theta(const Tensor3& omega, Index n, std::uint64_t seed)
{
    const std::vector<Index> sizes(omega.h_count(), n);
    const auto sim = compcov::simulate_dataset(CovarianceTensor(omega), sizes, seed);
    return compcov::variation_tensor(sim.data);
}

} // namespace testing_support
