#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace compcov;
using testing_support::random_spd_tensor;
using testing_support::random_symmetric;

namespace {

CovarianceTensor cov(std::vector<Matrix> s) { return CovarianceTensor(Tensor3(std::move(s))); }

CovarianceTensor off_diagonal_zeroed(const CovarianceTensor& t)
{
    CovarianceTensor out = t;
    for (auto& s : out.omega) s = Matrix(s.diagonal().asDiagonal());
    return out;
}

} // namespace

TEST(Correlation, DiagonalInputGivesIdentity)
{
    Matrix d = Vector(Eigen::Vector3d(4.0, 9.0, 0.5)).asDiagonal();
    EXPECT_EQ(to_correlation(cov({d}))[0], Matrix::Identity(3, 3));
}

TEST(Correlation, HandExample)
{
    Matrix m(2, 2);
    m << 4, 2, 2, 1;
    const Matrix r = to_correlation(cov({m}))[0];
    EXPECT_DOUBLE_EQ(r(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(r(1, 0), 1.0);
}

TEST(Correlation, IdempotentUnitDiagonalBounded)
{
    std::mt19937_64 rng(1);
    const CovarianceTensor t(random_spd_tensor(3, 7, rng, 0.1));
    const CovarianceTensor once = to_correlation(t);
    const CovarianceTensor twice = to_correlation(once);
    for (std::size_t h = 0; h < 3; ++h) {
        EXPECT_LT((once[h] - twice[h]).cwiseAbs().maxCoeff(), 1e-12);
        for (Index j = 0; j < 7; ++j) EXPECT_DOUBLE_EQ(once[h](j, j), 1.0);
        EXPECT_LE(once[h].cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    }
}

TEST(Correlation, RejectsNonpositiveDiagonal)
{
    Matrix m = Matrix::Identity(2, 2);
    m(1, 1) = 0.0;
    EXPECT_THROW(to_correlation(cov({m})), DomainError);
}

TEST(ErrorNorms, ZeroAtTruthAndIdentityDifference)
{
    const CovarianceTensor truth = model_truth({1, 8});
    const ErrorNorms same = error_norms(truth, truth);
    EXPECT_EQ(same.frob_per_p, 0.0);
    EXPECT_EQ(same.l1_per_p, 0.0);

    const Matrix z = Matrix::Zero(4, 4);
    const ErrorNorms one = error_norms(cov({Matrix::Identity(4, 4)}), cov({z}));
    EXPECT_DOUBLE_EQ(one.frob_per_p, 0.5);
    EXPECT_DOUBLE_EQ(one.l1_per_p, 0.25);
}

TEST(ErrorNorms, MatchesNaiveLoops)
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Matrix> a, b;
        for (int h = 0; h < 3; ++h) {
            a.push_back(random_symmetric(6, rng));
            b.push_back(random_symmetric(6, rng));
        }
        const ErrorNorms e = error_norms(cov(a), cov(b));
        double frob = 0.0, l1 = 0.0;
        for (int h = 0; h < 3; ++h) {
            double sq = 0.0, best = 0.0;
            for (Index k = 0; k < 6; ++k) {
                double col = 0.0;
                for (Index j = 0; j < 6; ++j) {
                    const double d = a[h](j, k) - b[h](j, k);
                    sq += d * d;
                    col += std::abs(d);
                }
                best = std::max(best, col);
            }
            frob += std::sqrt(sq) / 6.0 / 3.0;
            l1 += best / 6.0 / 3.0;
        }
        EXPECT_NEAR(e.frob_per_p, frob, 1e-12);
        EXPECT_NEAR(e.l1_per_p, l1, 1e-12);
    }
}

TEST(ErrorNorms, PermutationInvariant)
{
    std::mt19937_64 rng(3);
    const Matrix a = random_symmetric(6, rng), b = random_symmetric(6, rng);
    std::vector<int> idx(6);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    for (int i = 0; i < 6; ++i) perm.indices()(i) = idx[static_cast<std::size_t>(i)];
    const Matrix pa = perm * a * perm.transpose(), pb = perm * b * perm.transpose();
    const ErrorNorms e1 = error_norms(cov({a}), cov({b}));
    const ErrorNorms e2 = error_norms(cov({pa}), cov({pb}));
    EXPECT_NEAR(e1.frob_per_p, e2.frob_per_p, 1e-12);
    EXPECT_NEAR(e1.l1_per_p, e2.l1_per_p, 1e-12);
}

TEST(ErrorNorms, ShapeMismatchThrows)
{
    EXPECT_THROW(error_norms(cov({Matrix::Identity(3, 3)}), cov({Matrix::Identity(4, 4)})), DomainError);
}

TEST(SupportRates, TruthAndEmptyEstimates)
{
    for (int model : {1, 2, 3}) {
        const CovarianceTensor truth = model_truth({model, 12});
        const SupportRates same = tpr_tnr(truth, truth);
        EXPECT_EQ(same.tpr, 1.0);
        EXPECT_EQ(same.tnr, 1.0);
        const SupportRates empty = tpr_tnr(off_diagonal_zeroed(truth), truth);
        EXPECT_EQ(empty.tpr, 0.0);
        EXPECT_EQ(empty.tnr, 1.0);
    }
}

TEST(SupportRates, HalfTheModelOneEdges)
{
    // 13 true edges per slice: keep every edge of slices 1-2 and none of slices 3-4.
    const CovarianceTensor truth = model_truth({1, 8});
    CovarianceTensor est = truth;
    for (std::size_t h = 2; h < 4; ++h) est[h] = Matrix(truth[h].diagonal().asDiagonal());
    const SupportRates r = tpr_tnr(est, truth);
    EXPECT_DOUBLE_EQ(r.tpr, 0.5);
    EXPECT_EQ(r.tnr, 1.0);
}

TEST(SupportRates, HalfTheEdgesOfOneSlice)
{
    // Two of the four true edges of a 4-cycle removed.
    Matrix t = Matrix::Identity(4, 4);
    t(0, 1) = t(1, 0) = 0.3;
    t(1, 2) = t(2, 1) = 0.3;
    t(2, 3) = t(3, 2) = 0.3;
    t(0, 3) = t(3, 0) = 0.3;
    Matrix e = t;
    e(0, 1) = e(1, 0) = 0.0;
    e(2, 3) = e(3, 2) = 0.0;
    const SupportRates r = tpr_tnr(cov({e}), cov({t}));
    EXPECT_DOUBLE_EQ(r.tpr, 0.5);
    EXPECT_DOUBLE_EQ(r.tnr, 1.0);
}

TEST(SupportRates, ScaleInvariantAndExclusions)
{
    const CovarianceTensor truth = model_truth({2, 8});
    CovarianceTensor est = truth;
    est.omega *= 3.7;
    const SupportRates r = tpr_tnr(est, truth);
    EXPECT_EQ(r.tpr, 1.0);
    EXPECT_EQ(r.tnr, 1.0);

    const CovarianceTensor diag = cov({Matrix::Identity(3, 3)});
    const SupportRates ex = tpr_tnr(diag, diag);
    ASSERT_EQ(ex.tpr_excluded.size(), 1u);
    EXPECT_TRUE(std::isnan(ex.tpr));
    EXPECT_EQ(ex.tnr, 1.0);
}

TEST(Oracle, SoftThresholdLimits)
{
    std::mt19937_64 rng(4);
    const Matrix s = random_symmetric(5, rng);
    EXPECT_EQ(soft_threshold_offdiagonal(s, 0.0), s);
    const Matrix big = soft_threshold_offdiagonal(s, 1e9);
    EXPECT_EQ(big, Matrix(s.diagonal().asDiagonal()));
    const double t = 0.4;
    const Matrix m = soft_threshold_offdiagonal(s, t);
    for (Index j = 0; j < 5; ++j) {
        for (Index k = 0; k < 5; ++k) {
            if (j == k) continue;
            if (std::abs(s(j, k)) <= t) {
                EXPECT_EQ(m(j, k), 0.0);
            } else {
                EXPECT_NEAR(std::abs(s(j, k)) - std::abs(m(j, k)), t, 1e-15);
            }
        }
    }
}

TEST(Oracle, BaselineSelectsFromGrid)
{
    const CovarianceTensor truth = model_truth({1, 8});
    const auto train = simulate_dataset(truth, std::vector<Index>(4, 200), 1);
    const auto valid = simulate_dataset(truth, std::vector<Index>(4, 200), 2);
    const OracleResult zero = oracle_baseline(train.log_basis, valid.log_basis, {0.0});
    for (std::size_t h = 0; h < 4; ++h) {
        EXPECT_LT((zero.estimate[h] - sample_covariance(train.log_basis[h])).cwiseAbs().maxCoeff(), 1e-15);
    }
    const OracleResult tuned = oracle_baseline(train.log_basis, valid.log_basis);
    ASSERT_EQ(tuned.thresholds.size(), 4u);
    EXPECT_GT(tpr_tnr(tuned.estimate, truth).tnr, tpr_tnr(zero.estimate, truth).tnr);
    EXPECT_STREQ(OracleResult::kName, "oracle-soft");
}
