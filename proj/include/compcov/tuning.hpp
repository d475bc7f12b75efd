#pragma once

#include <compcov/compositional.hpp>
#include <compcov/error.hpp>
#include <compcov/metrics.hpp>
#include <compcov/parallel.hpp>
#include <compcov/solver.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace compcov {

/// Candidate (lambda, gamma) values and the fold layout for cross-validation.
struct TuningGrid {
    /// Non-increasing, strictly positive unless `allow_zero_lambda`.
    std::vector<double> lambdas;
    /// Non-increasing, nonnegative.
    std::vector<double> gammas;
    int folds = 10;
    std::uint64_t seed = 1;
    /// Permits lambda = 0 (the pure group-lasso variant).
    bool allow_zero_lambda = false;

    void validate() const
    {
        if (lambdas.empty() || gammas.empty()) throw DomainError("TuningGrid: empty grid");
        for (double l : lambdas) {
            if (!std::isfinite(l) || l < 0.0 || (l == 0.0 && !allow_zero_lambda)) {
                throw DomainError("TuningGrid: lambdas must be > 0");
            }
        }
        for (double g : gammas) {
            if (!std::isfinite(g) || g < 0.0) throw DomainError("TuningGrid: gammas must be >= 0");
        }
        if (!std::is_sorted(lambdas.rbegin(), lambdas.rend()) ||
            !std::is_sorted(gammas.rbegin(), gammas.rend())) {
            throw DomainError("TuningGrid: lambdas and gammas must be in descending order");
        }
        if (folds < 2) throw DomainError("TuningGrid: need at least 2 folds");
    }
};

/// `count` values from hi down to hi * ratio, evenly spaced on the log scale.
inline std::vector<double> log_spaced_descending(double hi, double ratio, int count)
{
    if (!(hi > 0.0) || !(ratio > 0.0) || count < 1) {
        throw DomainError("log_spaced_descending: need hi > 0, ratio > 0, count >= 1");
    }
    std::vector<double> v;
    for (int i = 0; i < count; ++i) {
        const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        v.push_back(hi * std::pow(ratio, f));
    }
    return v;
}

/// max_{h, j != k} |4 Theta_hjk|: off-diagonal gradient scale at the diagonal start.
inline double lambda_max(const VariationTensor& theta)
{
    double m = 0.0;
    for (std::size_t h = 0; h < theta.h_count(); ++h) m = std::max(m, 4.0 * theta[h].maxCoeff());
    return m;
}

/// max_{j != k} ||4 Theta_.jk||_2: the fiber analogue of lambda_max.
inline double gamma_max(const VariationTensor& theta)
{
    double m = 0.0;
    const Index p = theta.dim();
    for (Index j = 0; j < p; ++j) {
        for (Index k = j + 1; k < p; ++k) m = std::max(m, 4.0 * theta.theta().fiber(j, k).norm());
    }
    return m;
}

/// Log-spaced grid over [1e-3 max, max] for both penalties.
inline TuningGrid default_grid(const VariationTensor& theta, int n_lambda = 10, int n_gamma = 10,
                               int folds = 10, std::uint64_t seed = 1)
{
    TuningGrid g;
    const double lm = lambda_max(theta);
    const double gm = gamma_max(theta);
    if (!(lm > 0.0)) throw DomainError("default_grid: variation tensor is identically zero");
    g.lambdas = log_spaced_descending(lm, 1e-3, n_lambda);
    g.gammas = log_spaced_descending(gm, 1e-3, n_gamma);
    g.folds = folds;
    g.seed = seed;
    return g;
}

/**
 * Fold id of every sample, per population. Within population h a seeded
 * uniform permutation is cut into v contiguous, near-equal parts.
 */
inline std::vector<std::vector<int>> make_folds(std::span<const Index> sizes, int v, std::uint64_t seed)
{
    if (v < 2) throw DomainError("make_folds: need at least 2 folds");
    for (Index n : sizes) {
        if (n < v) {
            throw DomainError("make_folds: " + std::to_string(v) + " folds exceed population size " +
                              std::to_string(n));
        }
    }
    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> folds;
    for (Index n : sizes) {
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> fold(static_cast<std::size_t>(n));
        for (Index pos = 0; pos < n; ++pos) {
            fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] =
                static_cast<int>(pos * v / n);
        }
        folds.push_back(std::move(fold));
    }
    return folds;
}

namespace detail {

inline Matrix select_rows(const Matrix& x, const std::vector<Index>& rows)
{
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
    return out;
}

/// Rethrow a library error with a prefix, keeping its category.
[[noreturn]] inline void rethrow_annotated(const std::string& where)
{
    try {
        throw;
    } catch (const DomainError& e) {
        throw DomainError(where + ": " + e.what());
    } catch (const InvalidInput& e) {
        throw InvalidInput(where + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
    }
}

/// Index of the smallest score; ties go to larger gamma, then larger lambda.
inline std::pair<Index, Index> argmin_sparsest(const Matrix& scores, const std::vector<double>& lambdas,
                                               const std::vector<double>& gammas)
{
    Index bi = 0, bj = 0;
    for (Index i = 0; i < scores.rows(); ++i) {
        for (Index j = 0; j < scores.cols(); ++j) {
            const double s = scores(i, j);
            const double b = scores(bi, bj);
            const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
            const auto ubi = static_cast<std::size_t>(bi), ubj = static_cast<std::size_t>(bj);
            const bool better =
                s < b || (s == b && (gammas[uj] > gammas[ubj] ||
                                     (gammas[uj] == gammas[ubj] && lambdas[ui] > lambdas[ubi])));
            if (better) {
                bi = i;
                bj = j;
            }
        }
    }
    return {bi, bj};
}

} // namespace detail

struct CvReport {
    std::vector<double> lambdas;
    std::vector<double> gammas;
    /// scores(i, j): held-out criterion summed over folds for (lambdas[i], gammas[j]).
    Matrix scores;
    /// Per-fold contributions, same layout as `scores`.
    std::vector<Matrix> fold_scores;
    /// Per-fold solver iteration counts, same layout as `scores`.
    std::vector<Eigen::MatrixXi> fold_iterations;
    int nonconverged_fits = 0;
    Index lambda_index = 0;
    Index gamma_index = 0;
    double lambda = 0.0;
    double gamma = 0.0;
};

/**
 * V-fold cross-validation over the (lambda, gamma) grid. For each cell and
 * fold the estimator is fit on variation matrices computed from all samples
 * outside the fold and scored by
 *   sum_h ||Theta_h,v - w~ 1' - 1 w~' + 2 Omega~_h||_F^2
 * against the fold's own variation matrices. Within a fold and gamma, fits
 * run down the lambda grid, each warm-started from the previous estimate.
 */
inline CvReport cv_select(const CompositionDataset& data, const TuningGrid& grid, const SolverConfig& cfg)
{
    grid.validate();
    const auto sizes = data.sizes();
    const auto folds = make_folds(sizes, grid.folds, grid.seed);
    const std::size_t hc = data.h_count();
    const auto v_count = static_cast<std::size_t>(grid.folds);

    std::vector<VariationTensor> train;
    std::vector<VariationTensor> held_out;
    for (std::size_t v = 0; v < v_count; ++v) {
        std::vector<Matrix> tr(hc), ho(hc);
        for (std::size_t h = 0; h < hc; ++h) {
            std::vector<Index> in, out;
            for (std::size_t i = 0; i < folds[h].size(); ++i) {
                (folds[h][i] == static_cast<int>(v) ? out : in).push_back(static_cast<Index>(i));
            }
            tr[h] = variation_matrix(detail::select_rows(data.population(h), in));
            ho[h] = variation_matrix(detail::select_rows(data.population(h), out));
        }
        train.emplace_back(std::move(tr));
        held_out.emplace_back(std::move(ho));
    }

    const auto nl = static_cast<Index>(grid.lambdas.size());
    const auto ng = static_cast<Index>(grid.gammas.size());
    CvReport rep;
    rep.lambdas = grid.lambdas;
    rep.gammas = grid.gammas;
    rep.fold_scores.assign(v_count, Matrix::Zero(nl, ng));
    rep.fold_iterations.assign(v_count, Eigen::MatrixXi::Zero(nl, ng));
    std::vector<char> converged(v_count * static_cast<std::size_t>(nl * ng), 1);

    parallel_for(v_count * static_cast<std::size_t>(ng), [&](std::size_t item) {
        const std::size_t v = item / static_cast<std::size_t>(ng);
        const auto j = static_cast<Index>(item % static_cast<std::size_t>(ng));
        std::optional<CovarianceTensor> warm;
        for (Index i = 0; i < nl; ++i) {
            SolverConfig c = cfg;
            c.lambda = grid.lambdas[static_cast<std::size_t>(i)];
            c.gamma = grid.gammas[static_cast<std::size_t>(j)];
            c.per_population_lambda.reset();
            try {
                FitResult r = fit(train[v], c, warm);
                rep.fold_scores[v](i, j) = loss(r.estimate, held_out[v]);
                rep.fold_iterations[v](i, j) = r.iterations;
                converged[v * static_cast<std::size_t>(nl * ng) + static_cast<std::size_t>(i * ng + j)] =
                    r.converged ? 1 : 0;
                warm = std::move(r.estimate);
            } catch (const Error&) {
                detail::rethrow_annotated("cv_select (lambda=" + std::to_string(c.lambda) +
                                          ", gamma=" + std::to_string(c.gamma) +
                                          ", fold=" + std::to_string(v) + ")");
            }
        }
    });

    rep.scores = Matrix::Zero(nl, ng);
    for (const auto& fs : rep.fold_scores) rep.scores += fs;
    rep.nonconverged_fits = static_cast<int>(std::count(converged.begin(), converged.end(), 0));
    if (!rep.scores.allFinite()) throw NumericError("cv_select: non-finite CV score");

    const auto [bi, bj] = detail::argmin_sparsest(rep.scores, rep.lambdas, rep.gammas);
    rep.lambda_index = bi;
    rep.gamma_index = bj;
    rep.lambda = rep.lambdas[static_cast<std::size_t>(bi)];
    rep.gamma = rep.gammas[static_cast<std::size_t>(bj)];
    return rep;
}

// ---------------------------------------------------------------------------
// Validation-set tuning (simulation studies draw an independent validation set).

struct ValidationReport {
    std::vector<double> lambdas;
    std::vector<double> gammas;
    Matrix scores;
    double lambda = 0.0;
    double gamma = 0.0;
    /// Fit at the selected cell.
    FitResult fit;
    int nonconverged_fits = 0;
};
/// Fit every grid cell on `train` (warm-started down each lambda column) and keep the one
/// whose estimate best matches `validation`.
/// Fit every grid cell on `train` and keep the one whose estimate best matches `validation`.
inline ValidationReport validation_select(const VariationTensor& train, const VariationTensor& validation,
                                          const std::vector<double>& lambdas,
                                          const std::vector<double>& gammas, const SolverConfig& cfg)
{
    if (lambdas.empty() || gammas.empty()) throw DomainError("validation_select: empty grid");
    const auto nl = static_cast<Index>(lambdas.size());
    const auto ng = static_cast<Index>(gammas.size());
    std::vector<FitResult> fits(static_cast<std::size_t>(nl * ng));
    ValidationReport rep;
    rep.lambdas = lambdas;
    rep.gammas = gammas;
    rep.scores = Matrix::Zero(nl, ng);

    parallel_for(static_cast<std::size_t>(ng), [&](std::size_t jj) {
        const auto j = static_cast<Index>(jj);
        std::optional<CovarianceTensor> warm;
        for (Index i = 0; i < nl; ++i) {
            const auto item = static_cast<std::size_t>(i * ng + j);
            SolverConfig c = cfg;
            c.lambda = lambdas[static_cast<std::size_t>(i)];
            c.gamma = gammas[jj];
            c.per_population_lambda.reset();
            try {
                fits[item] = fit(train, c, warm);
            } catch (const Error&) {
                detail::rethrow_annotated("validation_select (lambda=" + std::to_string(c.lambda) +
                                          ", gamma=" + std::to_string(c.gamma) + ")");
            }
            rep.scores(i, j) = loss(fits[item].estimate, validation);
            warm = fits[item].estimate;
        }
    });

    for (const auto& f : fits) rep.nonconverged_fits += f.converged ? 0 : 1;
    const auto [bi, bj] = detail::argmin_sparsest(rep.scores, lambdas, gammas);
    rep.lambda = lambdas[static_cast<std::size_t>(bi)];
    rep.gamma = gammas[static_cast<std::size_t>(bj)];
    rep.fit = std::move(fits[static_cast<std::size_t>(bi * ng + bj)]);
    return rep;
}

struct PerPopulationReport {
    std::vector<double> lambdas;
    /// scores(i, h): validation criterion of population h at lambdas[i].
    Matrix scores;
    std::vector<double> selected;
    CovarianceTensor estimate;
    int nonconverged_fits = 0;
};

/**
 * Separate-population estimator with its own lambda per population (gamma = 0).
 * With gamma = 0 the joint problem decouples across populations, so each
 * population is fit on its own slice and the selected slices are stacked;
 * this is the joint fit with `per_population_lambda` set to `selected`.
 */
inline PerPopulationReport validation_select_per_population(const VariationTensor& train,
                                                            const VariationTensor& validation,
                                                            const std::vector<double>& lambdas,
                                                            const SolverConfig& cfg)
{
    if (lambdas.empty()) throw DomainError("validation_select_per_population: empty grid");
    const std::size_t hc = train.h_count();
    const auto nl = lambdas.size();
    std::vector<FitResult> fits(nl * hc);

    PerPopulationReport rep;
    rep.lambdas = lambdas;
    rep.scores = Matrix::Zero(static_cast<Index>(nl), static_cast<Index>(hc));

    parallel_for(hc, [&](std::size_t h) {
        const VariationTensor tr(std::vector<Matrix>{train[h]});
        const VariationTensor va(std::vector<Matrix>{validation[h]});
        std::optional<CovarianceTensor> warm;
        for (std::size_t i = 0; i < nl; ++i) {
            const std::size_t item = i * hc + h;
            SolverConfig c = cfg;
            c.lambda = lambdas[i];
            c.gamma = 0.0;
            c.per_population_lambda.reset();
            try {
                fits[item] = fit(tr, c, warm);
            } catch (const Error&) {
                detail::rethrow_annotated("validation_select_per_population (lambda=" +
                                          std::to_string(c.lambda) + ", population=" + std::to_string(h) + ")");
            }
            rep.scores(static_cast<Index>(i), static_cast<Index>(h)) = loss(fits[item].estimate, va);
            warm = fits[item].estimate;
        }
    });

    Tensor3 est(hc, train.dim());
    for (std::size_t h = 0; h < hc; ++h) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < nl; ++i) {
            const double s = rep.scores(static_cast<Index>(i), static_cast<Index>(h));
            const double b = rep.scores(static_cast<Index>(best), static_cast<Index>(h));
            if (s < b || (s == b && lambdas[i] > lambdas[best])) best = i;
        }
        rep.selected.push_back(lambdas[best]);
        est[h] = fits[best * hc + h].estimate[0];
    }
    for (const auto& f : fits) rep.nonconverged_fits += f.converged ? 0 : 1;
    rep.estimate = CovarianceTensor(std::move(est), cfg.epsilon);
    return rep;
}

// ---------------------------------------------------------------------------
// Bootstrap stability

struct ReplicateSummary {
    bool ok = false;
    bool converged = false;
    std::string error;
    /// Nonzero unordered pairs per population.
    std::vector<int> edge_counts;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
};

/**
 * Edge stability over bootstrap refits.
 *
 * Edges are unordered off-diagonal pairs read as nonzero at |value| > 1e-8.
 * An edge is stable in population h when it is nonzero in at least
 * 0.95 * replicates_ok refits of h. Percentages are NaN when nothing is tallied.
 */
struct StabilityReport {
    int replicates_requested = 0;
    int replicates_ok = 0;
    int replicates_failed = 0;
    CovarianceTensor point_estimate;
    bool point_converged = false;
    /// Successful refits that stopped at max_iter (still tallied).
    int replicates_nonconverged = 0;
    std::vector<std::string> population_names;

    std::vector<int> positive;
    std::vector<int> negative;
    /// frequency[h](j, k): refits with edge (j, k) nonzero in population h (symmetric).
    std::vector<Eigen::MatrixXi> frequency;
    std::vector<double> stability_pct;

    /// Edges nonzero in every population, split by sign agreement.
    int shared_same_sign = 0;
    int shared_diff_sign = 0;
    double shared_stability_pct = std::numeric_limits<double>::quiet_NaN();

    /// distinct[h]: edges nonzero in population h only (D1, D2, ... for H = 2).
    std::vector<int> distinct;
    std::vector<double> distinct_stability_pct;

    std::vector<ReplicateSummary> replicates;

    double stable_threshold() const { return 0.95 * static_cast<double>(replicates_ok); }
};

namespace detail {

inline double percent(int stable, int total)
{
    return total == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : 100.0 * static_cast<double>(stable) / static_cast<double>(total);
}

inline std::vector<int> edge_counts(const CovarianceTensor& est)
{
    std::vector<int> counts;
    const Index p = est.dim();
    for (std::size_t h = 0; h < est.h_count(); ++h) {
        int c = 0;
        for (Index j = 0; j < p; ++j) {
            for (Index k = j + 1; k < p; ++k) c += is_nonzero(est[h](j, k)) ? 1 : 0;
        }
        counts.push_back(c);
    }
    return counts;
}

} // namespace detail

/**
 * Refit on `b` bootstrap datasets (rows resampled with replacement within
 * each population, sizes preserved) with the tuning parameters of `cfg`
 * held fixed, and tabulate the point estimate's edges against the refits.
 * Replicate r draws from std::mt19937_64 seeded by seed_seq{seed, r}, so
 * results do not depend on scheduling. Failed refits are recorded and
 * excluded.
 */
inline StabilityReport bootstrap_stability(const CompositionDataset& data, int b, const SolverConfig& cfg,
                                           std::uint64_t seed)
{
    if (b < 1) throw DomainError("bootstrap_stability: need at least one replicate");
    const std::size_t hc = data.h_count();
    const Index p = data.dim();

    StabilityReport rep;
    rep.replicates_requested = b;
    rep.population_names = data.population_names();
    {
        FitResult point = fit(variation_tensor(data), cfg);
        rep.point_converged = point.converged;
        rep.point_estimate = std::move(point.estimate);
    }
    rep.replicates.resize(static_cast<std::size_t>(b));
    std::vector<std::vector<Eigen::MatrixXi>> support(static_cast<std::size_t>(b));

    parallel_for(static_cast<std::size_t>(b), [&](std::size_t r) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        std::vector<Matrix> slices;
        for (std::size_t h = 0; h < hc; ++h) {
            const Matrix& x = data.population(h);
            std::uniform_int_distribution<Index> pick(0, x.rows() - 1);
            std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
            for (auto& i : rows) i = pick(rng);
            slices.push_back(variation_matrix(detail::select_rows(x, rows)));
        }
        ReplicateSummary& s = rep.replicates[r];
        try {
            const VariationTensor theta(std::move(slices));
            const FitResult f = fit(theta, cfg);
            s.ok = true;
            s.converged = f.converged;
            s.objective = f.final_objective();
            s.iterations = f.iterations;
            s.edge_counts = detail::edge_counts(f.estimate);
            for (std::size_t h = 0; h < hc; ++h) {
                Eigen::MatrixXi m = Eigen::MatrixXi::Zero(p, p);
                for (Index j = 0; j < p; ++j) {
                    for (Index k = 0; k < p; ++k) {
                        if (j != k && is_nonzero(f.estimate[h](j, k))) m(j, k) = 1;
                    }
                }
                support[r].push_back(std::move(m));
            }
        } catch (const Error& e) {
            s.ok = false;
            s.error = e.what();
        }
    });

    rep.frequency.assign(hc, Eigen::MatrixXi::Zero(p, p));
    for (std::size_t r = 0; r < support.size(); ++r) {
        if (!rep.replicates[r].ok) {
            ++rep.replicates_failed;
            continue;
        }
        ++rep.replicates_ok;
        if (!rep.replicates[r].converged) ++rep.replicates_nonconverged;
        for (std::size_t h = 0; h < hc; ++h) rep.frequency[h] += support[r][h];
    }
    if (rep.replicates_ok == 0) throw NumericError("bootstrap_stability: every replicate failed");

    const double thr = rep.stable_threshold();
    auto stable_in = [&](std::size_t h, Index j, Index k) {
        return static_cast<double>(rep.frequency[h](j, k)) >= thr;
    };

    const CovarianceTensor& est = rep.point_estimate;
    rep.positive.assign(hc, 0);
    rep.negative.assign(hc, 0);
    rep.distinct.assign(hc, 0);
    std::vector<int> stable_all(hc, 0), stable_distinct(hc, 0);
    int shared_stable = 0;

    for (Index j = 0; j < p; ++j) {
        for (Index k = j + 1; k < p; ++k) {
            int present = 0, pos = 0, neg = 0;
            bool all_stable = true;
            std::size_t only = 0;
            for (std::size_t h = 0; h < hc; ++h) {
                const double v = est[h](j, k);
                if (!is_nonzero(v)) continue;
                ++present;
                only = h;
                if (v > 0) {
                    ++rep.positive[h];
                    ++pos;
                } else {
                    ++rep.negative[h];
                    ++neg;
                }
                if (stable_in(h, j, k)) {
                    ++stable_all[h];
                } else {
                    all_stable = false;
                }
            }
            if (hc >= 2 && present == static_cast<int>(hc)) {
                (pos == present || neg == present ? rep.shared_same_sign : rep.shared_diff_sign) += 1;
                shared_stable += all_stable ? 1 : 0;
            }
            if (hc >= 2 && present == 1) {
                ++rep.distinct[only];
                stable_distinct[only] += stable_in(only, j, k) ? 1 : 0;
            }
        }
    }

    for (std::size_t h = 0; h < hc; ++h) {
        rep.stability_pct.push_back(detail::percent(stable_all[h], rep.positive[h] + rep.negative[h]));
        rep.distinct_stability_pct.push_back(detail::percent(stable_distinct[h], rep.distinct[h]));
    }
    rep.shared_stability_pct = detail::percent(shared_stable, rep.shared_same_sign + rep.shared_diff_sign);
    return rep;
}

} // namespace compcov
