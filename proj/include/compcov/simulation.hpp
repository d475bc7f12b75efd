#pragma once

#include <compcov/compositional.hpp>
#include <compcov/metrics.hpp>
#include <compcov/solver.hpp>
#include <compcov/tuning.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace compcov {

/// Deterministic 64-bit child seed for stream (a, b) of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    return rng();
}

struct SimulationConfig {
    int model_id = 1;
    /// Training (and validation) sample size of each of the four populations.
    Index n = 50;
    Index p = 40;
    int reps = 10;
    std::uint64_t seed = 1;
    SolverConfig solver;
    /// Grid sizes; lambda and gamma run log-spaced over [1e-3 max, max].
    int n_lambda = 10;
    int n_gamma = 6;
};

struct MethodMetrics {
    std::string method;
    double tpr = 0.0;
    double tnr = 0.0;
    /// Correlation scale, divided by p.
    double frob = 0.0;
    double l1 = 0.0;
    /// Covariance scale, divided by p.
    double frob_cov = 0.0;
    double l1_cov = 0.0;
    /// Selected tuning: "lambda=...;gamma=..." or per-population thresholds.
    std::string tuning;
    int nonconverged_fits = 0;
};

struct SimulationResult {
    std::vector<std::string> methods;
    /// per_rep[r][m]
    std::vector<std::vector<MethodMetrics>> per_rep;
    /// Averages over replications, one per method.
    std::vector<MethodMetrics> mean;
};

namespace detail {

inline MethodMetrics summarize(const std::string& name, const CovarianceTensor& est,
                               const CovarianceTensor& truth)
{
    const MetricsReport m = evaluate(est, truth);
    MethodMetrics out;
    out.method = name;
    out.tpr = m.support.tpr;
    out.tnr = m.support.tnr;
    out.frob = m.correlation.frob_per_p;
    out.l1 = m.correlation.l1_per_p;
    out.frob_cov = m.covariance.frob_per_p;
    out.l1_cov = m.covariance.l1_per_p;
    return out;
}

inline std::string join_values(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "|" : "") + std::to_string(v[i]);
    return s;
}

} // namespace detail

/**
 * Simulation study: per replication, draw independent training and
 * validation sets from the model, tune every method on the validation set
 * and score the training-set estimate against the truth.
 *
 * Methods: MCC (joint lambda, gamma), MCC-H (gamma = 0, one lambda per
 * population) and oracle-soft (soft-thresholded latent covariance).
 */
inline SimulationResult run_simulation(const SimulationConfig& cfg)
{
    if (cfg.reps < 1) throw DomainError("run_simulation: reps must be >= 1");
    const CovarianceTensor truth = model_truth({cfg.model_id, cfg.p});
    const std::vector<Index> sizes(truth.h_count(), cfg.n);

    SimulationResult res;
    res.methods = {"MCC", "MCC-H", OracleResult::kName};
    for (int r = 0; r < cfg.reps; ++r) {
        const auto rr = static_cast<std::uint64_t>(r);
        const SimulatedData train = simulate_dataset(truth, sizes, derive_seed(cfg.seed, rr, 0));
        const SimulatedData valid = simulate_dataset(truth, sizes, derive_seed(cfg.seed, rr, 1));
        const VariationTensor theta_train = variation_tensor(train.data);
        const VariationTensor theta_valid = variation_tensor(valid.data);

        const std::vector<double> lambdas = log_spaced_descending(lambda_max(theta_train), 1e-3, cfg.n_lambda);
        const std::vector<double> gammas = log_spaced_descending(gamma_max(theta_train), 1e-3, cfg.n_gamma);

        std::vector<MethodMetrics> row;

        const ValidationReport mcc = validation_select(theta_train, theta_valid, lambdas, gammas, cfg.solver);
        row.push_back(detail::summarize("MCC", mcc.fit.estimate, truth));
        row.back().tuning = "lambda=" + std::to_string(mcc.lambda) + ";gamma=" + std::to_string(mcc.gamma);
        row.back().nonconverged_fits = mcc.nonconverged_fits;

        const PerPopulationReport sep =
            validation_select_per_population(theta_train, theta_valid, lambdas, cfg.solver);
        row.push_back(detail::summarize("MCC-H", sep.estimate, truth));
        row.back().tuning = "lambda=" + detail::join_values(sep.selected);
        row.back().nonconverged_fits = sep.nonconverged_fits;

        const OracleResult oracle = oracle_baseline(train.log_basis, valid.log_basis);
        row.push_back(detail::summarize(OracleResult::kName, oracle.estimate, truth));
        row.back().tuning = "threshold=" + detail::join_values(oracle.thresholds);

        res.per_rep.push_back(std::move(row));
    }

    for (std::size_t m = 0; m < res.methods.size(); ++m) {
        MethodMetrics avg;
        avg.method = res.methods[m];
        const double k = static_cast<double>(res.per_rep.size());
        for (const auto& row : res.per_rep) {
            avg.tpr += row[m].tpr / k;
            avg.tnr += row[m].tnr / k;
            avg.frob += row[m].frob / k;
            avg.l1 += row[m].l1 / k;
            avg.frob_cov += row[m].frob_cov / k;
            avg.l1_cov += row[m].l1_cov / k;
            avg.nonconverged_fits += row[m].nonconverged_fits;
        }
        res.mean.push_back(avg);
    }
    return res;
}

} // namespace compcov
