#pragma once

#include <compcov/compositional.hpp>
#include <compcov/error.hpp>
#include <compcov/io.hpp>
#include <compcov/metrics.hpp>
#include <compcov/simulation.hpp>
#include <compcov/solver.hpp>
#include <compcov/tuning.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace compcov::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kInvalidInput = 2,
    kNumericFailure = 3,
    kNotConverged = 4,
};

/// Settings shared by every subcommand.
struct RunConfig {
    std::vector<std::string> inputs;
    std::string labels_column = "population";
    double pseudocount = 0.5;

    double lambda = 1.0;
    double gamma = 0.0;
    std::optional<std::vector<double>> per_population_lambda;
    EigenFloor epsilon = kDefaultEpsilon;
    double tol = 1e-7;
    int max_iter = 10000;

    int folds = 10;
    int grid_size = 10;
    int bootstrap = 100;

    int model = 1;
    Index n = 50;
    Index p = 40;
    int reps = 10;

    std::uint64_t seed = 1;
    std::string out = ".";
    /// Accept fits that hit max_iter; they are flagged in the outputs.
    bool allow_nonconverged = false;

    SolverConfig solver() const
    {
        SolverConfig c;
        c.lambda = lambda;
        c.gamma = gamma;
        c.per_population_lambda = per_population_lambda;
        c.epsilon = epsilon;
        c.tol = tol;
        c.max_iter = max_iter;
        return c;
    }
};

/**
 * Files written by one command. Unless commit() is called, every file
 * registered here is deleted when the set goes out of scope.
 */
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir))
    {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw InvalidInput("cannot create output directory " + dir_.string() + ": " + ec.message());
    }

    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;

    ~OutputSet()
    {
        if (committed_) return;
        for (const auto& f : files_) {
            std::error_code ec;
            fs::remove(f, ec);
        }
    }

    /// Open `name` inside the output directory for writing and track it.
    std::ofstream open(const std::string& name)
    {
        const fs::path path = dir_ / name;
        files_.push_back(path);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InvalidInput("cannot write " + path.string());
        return out;
    }

    void commit() { committed_ = true; }
    const std::vector<fs::path>& files() const noexcept { return files_; }

private:
    fs::path dir_;
    std::vector<fs::path> files_;
    bool committed_ = false;
};

namespace detail {

inline std::string safe_name(const std::string& s)
{
    std::string out;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "population" : out;
}

inline std::string fixed(double v, int digits = 6)
{
    if (std::isnan(v)) return "NA";
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

inline CompositionDataset load_dataset(const RunConfig& cfg)
{
    if (cfg.inputs.size() != 1) throw InvalidInput("exactly one --input count table is required");
    return io::ingest_counts(fs::path(cfg.inputs.front()), cfg.labels_column, cfg.pseudocount);
}

inline io::json solver_json(const SolverConfig& c)
{
    io::json j;
    j["lambda"] = c.lambda;
    j["gamma"] = c.gamma;
    j["per_population_lambda"] = c.per_population_lambda ? io::json(*c.per_population_lambda) : io::json();
    j["epsilon"] = c.epsilon ? io::json(*c.epsilon) : io::json("unconstrained");
    j["tol"] = c.tol;
    j["max_iter"] = c.max_iter;
    return j;
}

/// Per-population matrix files plus a JSON sidecar describing them.
inline io::json write_estimate(OutputSet& out, const std::string& prefix, const CompositionDataset& data,
                               const FitResult& fit, const SolverConfig& solver, bool waived)
{
    io::json side;
    side["format"] = "compcov-matrix";
    side["p"] = data.dim();
    side["h"] = data.h_count();
    side["population_names"] = data.population_names();
    side["labels"] = data.labels();
    side["tuning"] = solver_json(solver);
    side["converged"] = fit.converged;
    side["convergence_waived"] = waived && !fit.converged;
    side["iterations"] = fit.iterations;
    side["objective"] = fit.final_objective();
    side["final_alpha"] = fit.final_alpha;
    side["backtracks"] = fit.backtrack_count;

    io::json files = io::json::array();
    for (std::size_t h = 0; h < data.h_count(); ++h) {
        const std::string name = prefix + safe_name(data.population_names()[h]) + ".csv";
        auto f = out.open(name);
        io::write_matrix(f, fit.estimate[h], data.labels());
        files.push_back(name);
    }
    side["files"] = files;
    auto js = out.open(prefix + "estimate.json");
    js << side.dump(2) << '\n';
    return side;
}

template <class Fn>
int guarded(std::ostream& log, Fn&& body)
{
    try {
        return body();
    } catch (const InvalidInput& e) {
        log << "error: " << e.what() << '\n';
        return kInvalidInput;
    } catch (const DomainError& e) {
        log << "error: " << e.what() << '\n';
        return kInvalidInput;
    } catch (const NumericError& e) {
        log << "numeric failure: " << e.what() << '\n';
        return kNumericFailure;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kNumericFailure;
    }
}

inline int convergence_status(bool all_converged, bool waived, std::ostream& log)
{
    if (all_converged) return kOk;
    if (waived) {
        log << "warning: some fits reached max_iter; accepted because --allow-nonconverged was given\n";
        return kOk;
    }
    log << "error: some fits reached max_iter without converging (rerun with a larger --max-iter, "
           "or pass --allow-nonconverged)\n";
    return kNotConverged;
}

} // namespace detail

/// Fit at the given (lambda, gamma) and write one matrix per population.
inline int cmd_estimate(const RunConfig& cfg, std::ostream& log)
{
    return detail::guarded(log, [&] {
        const CompositionDataset data = detail::load_dataset(cfg);
        if (data.h_count() == 1 && cfg.gamma > 0.0) {
            log << "warning: only one population; gamma has no cross-population effect\n";
        }
        const SolverConfig solver = cfg.solver();
        const FitResult f = fit(variation_tensor(data), solver);

        OutputSet out(cfg.out);
        detail::write_estimate(out, "", data, f, solver, cfg.allow_nonconverged);
        out.commit();
        log << "estimate: " << data.h_count() << " population(s), p = " << data.dim() << ", "
            << f.iterations << " iterations, objective " << f.final_objective() << '\n';
        return detail::convergence_status(f.converged, cfg.allow_nonconverged, log);
    });
}

/// Cross-validate (lambda, gamma), write the CV surface and refit at the selected pair.
inline int cmd_cv(const RunConfig& cfg, std::ostream& log)
{
    return detail::guarded(log, [&] {
        const CompositionDataset data = detail::load_dataset(cfg);
        const VariationTensor theta = variation_tensor(data);
        const TuningGrid grid = default_grid(theta, cfg.grid_size, cfg.grid_size, cfg.folds, cfg.seed);
        SolverConfig solver = cfg.solver();
        solver.per_population_lambda.reset();
        const CvReport rep = cv_select(data, grid, solver);

        solver.lambda = rep.lambda;
        solver.gamma = rep.gamma;
        const FitResult f = fit(theta, solver);

        OutputSet out(cfg.out);
        {
            auto s = out.open("cv_scores.csv");
            s << "lambda,gamma,score";
            for (int v = 0; v < cfg.folds; ++v) s << ",fold" << (v + 1);
            s << '\n';
            for (Index i = 0; i < rep.scores.rows(); ++i) {
                for (Index j = 0; j < rep.scores.cols(); ++j) {
                    s << io::format_double(rep.lambdas[static_cast<std::size_t>(i)]) << ','
                      << io::format_double(rep.gammas[static_cast<std::size_t>(j)]) << ','
                      << io::format_double(rep.scores(i, j));
                    for (const auto& fsc : rep.fold_scores) s << ',' << io::format_double(fsc(i, j));
                    s << '\n';
                }
            }
        }
        io::json cvj;
        cvj["selected_lambda"] = rep.lambda;
        cvj["selected_gamma"] = rep.gamma;
        cvj["folds"] = cfg.folds;
        cvj["seed"] = cfg.seed;
        cvj["nonconverged_fits"] = rep.nonconverged_fits;
        cvj["min_score"] = rep.scores(rep.lambda_index, rep.gamma_index);
        {
            auto s = out.open("cv.json");
            s << cvj.dump(2) << '\n';
        }
        detail::write_estimate(out, "", data, f, solver, cfg.allow_nonconverged);
        out.commit();
        log << "cv: selected lambda = " << rep.lambda << ", gamma = " << rep.gamma << '\n';
        return detail::convergence_status(f.converged && rep.nonconverged_fits == 0, cfg.allow_nonconverged,
                                          log);
    });
}

/// Mean metrics per method (method, TPR, TNR, frob/p, l1/p) on the correlation scale.
inline void write_metrics_table(std::ostream& s, const SimulationResult& res)
{
    s << "method\tTPR\tTNR\tfrob/p\tl1/p\n";
    for (const auto& m : res.mean) {
        s << m.method << '\t' << detail::fixed(m.tpr) << '\t' << detail::fixed(m.tnr) << '\t'
          << detail::fixed(m.frob) << '\t' << detail::fixed(m.l1) << '\n';
    }
}

/// Simulate Model 1-3 data, tune on validation sets, and tabulate metrics.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& log)
{
    return detail::guarded(log, [&] {
        SimulationConfig sc;
        sc.model_id = cfg.model;
        sc.n = cfg.n;
        sc.p = cfg.p;
        sc.reps = cfg.reps;
        sc.seed = cfg.seed;
        sc.solver = cfg.solver();
        sc.solver.per_population_lambda.reset();
        sc.n_lambda = cfg.grid_size;
        sc.n_gamma = std::max(2, (cfg.grid_size * 3) / 5);
        const SimulationResult res = run_simulation(sc);

        OutputSet out(cfg.out);
        {
            auto s = out.open("metrics.tsv");
            write_metrics_table(s, res);
        }
        {
            auto s = out.open("replicates.tsv");
            s << "rep\tmethod\tTPR\tTNR\tfrob/p\tl1/p\tfrob_cov/p\tl1_cov/p\tnonconverged\ttuning\n";
            for (std::size_t r = 0; r < res.per_rep.size(); ++r) {
                for (const auto& m : res.per_rep[r]) {
                    s << (r + 1) << '\t' << m.method << '\t' << detail::fixed(m.tpr) << '\t'
                      << detail::fixed(m.tnr) << '\t' << detail::fixed(m.frob) << '\t' << detail::fixed(m.l1)
                      << '\t' << detail::fixed(m.frob_cov) << '\t' << detail::fixed(m.l1_cov) << '\t'
                      << m.nonconverged_fits << '\t' << m.tuning << '\n';
                }
            }
        }
        int nonconverged = 0;
        for (const auto& m : res.mean) nonconverged += m.nonconverged_fits;
        io::json side;
        side["model"] = cfg.model;
        side["n"] = cfg.n;
        side["p"] = cfg.p;
        side["h"] = 4;
        side["reps"] = cfg.reps;
        side["seed"] = cfg.seed;
        side["grid"] = {{"n_lambda", sc.n_lambda}, {"n_gamma", sc.n_gamma}};
        side["solver"] = detail::solver_json(sc.solver);
        side["oracle"] = "oracle-soft: plain soft-thresholding of the latent log-abundance covariance";
        side["nonconverged_fits"] = nonconverged;
        side["allow_nonconverged"] = cfg.allow_nonconverged;
        {
            auto s = out.open("simulate.json");
            s << side.dump(2) << '\n';
        }
        out.commit();
        write_metrics_table(log, res);
        return detail::convergence_status(nonconverged == 0, cfg.allow_nonconverged, log);
    });
}

/// Stability summary: per-population edge counts, then shared and distinct edges.
inline void write_stability_table(std::ostream& s, const StabilityReport& rep)
{
    const std::size_t hc = rep.positive.size();
    s << "section\trow";
    for (const auto& n : rep.population_names) s << '\t' << n;
    s << '\n';
    auto per_pop = [&](const char* section, const char* row, auto value) {
        s << section << '\t' << row;
        for (std::size_t h = 0; h < hc; ++h) s << '\t' << value(h);
        s << '\n';
    };
    per_pop("all", "positive", [&](std::size_t h) { return std::to_string(rep.positive[h]); });
    per_pop("all", "negative", [&](std::size_t h) { return std::to_string(rep.negative[h]); });
    per_pop("all", "stability", [&](std::size_t h) { return detail::fixed(rep.stability_pct[h], 1); });
    if (hc >= 2) {
        s << "shared\tsame_sign\t" << rep.shared_same_sign << '\n';
        s << "shared\tdiff_sign\t" << rep.shared_diff_sign << '\n';
        s << "shared\tstability\t" << detail::fixed(rep.shared_stability_pct, 1) << '\n';
        for (std::size_t h = 0; h < hc; ++h) {
            s << "distinct\tD" << (h + 1) << '\t' << rep.distinct[h] << '\n';
        }
        for (std::size_t h = 0; h < hc; ++h) {
            s << "distinct\tstability_D" << (h + 1) << '\t' << detail::fixed(rep.distinct_stability_pct[h], 1)
              << '\n';
        }
    }
    s << "bootstrap\treplicates_ok\t" << rep.replicates_ok << '\n';
    s << "bootstrap\treplicates_failed\t" << rep.replicates_failed << '\n';
}

/// Bootstrap stability of the estimate at the given (lambda, gamma).
inline int cmd_stability(const RunConfig& cfg, std::ostream& log)
{
    return detail::guarded(log, [&] {
        const CompositionDataset data = detail::load_dataset(cfg);
        const SolverConfig solver = cfg.solver();
        const StabilityReport rep = bootstrap_stability(data, cfg.bootstrap, solver, cfg.seed);

        OutputSet out(cfg.out);
        {
            auto s = out.open("stability.tsv");
            write_stability_table(s, rep);
        }
        for (std::size_t h = 0; h < data.h_count(); ++h) {
            auto s = out.open("edge_frequency_" + detail::safe_name(data.population_names()[h]) + ".csv");
            io::write_matrix(s, rep.frequency[h].cast<double>(), data.labels());
        }
        io::json side;
        side["bootstrap"] = cfg.bootstrap;
        side["seed"] = cfg.seed;
        side["replicates_ok"] = rep.replicates_ok;
        side["replicates_failed"] = rep.replicates_failed;
        side["point_converged"] = rep.point_converged;
        side["replicates_nonconverged"] = rep.replicates_nonconverged;
        side["allow_nonconverged"] = cfg.allow_nonconverged;
        side["population_names"] = data.population_names();
        side["tuning"] = detail::solver_json(solver);
        io::json reps = io::json::array();
        for (const auto& r : rep.replicates) {
            reps.push_back({{"ok", r.ok}, {"converged", r.converged}, {"edges", r.edge_counts},
                            {"iterations", r.iterations}, {"error", r.error}});
        }
        side["replicates"] = reps;
        {
            auto s = out.open("stability.json");
            s << side.dump(2) << '\n';
        }
        out.commit();
        write_stability_table(log, rep);
        if (rep.replicates_failed > 0) {
            log << "warning: " << rep.replicates_failed << " bootstrap refit(s) failed and were excluded\n";
        }
        return detail::convergence_status(rep.point_converged && rep.replicates_nonconverged == 0,
                                          cfg.allow_nonconverged, log);
    });
}

/// One DOT graph per input matrix file, on the correlation scale.
inline int cmd_export_network(const RunConfig& cfg, std::ostream& log)
{
    return detail::guarded(log, [&] {
        if (cfg.inputs.empty()) throw InvalidInput("export-network needs at least one --input matrix file");
        OutputSet out(cfg.out);
        for (const auto& in : cfg.inputs) {
            const io::LabeledMatrix lm = io::read_matrix(fs::path(in));
            const CovarianceTensor corr = to_correlation(CovarianceTensor(Tensor3({lm.values})));
            const std::string stem = fs::path(in).stem().string();
            auto s = out.open(detail::safe_name(stem) + ".dot");
            const io::NetworkSummary sum = io::write_network_dot(s, corr[0], lm.names, stem);
            log << stem << ": " << sum.nodes << " nodes, " << sum.edges << " edges (" << sum.positive
                << " positive, " << sum.negative << " negative)\n";
        }
        out.commit();
        return kOk;
    });
}

} // namespace compcov::cli
