// compcov: sparse positive-definite basis covariance estimation for
// compositional data from one or several populations.

#include <compcov/commands.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <limits>
#include <string>

namespace {

using compcov::cli::RunConfig;

void add_input_options(CLI::App* cmd, RunConfig& cfg)
{
    cmd->add_option("--input", cfg.inputs, "Count table (rows = samples, one population column)")
        ->required();
    cmd->add_option("--labels-column", cfg.labels_column,
                    "Name of the population column (empty: single population)")
        ->capture_default_str();
    cmd->add_option("--pseudocount", cfg.pseudocount, "Added to every count before closure")
        ->capture_default_str();
}

void add_solver_options(CLI::App* cmd, RunConfig& cfg, std::string& epsilon)
{
    cmd->add_option("--epsilon", epsilon, "Eigenvalue floor, or 'none' to drop the PSD constraint")
        ->capture_default_str();
    cmd->add_option("--tol", cfg.tol, "Relative objective change for convergence")->capture_default_str();
    cmd->add_option("--max-iter", cfg.max_iter, "Iteration limit per fit")->capture_default_str();
    cmd->add_flag("--allow-nonconverged", cfg.allow_nonconverged,
                  "Exit 0 even if a fit reaches --max-iter (flagged in the outputs)");
    cmd->add_option("--out", cfg.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
}

void add_penalty_options(CLI::App* cmd, RunConfig& cfg, std::vector<double>& per_pop)
{
    cmd->add_option("--lambda", cfg.lambda, "Elementwise L1 penalty")->capture_default_str();
    cmd->add_option("--gamma", cfg.gamma, "Fiber group-lasso penalty")->capture_default_str();
    cmd->add_option("--per-population-lambda", per_pop, "One L1 penalty per population (overrides --lambda)")
        ->delimiter(',');
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse positive-definite covariance estimation for compositional data"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string epsilon = "1e-4";
    std::vector<double> per_pop;

    auto* estimate = app.add_subcommand("estimate", "Fit at fixed (lambda, gamma) and write the estimates");
    add_input_options(estimate, cfg);
    add_penalty_options(estimate, cfg, per_pop);
    add_solver_options(estimate, cfg, epsilon);

    auto* cv = app.add_subcommand("cv", "Select (lambda, gamma) by V-fold cross-validation and refit");
    add_input_options(cv, cfg);
    add_solver_options(cv, cfg, epsilon);
    cv->add_option("--folds", cfg.folds, "Number of folds")->capture_default_str();
    cv->add_option("--grid-size", cfg.grid_size, "Values per penalty in the tuning grid")->capture_default_str();

    auto* simulate = app.add_subcommand("simulate", "Run the Model 1-3 simulation study");
    simulate->add_option("--model", cfg.model, "Simulation model (1, 2 or 3)")
        ->check(CLI::IsMember({1, 2, 3}))
        ->capture_default_str();
    simulate->add_option("--n", cfg.n, "Samples per population")->capture_default_str();
    simulate->add_option("--p", cfg.p, "Number of parts")->capture_default_str();
    simulate->add_option("--reps", cfg.reps, "Replications")->capture_default_str();
    simulate->add_option("--grid-size", cfg.grid_size, "Lambda values in the tuning grid")->capture_default_str();
    add_solver_options(simulate, cfg, epsilon);

    auto* stability = app.add_subcommand("stability", "Bootstrap edge stability at fixed (lambda, gamma)");
    add_input_options(stability, cfg);
    add_penalty_options(stability, cfg, per_pop);
    add_solver_options(stability, cfg, epsilon);
    stability->add_option("--bootstrap", cfg.bootstrap, "Bootstrap replicates")->capture_default_str();

    auto* network = app.add_subcommand("export-network", "Write DOT correlation networks for matrix files");
    network->add_option("--input", cfg.inputs, "Matrix file(s) written by estimate or cv")->required();
    network->add_option("--out", cfg.out, "Output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (!per_pop.empty()) cfg.per_population_lambda = per_pop;
    if (epsilon == "none") {
        cfg.epsilon = compcov::kUnconstrained;
    } else {
        const auto v = compcov::io::parse_double(epsilon);
        if (!v) {
            std::cerr << "error: --epsilon must be a number or 'none'\n";
            return compcov::cli::kUsage;
        }
        cfg.epsilon = *v;
    }

    if (estimate->parsed()) return compcov::cli::cmd_estimate(cfg, std::cerr);
    if (cv->parsed()) return compcov::cli::cmd_cv(cfg, std::cerr);
    if (simulate->parsed()) return compcov::cli::cmd_simulate(cfg, std::cerr);
    if (stability->parsed()) return compcov::cli::cmd_stability(cfg, std::cerr);
    if (network->parsed()) return compcov::cli::cmd_export_network(cfg, std::cerr);
    return compcov::cli::kUsage;
}
