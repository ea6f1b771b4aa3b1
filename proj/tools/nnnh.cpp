#include "nnnh/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out_dir{"."};
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
};

nlohmann::json load_config(const Common& c) {
    nlohmann::json cfg = nlohmann::json::object();
    if (!c.config.empty()) cfg = nnnh::cli::read_json_file(c.config);
    for (const auto& s : c.sets) nnnh::cli::apply_override(cfg, s);
    return cfg;
}

void add_common(CLI::App* sub, Common& c, bool seed, bool workers) {
    sub->add_option("-c,--config", c.config, "JSON config file");
    sub->add_option("--set", c.sets, "Override a config key: key.path=value (repeatable)");
    sub->add_option("-o,--out-dir", c.out_dir, "Output directory")->capture_default_str();
    if (seed) sub->add_option("--seed", c.seed, "Master random seed");
    if (workers) sub->add_option("--workers", c.workers, "Parallel likelihood workers (1 = reproducible)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural-network nonlinear Hawkes processes: simulate, fit and evaluate"};
    app.require_subcommand(1);

    Common sim_c, fit_c, eval_c;
    std::optional<double> horizon;
    std::optional<std::string> fit_data, resume, eval_data, eval_model, eval_truth;
    std::optional<std::size_t> max_iters;

    auto* sim = app.add_subcommand("simulate", "Simulate a ground-truth process to CSV");
    add_common(sim, sim_c, true, false);
    sim->add_option("--horizon", horizon, "Simulation horizon T");

    auto* fit = app.add_subcommand("fit", "Fit an NNNH model (or an NHPP base net)");
    add_common(fit, fit_c, true, true);
    fit->add_option("--data", fit_data, "Events file (csv or jsonl)");
    fit->add_option("--resume", resume, "Continue from a checkpoint written by an identical config");
    fit->add_option("--max-iters", max_iters, "Iteration cap");

    auto* ev = app.add_subcommand("eval", "Held-out NLL, residual diagnostics and grids");
    add_common(ev, eval_c, false, true);
    ev->add_option("--data", eval_data, "Events file");
    ev->add_option("--model", eval_model, "Fitted model JSON");
    ev->add_option("--truth", eval_truth, "Ground-truth JSON from simulate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? nnnh::cli::exit_ok : nnnh::cli::exit_usage;
    }

    try {
        if (*sim) {
            auto cfg = load_config(sim_c);
            if (sim_c.seed) cfg["seed"] = *sim_c.seed;
            if (horizon) cfg["horizon"] = *horizon;
            return nnnh::cli::cmd_simulate(cfg, sim_c.out_dir);
        }
        if (*fit) {
            auto cfg = load_config(fit_c);
            if (fit_c.seed) cfg["seed"] = *fit_c.seed;
            if (fit_c.workers) cfg["workers"] = *fit_c.workers;
            if (fit_data) cfg["data"] = *fit_data;
            if (max_iters) cfg["fit"]["max_iters"] = *max_iters;
            return nnnh::cli::cmd_fit(cfg, fit_c.out_dir, resume);
        }
        auto cfg = load_config(eval_c);
        if (eval_c.workers) cfg["workers"] = *eval_c.workers;
        if (eval_data) cfg["data"] = *eval_data;
        if (eval_model) cfg["model"] = *eval_model;
        if (eval_truth) cfg["truth"] = *eval_truth;
        return nnnh::cli::cmd_eval(cfg, eval_c.out_dir);
    } catch (const nnnh::cli::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return nnnh::cli::exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return nnnh::cli::exit_runtime;
    }
}
