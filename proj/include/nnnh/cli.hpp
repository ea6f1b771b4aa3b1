#pragma once

#include "nnnh/eval.hpp"
#include "nnnh/events.hpp"
#include "nnnh/likelihood.hpp"
#include "nnnh/model.hpp"
#include "nnnh/optimizer.hpp"
#include "nnnh/simulate.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnnh::cli {

using nlohmann::json;

/// Bad flags, bad config or missing inputs; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int { exit_ok = 0, exit_runtime = 1, exit_usage = 2 };

// ---------------------------------------------------------------------------
// Config handling

/// Recursively fills `defaults` from `user`. Keys absent from `defaults` are
/// rejected unless their parent path is listed in `free` (validated later).
inline json merge_config(const json& defaults, const json& user, const std::set<std::string>& free,
                         const std::string& path = "") {
    if (!user.is_object()) throw UsageError("config" + (path.empty() ? "" : " key '" + path + "'") + " must be an object");
    json out = defaults;
    for (const auto& [key, value] : user.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!defaults.contains(key)) throw UsageError("unknown config key '" + full + "'");
        const auto& d = defaults.at(key);
        if (free.count(full) != 0 || d.is_null()) {
            out[key] = value;
        } else if (d.is_object()) {
            out[key] = merge_config(d, value, free, full);
        } else {
            const bool ok = (d.is_number() && value.is_number()) || (d.is_boolean() && value.is_boolean()) ||
                            (d.is_string() && value.is_string()) || (d.is_array() && value.is_array());
            if (!ok) throw UsageError("config key '" + full + "' has the wrong type");
            out[key] = value;
        }
    }
    return out;
}

/// Applies `a.b.c=value`. The value is parsed as JSON, falling back to a string.
inline void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& ex) {
        throw UsageError(path + ": " + ex.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json split_defaults() { return {{"train", 0.6}, {"validation", 0.2}, {"test", 0.2}}; }

inline json simulate_defaults() {
    return {{"seed", 0},
            {"process", "hawkes"},
            {"horizon", 1000.0},
            {"truth", nullptr},
            {"rate", nullptr},
            {"lookahead", 0.0},
            {"check_bound", false},
            {"events_file", "events.csv"},
            {"truth_file", "truth.json"}};
}

inline json fit_defaults() {
    const FitConfig f;
    return {{"seed", 0},
            {"data", ""},
            {"dims", nullptr},
            {"horizon", nullptr},
            {"model", "hawkes"},
            {"scale", true},
            {"split", split_defaults()},
            {"workers", 1},
            {"fit",
             {{"kernel_neurons", f.kernel_neurons},
              {"base_neurons", f.base_neurons},
              {"batch_size", f.batch_size},
              {"lr_kernel_output", f.lr_kernel_output},
              {"lr_kernel_hidden", f.lr_kernel_hidden},
              {"lr_base_output", f.lr_base_output},
              {"lr_base_hidden", f.lr_base_hidden},
              {"beta1", f.beta1},
              {"beta2", f.beta2},
              {"epsilon", f.epsilon},
              {"patience", f.patience},
              {"val_check_interval", f.val_check_interval},
              {"max_iters", f.max_iters},
              {"base_mode", "constant"},
              {"constant_base_init", f.constant_base_init},
              {"train_kernel_bias", f.train_kernel_bias},
              {"max_lag", f.likelihood.intensity.max_lag},
              {"error_on_unbounded_tail", f.likelihood.intensity.error_on_unbounded_tail},
              {"include_tail", f.likelihood.include_tail},
              {"log_floor", f.likelihood.log_floor}}},
            {"model_file", "model.json"},
            {"trace_file", "trace.csv"},
            {"checkpoint_file", "checkpoint.json"}};
}

inline json eval_defaults() {
    return {{"data", ""},
            {"model", ""},
            {"truth", ""},
            {"dims", nullptr},
            {"horizon", nullptr},
            {"split", split_defaults()},
            {"window", "test"},
            {"workers", 1},
            {"max_lag", 100.0},
            {"include_tail", false},
            {"log_floor", 1e-10},
            {"lag_grid", {{"lo", 0.0}, {"hi", 5.0}, {"n", 201}}},
            {"time_grid", {{"n", 201}}},
            {"report_file", "report.json"}};
}

[[nodiscard]] inline FitConfig fit_config_from_json(const json& root) {
    const auto& j = root.at("fit");
    FitConfig c;
    c.kernel_neurons = j.at("kernel_neurons").get<std::size_t>();
    c.base_neurons = j.at("base_neurons").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr_kernel_output = j.at("lr_kernel_output").get<double>();
    c.lr_kernel_hidden = j.at("lr_kernel_hidden").get<double>();
    c.lr_base_output = j.at("lr_base_output").get<double>();
    c.lr_base_hidden = j.at("lr_base_hidden").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.patience = j.at("patience").get<std::size_t>();
    c.val_check_interval = j.at("val_check_interval").get<std::size_t>();
    c.max_iters = j.at("max_iters").get<std::size_t>();
    const auto mode = j.at("base_mode").get<std::string>();
    if (mode == "constant")
        c.base_mode = BaseMode::constant;
    else if (mode == "net")
        c.base_mode = BaseMode::net;
    else
        throw UsageError("fit.base_mode must be 'constant' or 'net'");
    c.constant_base_init = j.at("constant_base_init").get<double>();
    c.train_kernel_bias = j.at("train_kernel_bias").get<bool>();
    c.likelihood.intensity.max_lag = j.at("max_lag").get<double>();
    c.likelihood.intensity.error_on_unbounded_tail = j.at("error_on_unbounded_tail").get<bool>();
    c.likelihood.include_tail = j.at("include_tail").get<bool>();
    c.likelihood.log_floor = j.at("log_floor").get<double>();
    c.seed = root.at("seed").get<std::uint64_t>();
    c.likelihood.workers = root.at("workers").get<unsigned>();
    try {
        c.validate();
    } catch (const std::invalid_argument& ex) {
        throw UsageError(std::string("invalid fit config: ") + ex.what());
    }
    return c;
}

[[nodiscard]] inline SplitRatios split_from_json(const json& j) {
    return {j.at("train").get<double>(), j.at("validation").get<double>(), j.at("test").get<double>()};
}

[[nodiscard]] inline EventStream load_data(const json& cfg) {
    const auto path = cfg.at("data").get<std::string>();
    if (path.empty()) throw UsageError("no data file given");
    if (!std::filesystem::exists(path)) throw UsageError("data file not found: " + path);
    LoadOptions opt;
    if (!cfg.at("dims").is_null()) opt.dims = cfg.at("dims").get<int>();
    if (!cfg.at("horizon").is_null()) opt.horizon = cfg.at("horizon").get<double>();
    return load_events(path, opt);
}

[[nodiscard]] inline std::filesystem::path prepare_out_dir(const std::string& dir) {
    std::filesystem::path p = dir.empty() ? std::filesystem::path(".") : std::filesystem::path(dir);
    std::filesystem::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------
// simulate

/// Writes the events CSV, the ground-truth descriptor and the resolved config.
inline int cmd_simulate(const json& user_cfg, const std::string& out_dir, std::ostream& log = std::cout) {
    const json cfg = merge_config(simulate_defaults(), user_cfg, {"truth", "rate"});
    const auto out = prepare_out_dir(out_dir);
    const auto process = cfg.at("process").get<std::string>();
    const double T = cfg.at("horizon").get<double>();
    if (!std::isfinite(T) || T < 0.0) throw UsageError("horizon must be finite and non-negative");
    SimulationOptions opt;
    opt.lookahead = cfg.at("lookahead").get<double>();
    opt.check_bound = cfg.at("check_bound").get<bool>();
    Rng rng = Rng::substream(cfg.at("seed").get<std::uint64_t>(), "simulation");

    json truth;
    EventStream s;
    try {
        if (process == "hawkes") {
            if (cfg.at("truth").is_null()) throw UsageError("simulate: 'truth' model is required for hawkes");
            const auto gt = cfg.at("truth").get<GroundTruthModel>();
            s = simulate_hawkes(gt, T, rng, opt);
            truth = {{"process", "hawkes"}, {"model", gt}, {"horizon", T}};
        } else if (process == "nhpp") {
            if (cfg.at("rate").is_null()) throw UsageError("simulate: 'rate' is required for nhpp");
            const auto& r = cfg.at("rate");
            if (r.contains("a1")) {
                const auto net = r.get<ReluNet>();
                s = simulate_nhpp(net, T, rng, opt);
                truth = {{"process", "nhpp"}, {"rate_net", net}, {"horizon", T}};
            } else {
                const auto rate = r.get<NamedRate>();
                s = simulate_nhpp(rate, T, rng, opt);
                truth = {{"process", "nhpp"}, {"rate", rate}, {"horizon", T}};
            }
        } else {
            throw UsageError("simulate: process must be 'hawkes' or 'nhpp'");
        }
    } catch (const json::exception& ex) {
        throw UsageError(std::string("invalid ground-truth model: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw UsageError(std::string("invalid ground-truth model: ") + ex.what());
    }
    write_events_csv((out / cfg.at("events_file").get<std::string>()).string(), s);
    write_json_file(out / cfg.at("truth_file").get<std::string>(), truth);
    write_json_file(out / "simulate.resolved.json", cfg);
    log << "simulated " << s.size() << " events on [0, " << format_double(T) << "]\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// fit

struct PreparedData {
    EventStream raw;
    EventStream scaled;
    ScaleInfo scale;
    Splits splits;
};

[[nodiscard]] inline PreparedData prepare(EventStream raw, bool scale, const SplitRatios& ratios,
                                          std::optional<ScaleInfo> known = std::nullopt) {
    PreparedData p{std::move(raw), {}, {}, {}};
    if (known) {
        p.scale = *known;
        p.scaled = apply_scale(p.raw, p.scale);
    } else if (scale) {
        auto [sc, info] = scale_times(p.raw);
        p.scaled = std::move(sc);
        p.scale = info;
    } else {
        p.scaled = p.raw;
        p.scale = ScaleInfo{1.0, p.raw.events().empty() ? 0.0 : p.raw.events().back().time, p.raw.events().size()};
    }
    p.splits = split_chronological(p.scaled, ratios);
    return p;
}

template <class Problem>
void run_trainer(Trainer<Problem>& trainer, const std::optional<std::string>& resume) {
    if (resume) {
        const auto j = read_json_file(*resume);
        try {
            trainer.restore(j.get<FitCheckpoint>());
        } catch (const json::exception& ex) {
            throw UsageError("invalid checkpoint " + *resume + ": " + ex.what());
        } catch (const std::invalid_argument& ex) {
            throw UsageError("invalid checkpoint " + *resume + ": " + ex.what());
        }
    }
    trainer.run();
}

/// Fits and writes the model JSON, trace CSV, checkpoint and resolved config.
inline int cmd_fit(const json& user_cfg, const std::string& out_dir, const std::optional<std::string>& resume = {},
                   std::ostream& log = std::cout) {
    const json cfg = merge_config(fit_defaults(), user_cfg, {});
    const FitConfig fc = fit_config_from_json(cfg);
    const auto kind = cfg.at("model").get<std::string>();
    if (kind != "hawkes" && kind != "nhpp") throw UsageError("model must be 'hawkes' or 'nhpp'");
    auto data = prepare(load_data(cfg), cfg.at("scale").get<bool>(), split_from_json(cfg.at("split")));
    if (data.splits.train.empty()) throw UsageError("training window has no events");
    const auto out = prepare_out_dir(out_dir);

    json model_json;
    FitTrace trace;
    json checkpoint;
    if (kind == "hawkes") {
        HawkesModel init = init_model(data.scaled.dims(), fc);
        Trainer<HawkesProblem> trainer(HawkesProblem(init, data.splits.train, data.splits.validation, fc.likelihood),
                                       fc);
        run_trainer(trainer, resume);
        HawkesModel best = init;
        set_parameters(best, trainer.best_parameters());
        model_json = {{"kind", "hawkes"}, {"model", best}, {"scale", data.scale}};
        trace = trainer.trace();
        checkpoint = trainer.checkpoint();
    } else {
        if (data.scaled.dims() != 1) throw UsageError("nhpp fitting needs one-dimensional data");
        Rng rng = Rng::substream(fc.seed, "init");
        ReluNet init = init_base_net(fc.base_neurons, rng);
        Trainer<NhppProblem> trainer(NhppProblem(init, data.splits.train, data.splits.validation, fc.likelihood), fc);
        run_trainer(trainer, resume);
        ReluNet best = init;
        detail::read_net(best, true, trainer.best_parameters());
        model_json = {{"kind", "nhpp"}, {"net", best}, {"scale", data.scale}};
        trace = trainer.trace();
        checkpoint = trainer.checkpoint();
    }
    model_json["best_iteration"] = trace.best_iteration;
    model_json["best_val_nll"] = detail::encode_real(trace.best_val_nll);
    model_json["stop_reason"] = trace.stop_reason;
    if (resume) model_json["resumed_from"] = *resume;
    write_json_file(out / cfg.at("model_file").get<std::string>(), model_json);
    write_trace_csv((out / cfg.at("trace_file").get<std::string>()).string(), trace);
    write_json_file(out / cfg.at("checkpoint_file").get<std::string>(), checkpoint);
    write_json_file(out / "fit.resolved.json", cfg);
    log << "fit stopped (" << trace.stop_reason << ") after " << checkpoint.at("iteration").get<std::size_t>()
        << " iterations; best validation NLL " << format_double(trace.best_val_nll) << " at iteration "
        << trace.best_iteration << '\n';
    return trace.stop_reason == "non_finite_gradient" ? exit_runtime : exit_ok;
}

// ---------------------------------------------------------------------------
// eval

[[nodiscard]] inline const EventStream& pick_window(const PreparedData& p, const std::string& which) {
    if (which == "train") return p.splits.train;
    if (which == "validation") return p.splits.validation;
    if (which == "test") return p.splits.test;
    if (which == "all") return p.scaled;
    throw UsageError("window must be one of train, validation, test, all");
}

[[nodiscard]] inline json residual_summary(const ResidualSeries& r) {
    json j{{"n", r.size()}};
    const auto pooled = r.pooled();
    if (pooled.size() >= 2) {
        const auto ks = ks_test_exponential(pooled);
        double mean = 0.0;
        for (double x : pooled) mean += x;
        mean /= static_cast<double>(pooled.size());
        j["mean"] = mean;
        j["ks_statistic"] = ks.statistic;
        j["ks_p_value"] = ks.p_value;
        j["qq_slope"] = qq_slope(qq_points(pooled));
    }
    return j;
}

/// NLL report, residuals, QQ points and grids for a fitted model (and
/// optionally the generating model) on one split.
inline int cmd_eval(const json& user_cfg, const std::string& out_dir, std::ostream& log = std::cout) {
    const json cfg = merge_config(eval_defaults(), user_cfg, {});
    const auto model_path = cfg.at("model").get<std::string>();
    if (model_path.empty()) throw UsageError("no model file given");
    if (!std::filesystem::exists(model_path)) throw UsageError("model file not found: " + model_path);
    const json mj = read_json_file(model_path);
    const auto kind = mj.value("kind", std::string("hawkes"));
    const auto scale = mj.at("scale").get<ScaleInfo>();

    LikelihoodOptions lopt;
    lopt.intensity.max_lag = cfg.at("max_lag").get<double>();
    lopt.include_tail = cfg.at("include_tail").get<bool>();
    lopt.log_floor = cfg.at("log_floor").get<double>();
    lopt.workers = cfg.at("workers").get<unsigned>();

    auto data = prepare(load_data(cfg), true, split_from_json(cfg.at("split")), scale);
    const auto which = cfg.at("window").get<std::string>();
    const EventStream& win = pick_window(data, which);
    const EventStream raw_win = unscale_times(win, scale);
    const double log_f = std::log(scale.factor);
    const auto out = prepare_out_dir(out_dir);

    json report{{"window", which},
                {"window_bounds", {win.window().lo, win.window().hi}},
                {"n_events", win.size()},
                {"scale", scale}};
    const json meta_base{{"model_hash", model_hash(mj)}, {"window", {win.window().lo, win.window().hi}},
                         {"window_name", which}};

    ResidualSeries residuals;
    if (kind == "hawkes") {
        HawkesModel m;
        try {
            m = mj.at("model").get<HawkesModel>();
        } catch (const std::exception& ex) {
            throw UsageError(std::string("invalid model file: ") + ex.what());
        }
        if (m.dims != win.dims()) throw UsageError("model/data dimension mismatch");
        const auto rep = log_likelihood(m, win, lopt);
        report["nll"] = -rep.total_ll;
        report["per_dim_ll"] = rep.per_dim_ll;
        report["nll_original_units"] = -rep.total_ll - static_cast<double>(win.size()) * log_f;
        residuals = rescaled_residuals(m, win, lopt.intensity);

        const auto& lg = cfg.at("lag_grid");
        const auto lags = linspace(lg.at("lo").get<double>(), lg.at("hi").get<double>(), lg.at("n").get<std::size_t>());
        const auto times = linspace(win.window().lo, win.window().hi, cfg.at("time_grid").at("n").get<std::size_t>());
        json gm = meta_base;
        gm["units"] = "scaled";
        write_grid_csv((out / "kernels.csv").string(), (out / "base.csv").string(), make_grid_dump(m, lags, times), gm);
        json tm = meta_base;
        tm["units"] = "scaled";
        write_trace_grid_csv((out / "intensity.csv").string(), times, model_intensity_trace(m, win, times, lopt.intensity),
                             tm);
    } else if (kind == "nhpp") {
        const auto net = mj.at("net").get<ReluNet>();
        if (win.dims() != 1) throw UsageError("model/data dimension mismatch");
        const auto rep = nhpp_log_likelihood(net, win, lopt);
        report["nll"] = -rep.total_ll;
        report["per_dim_ll"] = rep.per_dim_ll;
        report["nll_original_units"] = -rep.total_ll - static_cast<double>(win.size()) * log_f;
        residuals = rescaled_residuals(net, win);
        const auto times = linspace(win.window().lo, win.window().hi, cfg.at("time_grid").at("n").get<std::size_t>());
        std::vector<std::vector<double>> mu(1, std::vector<double>(times.size()));
        for (std::size_t i = 0; i < times.size(); ++i) mu[0][i] = std::max(net_forward(net, times[i]), 0.0);
        json tm = meta_base;
        tm["units"] = "scaled";
        write_trace_grid_csv((out / "intensity.csv").string(), times, mu, tm);
    } else {
        throw UsageError("unknown model kind '" + kind + "'");
    }
    report["residuals"] = residual_summary(residuals);
    write_residuals_csv((out / "residuals.csv").string(), residuals, meta_base);
    if (residuals.size() > 0) write_qq_csv((out / "qq.csv").string(), qq_points(residuals), meta_base);

    const auto truth_path = cfg.at("truth").get<std::string>();
    if (!truth_path.empty()) {
        if (!std::filesystem::exists(truth_path)) throw UsageError("truth file not found: " + truth_path);
        const json tj = read_json_file(truth_path);
        json tr;
        ResidualSeries tres;
        try {
            if (tj.at("process") == "hawkes") {
                const auto gt = tj.at("model").get<GroundTruthModel>();
                if (gt.dims != raw_win.dims()) throw UsageError("truth/data dimension mismatch");
                const double nll_o = -gt_log_likelihood(gt, raw_win, lopt).total_ll;
                tr = {{"nll_original_units", nll_o}, {"nll", nll_o + static_cast<double>(win.size()) * log_f}};
                tres = rescaled_residuals(gt, raw_win);
            } else if (tj.contains("rate")) {
                const auto rate = tj.at("rate").get<NamedRate>();
                const double nll_o = -nhpp_true_log_likelihood(rate, raw_win, lopt).total_ll;
                tr = {{"nll_original_units", nll_o}, {"nll", nll_o + static_cast<double>(win.size()) * log_f}};
                tres = rescaled_residuals(rate, raw_win);
            } else {
                const auto net = tj.at("rate_net").get<ReluNet>();
                const double nll_o = -nhpp_log_likelihood(net, raw_win, lopt).total_ll;
                tr = {{"nll_original_units", nll_o}, {"nll", nll_o + static_cast<double>(win.size()) * log_f}};
                tres = rescaled_residuals(net, raw_win);
            }
        } catch (const json::exception& ex) {
            throw UsageError(std::string("invalid truth file: ") + ex.what());
        }
        tr["residuals"] = residual_summary(tres);
        report["truth"] = tr;
        write_residuals_csv((out / "truth_residuals.csv").string(), tres, meta_base);
    }
    write_json_file(out / cfg.at("report_file").get<std::string>(), report);
    write_json_file(out / "eval.resolved.json", cfg);
    log << "NLL on " << which << " window: " << format_double(report.at("nll").get<double>()) << " ("
        << win.size() << " events)\n";
    return exit_ok;
}

} // namespace nnnh::cli
