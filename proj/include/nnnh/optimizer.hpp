#pragma once

#include "nnnh/events.hpp"
#include "nnnh/likelihood.hpp"
#include "nnnh/log.hpp"
#include "nnnh/model.hpp"
#include "nnnh/network.hpp"
#include "nnnh/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnnh {

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step{0};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};

    AdamState() = default;
    explicit AdamState(std::size_t n, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
        : m(n, 0.0), v(n, 0.0), beta1(b1), beta2(b2), epsilon(eps) {}
};

/// One Adam update of `params` against `grad` (gradient of the objective
/// being minimized). `lr` holds one rate per parameter. Throws
/// NonFiniteGradient, leaving params and state untouched, if any gradient
/// entry is NaN or infinite.
inline void adam_step(AdamState& st, std::span<double> params, std::span<const double> grad,
                      std::span<const double> lr) {
    if (params.size() != grad.size() || params.size() != lr.size() || st.m.size() != params.size() ||
        st.v.size() != params.size())
        throw std::invalid_argument("adam_step: length mismatch");
    for (std::size_t q = 0; q < grad.size(); ++q)
        if (!std::isfinite(grad[q]))
            throw NonFiniteGradient("non-finite gradient entry at parameter " + std::to_string(q));
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t q = 0; q < params.size(); ++q) {
        st.m[q] = st.beta1 * st.m[q] + (1.0 - st.beta1) * grad[q];
        st.v[q] = st.beta2 * st.v[q] + (1.0 - st.beta2) * grad[q] * grad[q];
        const double mhat = st.m[q] / c1;
        const double vhat = st.v[q] / c2;
        params[q] -= lr[q] * mhat / (std::sqrt(vhat) + st.epsilon);
    }
}

enum class BaseMode { constant, net };

struct FitConfig {
    std::size_t kernel_neurons{32};
    std::size_t base_neurons{50};
    std::size_t batch_size{100};
    double lr_kernel_output{1e-2};
    double lr_kernel_hidden{1e-3};
    double lr_base_output{1e-3};
    double lr_base_hidden{1e-6};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    std::size_t patience{10};          // in validation checks
    std::size_t val_check_interval{1}; // iterations between validation checks
    std::size_t max_iters{10000};
    std::uint64_t seed{0};
    BaseMode base_mode{BaseMode::constant};
    double constant_base_init{1.0};
    bool train_kernel_bias{false};
    LikelihoodOptions likelihood{};

    void validate() const {
        if (!(lr_kernel_output > 0 && lr_kernel_hidden > 0 && lr_base_output > 0 && lr_base_hidden > 0))
            throw std::invalid_argument("learning rates must be positive");
        if (patience < 1) throw std::invalid_argument("patience must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (val_check_interval < 1) throw std::invalid_argument("val_check_interval must be >= 1");
        if (kernel_neurons < 1 || base_neurons < 1) throw std::invalid_argument("neuron counts must be >= 1");
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0))
            throw std::invalid_argument("invalid Adam constants");
    }

    [[nodiscard]] double rate_for(ParamRole role) const {
        switch (role) {
        case ParamRole::base_constant:
        case ParamRole::base_output: return lr_base_output;
        case ParamRole::base_hidden: return lr_base_hidden;
        case ParamRole::kernel_hidden: return lr_kernel_hidden;
        case ParamRole::kernel_output: return lr_kernel_output;
        }
        return lr_kernel_output;
    }
};

struct TraceRecord {
    std::size_t iteration{0};
    double train_nll{0.0};
    double val_nll{0.0};
};

struct FitTrace {
    std::vector<TraceRecord> records;
    std::size_t best_iteration{0};
    double best_val_nll{std::numeric_limits<double>::infinity()};
    std::string stop_reason;
};

inline void write_trace_csv(std::ostream& out, const FitTrace& tr) {
    out << "iteration,train_nll,val_nll\n";
    for (const auto& r : tr.records)
        out << r.iteration << ',' << format_double(r.train_nll) << ',' << format_double(r.val_nll) << '\n';
}

inline void write_trace_csv(const std::string& path, const FitTrace& tr) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace file: " + path);
    write_trace_csv(out, tr);
}

/// Everything needed to continue a fit bit-for-bit.
struct FitCheckpoint {
    std::vector<double> params;
    AdamState adam;
    std::size_t iteration{0};
    std::string rng_state;
    std::vector<double> best_params;
    std::size_t checks_since_best{0};
    FitTrace trace;
};

namespace detail {

/// JSON has no infinities; encode them as strings.
inline nlohmann::json encode_real(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

inline double decode_real(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace detail

inline void to_json(nlohmann::json& j, const FitCheckpoint& c) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : c.trace.records)
        recs.push_back({r.iteration, detail::encode_real(r.train_nll), detail::encode_real(r.val_nll)});
    j = nlohmann::json{{"params", c.params},
                       {"adam",
                        {{"m", c.adam.m},
                         {"v", c.adam.v},
                         {"step", c.adam.step},
                         {"beta1", c.adam.beta1},
                         {"beta2", c.adam.beta2},
                         {"epsilon", c.adam.epsilon}}},
                       {"iteration", c.iteration},
                       {"rng_state", c.rng_state},
                       {"best_params", c.best_params},
                       {"checks_since_best", c.checks_since_best},
                       {"trace",
                        {{"records", recs},
                         {"best_iteration", c.trace.best_iteration},
                         {"best_val_nll", detail::encode_real(c.trace.best_val_nll)},
                         {"stop_reason", c.trace.stop_reason}}}};
}

inline void from_json(const nlohmann::json& j, FitCheckpoint& c) {
    j.at("params").get_to(c.params);
    const auto& a = j.at("adam");
    a.at("m").get_to(c.adam.m);
    a.at("v").get_to(c.adam.v);
    a.at("step").get_to(c.adam.step);
    a.at("beta1").get_to(c.adam.beta1);
    a.at("beta2").get_to(c.adam.beta2);
    a.at("epsilon").get_to(c.adam.epsilon);
    j.at("iteration").get_to(c.iteration);
    j.at("rng_state").get_to(c.rng_state);
    j.at("best_params").get_to(c.best_params);
    j.at("checks_since_best").get_to(c.checks_since_best);
    const auto& t = j.at("trace");
    c.trace.records.clear();
    for (const auto& r : t.at("records"))
        c.trace.records.push_back(
            TraceRecord{r.at(0).get<std::size_t>(), detail::decode_real(r.at(1)), detail::decode_real(r.at(2))});
    t.at("best_iteration").get_to(c.trace.best_iteration);
    c.trace.best_val_nll = detail::decode_real(t.at("best_val_nll"));
    t.at("stop_reason").get_to(c.trace.stop_reason);
}

/// k distinct indices from [0, n), uniformly (Floyd's algorithm).
[[nodiscard]] inline std::vector<std::size_t> sample_batch(std::size_t n, std::size_t k, Rng& rng) {
    k = std::min(k, n);
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
        const auto t = static_cast<std::size_t>(rng.index(j + 1));
        if (std::find(out.begin(), out.end(), t) == out.end())
            out.push_back(t);
        else
            out.push_back(j);
    }
    return out;
}

/// Descent on the negative log-likelihood with batch-mean gradients, Adam,
/// and validation-based early stopping. `Problem` provides:
///   parameters(), set_parameters(span), learning_rates(cfg), train_size(),
///   batch(span<const size_t>) -> BatchResult (log-likelihood ascent terms),
///   validation_nll(), has_validation(), train_nll().
template <class Problem>
class Trainer {
public:
    Trainer(Problem problem, FitConfig cfg)
        : problem_(std::move(problem)), cfg_(std::move(cfg)), rng_(Rng::substream(cfg_.seed, "batch")) {
        cfg_.validate();
        if (problem_.train_size() == 0) throw std::invalid_argument("training window has no events");
        params_ = problem_.parameters();
        lr_ = problem_.learning_rates(cfg_);
        adam_ = AdamState(params_.size(), cfg_.beta1, cfg_.beta2, cfg_.epsilon);
        if (!problem_.has_validation())
            warn("validation window has no events; early stopping disabled");
        const double val = validation();
        trace_.records.push_back(TraceRecord{0, problem_.train_nll(), val});
        best_params_ = params_;
        trace_.best_iteration = 0;
        trace_.best_val_nll = val;
    }

    /// Continues from a checkpoint written by an identically configured run.
    void restore(const FitCheckpoint& c) {
        if (c.params.size() != params_.size() || c.best_params.size() != params_.size())
            throw std::invalid_argument("checkpoint does not match the model layout");
        params_ = c.params;
        adam_ = c.adam;
        iteration_ = c.iteration;
        rng_.set_state(c.rng_state);
        best_params_ = c.best_params;
        checks_since_best_ = c.checks_since_best;
        trace_ = c.trace;
        trace_.stop_reason.clear();
        problem_.set_parameters(params_);
    }

    [[nodiscard]] FitCheckpoint checkpoint() const {
        return FitCheckpoint{params_, adam_, iteration_, rng_.state(), best_params_, checks_since_best_, trace_};
    }

    /// One batch update. Returns false once a stopping rule has fired.
    bool step() {
        if (!trace_.stop_reason.empty()) return false;
        if (iteration_ >= cfg_.max_iters) {
            trace_.stop_reason = "max_iters";
            return false;
        }
        const auto batch = sample_batch(problem_.train_size(), cfg_.batch_size, rng_);
        const auto br = problem_.batch(batch);
        std::vector<double> g(br.gradient.size());
        for (std::size_t q = 0; q < g.size(); ++q) g[q] = -br.gradient[q];
        try {
            adam_step(adam_, params_, g, lr_);
        } catch (const NonFiniteGradient& ex) {
            warn(std::string("aborting fit: ") + ex.what());
            trace_.stop_reason = "non_finite_gradient";
            return false;
        }
        ++iteration_;
        problem_.set_parameters(params_);

        if (!problem_.has_validation()) {
            // nothing to select on: the latest iterate is the result
            best_params_ = params_;
            trace_.best_iteration = iteration_;
        }
        if (iteration_ % cfg_.val_check_interval == 0) {
            const double train_est = -br.mean_term * static_cast<double>(problem_.train_size());
            const double val = validation();
            trace_.records.push_back(TraceRecord{iteration_, train_est, val});
            if (val < trace_.best_val_nll) {
                trace_.best_val_nll = val;
                trace_.best_iteration = iteration_;
                best_params_ = params_;
                checks_since_best_ = 0;
            } else if (problem_.has_validation()) {
                ++checks_since_best_;
                if (checks_since_best_ >= cfg_.patience) {
                    trace_.stop_reason = "early_stopping";
                    return false;
                }
            }
        }
        return true;
    }

    void run() {
        while (step()) {
        }
    }

    [[nodiscard]] const FitTrace& trace() const { return trace_; }
    [[nodiscard]] const std::vector<double>& best_parameters() const { return best_params_; }
    [[nodiscard]] const std::vector<double>& current_parameters() const { return params_; }
    [[nodiscard]] std::size_t iteration() const { return iteration_; }
    [[nodiscard]] Problem& problem() { return problem_; }

private:
    double validation() {
        if (!problem_.has_validation()) return std::numeric_limits<double>::quiet_NaN();
        const double v = problem_.validation_nll();
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }

    Problem problem_;
    FitConfig cfg_;
    Rng rng_;
    std::vector<double> params_;
    std::vector<double> lr_;
    AdamState adam_;
    std::size_t iteration_{0};
    std::vector<double> best_params_;
    std::size_t checks_since_best_{0};
    FitTrace trace_;
};

/// Multivariate Hawkes objective.
class HawkesProblem {
public:
    HawkesProblem(HawkesModel model, const EventStream& train, const EventStream& val, LikelihoodOptions opt)
        : model_(std::move(model)), train_(&train), val_(&val), opt_(opt) {
        if (train.dims() != model_.dims || val.dims() != model_.dims)
            throw std::invalid_argument("model/data dimension mismatch");
    }

    [[nodiscard]] std::vector<double> parameters() const { return get_parameters(model_); }
    void set_parameters(std::span<const double> p) { nnnh::set_parameters(model_, p); }
    [[nodiscard]] std::vector<double> learning_rates(const FitConfig& cfg) const {
        std::vector<double> lr;
        for (auto r : parameter_roles(model_)) lr.push_back(cfg.rate_for(r));
        return lr;
    }
    [[nodiscard]] std::size_t train_size() const { return train_->size(); }
    [[nodiscard]] BatchResult batch(std::span<const std::size_t> idx) const {
        return batch_evaluate(model_, *train_, idx, opt_);
    }
    [[nodiscard]] bool has_validation() const { return !val_->empty(); }
    [[nodiscard]] double validation_nll() const { return -log_likelihood(model_, *val_, opt_).total_ll; }
    [[nodiscard]] double train_nll() const { return -log_likelihood(model_, *train_, opt_).total_ll; }
    [[nodiscard]] const HawkesModel& model() const { return model_; }

private:
    HawkesModel model_;
    const EventStream* train_;
    const EventStream* val_;
    LikelihoodOptions opt_;
};

/// Single-network NHPP objective.
class NhppProblem {
public:
    NhppProblem(ReluNet net, const EventStream& train, const EventStream& val, LikelihoodOptions opt)
        : net_(std::move(net)), train_(&train), val_(&val), opt_(opt) {
        if (train.dims() != 1 || val.dims() != 1)
            throw std::invalid_argument("NHPP fitting needs one-dimensional streams");
    }

    [[nodiscard]] std::vector<double> parameters() const {
        std::vector<double> p(net_param_count(net_, true));
        detail::write_net(net_, true, p);
        return p;
    }
    void set_parameters(std::span<const double> p) { detail::read_net(net_, true, p); }
    [[nodiscard]] std::vector<double> learning_rates(const FitConfig& cfg) const {
        std::vector<ParamRole> roles;
        detail::net_roles(net_.size(), true, ParamRole::base_hidden, ParamRole::base_output, roles);
        std::vector<double> lr;
        for (auto r : roles) lr.push_back(cfg.rate_for(r));
        return lr;
    }
    [[nodiscard]] std::size_t train_size() const { return train_->size(); }
    [[nodiscard]] BatchResult batch(std::span<const std::size_t> idx) const {
        return nhpp_batch_evaluate(net_, *train_, idx, opt_);
    }
    [[nodiscard]] bool has_validation() const { return !val_->empty(); }
    [[nodiscard]] double validation_nll() const { return -nhpp_log_likelihood(net_, *val_, opt_).total_ll; }
    [[nodiscard]] double train_nll() const { return -nhpp_log_likelihood(net_, *train_, opt_).total_ll; }
    [[nodiscard]] const ReluNet& net() const { return net_; }

private:
    ReluNet net_;
    const EventStream* train_;
    const EventStream* val_;
    LikelihoodOptions opt_;
};

/// Freshly initialized model: constant bases at constant_base_init (or base
/// nets), kernel nets per init_kernel_net. Draws from the "init" sub-stream.
[[nodiscard]] inline HawkesModel init_model(int dims, const FitConfig& cfg) {
    Rng rng = Rng::substream(cfg.seed, "init");
    std::vector<BaseIntensity> bases;
    for (int d = 0; d < dims; ++d) {
        if (cfg.base_mode == BaseMode::net)
            bases.emplace_back(init_base_net(cfg.base_neurons, rng));
        else
            bases.emplace_back(ConstantRate{cfg.constant_base_init});
    }
    std::vector<ReluNet> kernels;
    for (int k = 0; k < dims * dims; ++k) kernels.push_back(init_kernel_net(cfg.kernel_neurons, rng));
    return HawkesModel(dims, std::move(bases), std::move(kernels), cfg.train_kernel_bias);
}

struct FitResult {
    HawkesModel model;
    FitTrace trace;
};

struct NhppFitResult {
    ReluNet net;
    FitTrace trace;
};

/// Fits an NNNH model; returns the best-validation checkpoint.
[[nodiscard]] inline FitResult fit(const EventStream& train, const EventStream& val, const FitConfig& cfg,
                                   std::optional<HawkesModel> initial = std::nullopt) {
    if (train.empty()) throw std::invalid_argument("training window has no events");
    HawkesModel model = initial ? std::move(*initial) : init_model(train.dims(), cfg);
    Trainer<HawkesProblem> trainer(HawkesProblem(model, train, val, cfg.likelihood), cfg);
    trainer.run();
    set_parameters(model, trainer.best_parameters());
    return {std::move(model), trainer.trace()};
}

[[nodiscard]] inline NhppFitResult fit_nhpp(const EventStream& train, const EventStream& val, const FitConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("training window has no events");
    Rng rng = Rng::substream(cfg.seed, "init");
    ReluNet net = init_base_net(cfg.base_neurons, rng);
    Trainer<NhppProblem> trainer(NhppProblem(net, train, val, cfg.likelihood), cfg);
    trainer.run();
    detail::read_net(net, true, trainer.best_parameters());
    return {std::move(net), trainer.trace()};
}

} // namespace nnnh
