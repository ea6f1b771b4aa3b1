#pragma once

#include "nnnh/events.hpp"
#include "nnnh/likelihood.hpp"
#include "nnnh/log.hpp"
#include "nnnh/network.hpp"
#include "nnnh/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace nnnh {

enum class KernelKind { zero, exponential, rectangular };

/// exponential: alpha * exp(-beta t); rectangular: alpha * beta on
/// [delta, delta + 1/beta] (both ends closed); zero.
struct ParametricKernel {
    KernelKind kind{KernelKind::zero};
    double alpha{0.0};
    double beta{1.0};
    double delta{0.0};

    static ParametricKernel zero() { return {}; }
    static ParametricKernel exponential(double alpha, double beta) {
        return {KernelKind::exponential, alpha, beta, 0.0};
    }
    static ParametricKernel rectangular(double alpha, double beta, double delta) {
        return {KernelKind::rectangular, alpha, beta, delta};
    }

    void validate() const {
        if (kind == KernelKind::zero) return;
        if (!(beta > 0.0) || !std::isfinite(beta) || !std::isfinite(alpha))
            throw std::invalid_argument("kernel: beta must be positive and parameters finite");
        if (kind == KernelKind::rectangular && !(delta >= 0.0))
            throw std::invalid_argument("rectangular kernel: delta must be non-negative");
    }

    [[nodiscard]] double value(double lag) const {
        if (lag < 0.0) return 0.0;
        switch (kind) {
        case KernelKind::zero: return 0.0;
        case KernelKind::exponential: return alpha * std::exp(-beta * lag);
        case KernelKind::rectangular: return (lag >= delta && lag <= delta + 1.0 / beta) ? alpha * beta : 0.0;
        }
        return 0.0;
    }

    /// Integral over [0, inf).
    [[nodiscard]] double total_integral() const {
        switch (kind) {
        case KernelKind::zero: return 0.0;
        case KernelKind::exponential: return alpha / beta;
        case KernelKind::rectangular: return alpha;
        }
        return 0.0;
    }

    /// Lag beyond which the kernel is negligible (exponential) or exactly zero.
    [[nodiscard]] double cutoff() const {
        switch (kind) {
        case KernelKind::zero: return 0.0;
        case KernelKind::exponential: return 50.0 / beta;
        case KernelKind::rectangular: return delta + 1.0 / beta;
        }
        return 0.0;
    }

    friend bool operator==(const ParametricKernel&, const ParametricKernel&) = default;
};

enum class PsiKind { max, sigmoid };

/// max: lambda* = max(lambda, 0); sigmoid: lambda* = 1 / (1 + exp(-(lambda - shift))).
struct PsiSpec {
    PsiKind kind{PsiKind::max};
    double shift{2.0};

    [[nodiscard]] double apply(double x) const {
        if (kind == PsiKind::max) return std::max(x, 0.0);
        return 1.0 / (1.0 + std::exp(-(x - shift)));
    }

    friend bool operator==(const PsiSpec&, const PsiSpec&) = default;
};

enum class RateKind { constant, exponential, parabola, sine };

/// Closed-form rate functions of time:
///   constant     value
///   exponential  amplitude * exp(-decay t)
///   parabola     coef * (slope t - shift)^2
///   sine         amplitude * (sin(frequency t - phase) + offset)
/// Defaults are the benchmark settings of each kind.
struct NamedRate {
    RateKind kind{RateKind::constant};
    double value{0.5};
    double amplitude{0.5};
    double decay{0.001};
    double coef{2e-7};
    double slope{1.5};
    double shift{2000.0};
    double frequency{2.0 * std::numbers::pi * 0.0004};
    double phase{1000.0};
    double offset{1.1};

    static NamedRate constant(double v) {
        NamedRate r;
        r.kind = RateKind::constant;
        r.value = v;
        return r;
    }
    static NamedRate benchmark_exponential() {
        NamedRate r;
        r.kind = RateKind::exponential;
        return r;
    }
    static NamedRate benchmark_constant() { return constant(0.5); }
    static NamedRate benchmark_parabola() {
        NamedRate r;
        r.kind = RateKind::parabola;
        return r;
    }
    static NamedRate benchmark_sine() {
        NamedRate r;
        r.kind = RateKind::sine;
        r.amplitude = 0.4;
        return r;
    }

    /// Rejects settings that can go negative on t >= 0.
    void validate() const {
        switch (kind) {
        case RateKind::constant:
            if (!(value >= 0.0)) throw std::invalid_argument("constant rate must be non-negative");
            break;
        case RateKind::exponential:
            if (!(amplitude >= 0.0) || !std::isfinite(decay))
                throw std::invalid_argument("exponential rate: amplitude must be non-negative");
            break;
        case RateKind::parabola:
            if (!(coef >= 0.0) || !std::isfinite(slope) || !std::isfinite(shift))
                throw std::invalid_argument("parabola rate: coef must be non-negative");
            break;
        case RateKind::sine:
            if (!(amplitude >= 0.0) || !(offset >= 1.0) || !(frequency > 0.0) || !std::isfinite(phase))
                throw std::invalid_argument("sine rate: need amplitude >= 0, offset >= 1, frequency > 0");
            break;
        }
    }

    [[nodiscard]] double raw(double t) const {
        switch (kind) {
        case RateKind::constant: return value;
        case RateKind::exponential: return amplitude * std::exp(-decay * t);
        case RateKind::parabola: {
            const double u = slope * t - shift;
            return coef * u * u;
        }
        case RateKind::sine: return amplitude * (std::sin(frequency * t - phase) + offset);
        }
        return 0.0;
    }

    [[nodiscard]] double operator()(double t) const { return std::max(raw(t), 0.0); }

    /// Integral over [a, b].
    [[nodiscard]] double integral(double a, double b) const {
        switch (kind) {
        case RateKind::constant: return value * (b - a);
        case RateKind::exponential:
            if (decay == 0.0) return amplitude * (b - a);
            return amplitude / decay * (std::exp(-decay * a) - std::exp(-decay * b));
        case RateKind::parabola: {
            if (slope == 0.0) return coef * shift * shift * (b - a);
            const double ub = slope * b - shift;
            const double ua = slope * a - shift;
            return coef / (3.0 * slope) * (ub * ub * ub - ua * ua * ua);
        }
        case RateKind::sine:
            return amplitude * (offset * (b - a) -
                                (std::cos(frequency * b - phase) - std::cos(frequency * a - phase)) / frequency);
        }
        return 0.0;
    }

    /// Supremum over [a, b].
    [[nodiscard]] double max_over(double a, double b) const {
        double m = std::max((*this)(a), (*this)(b));
        if (kind == RateKind::sine) {
            const double two_pi = 2.0 * std::numbers::pi;
            const double ua = frequency * a - phase;
            const double ub = frequency * b - phase;
            const double k = std::ceil((ua - 0.5 * std::numbers::pi) / two_pi);
            if (ub - ua >= two_pi || 0.5 * std::numbers::pi + two_pi * k <= ub)
                m = std::max(m, amplitude * (1.0 + offset));
        }
        // constant, monotone exponential and convex parabola peak at an end
        return m;
    }

    friend bool operator==(const NamedRate&, const NamedRate&) = default;
};

/// Parametric multivariate Hawkes model used to generate data.
/// lambda*_d(t) = Psi(mu_d(t) + sum_j sum_{t_k^j < t} phi_dj(t - t_k^j)).
struct GroundTruthModel {
    int dims{1};
    std::vector<NamedRate> base;
    std::vector<ParametricKernel> kernels;  // row-major (d, j): effect of j on d
    PsiSpec psi{};

    void validate() const {
        if (dims < 1) throw std::invalid_argument("ground truth: dims must be positive");
        if (base.size() != static_cast<std::size_t>(dims))
            throw std::invalid_argument("ground truth: need one base rate per dimension");
        if (kernels.size() != static_cast<std::size_t>(dims) * static_cast<std::size_t>(dims))
            throw std::invalid_argument("ground truth: kernels must be dims x dims");
        for (const auto& b : base) b.validate();
        for (const auto& k : kernels) k.validate();
    }

    [[nodiscard]] const ParametricKernel& kernel(int d, int j) const {
        return kernels[static_cast<std::size_t>(d) * dims + static_cast<std::size_t>(j)];
    }
};

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ParametricKernel& k) {
    switch (k.kind) {
    case KernelKind::zero: j = {{"kind", "zero"}}; break;
    case KernelKind::exponential: j = {{"kind", "exponential"}, {"alpha", k.alpha}, {"beta", k.beta}}; break;
    case KernelKind::rectangular:
        j = {{"kind", "rectangular"}, {"alpha", k.alpha}, {"beta", k.beta}, {"delta", k.delta}};
        break;
    }
}

inline void from_json(const nlohmann::json& j, ParametricKernel& k) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "zero")
        k = ParametricKernel::zero();
    else if (kind == "exponential")
        k = ParametricKernel::exponential(j.at("alpha").get<double>(), j.at("beta").get<double>());
    else if (kind == "rectangular")
        k = ParametricKernel::rectangular(j.at("alpha").get<double>(), j.at("beta").get<double>(),
                                          j.at("delta").get<double>());
    else
        throw std::invalid_argument("unknown kernel kind '" + kind + "'");
    k.validate();
}

inline void to_json(nlohmann::json& j, const PsiSpec& p) {
    if (p.kind == PsiKind::max)
        j = {{"kind", "max"}};
    else
        j = {{"kind", "sigmoid"}, {"shift", p.shift}};
}

inline void from_json(const nlohmann::json& j, PsiSpec& p) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "max")
        p = PsiSpec{};
    else if (kind == "sigmoid")
        p = PsiSpec{PsiKind::sigmoid, j.value("shift", 2.0)};
    else
        throw std::invalid_argument("unknown psi kind '" + kind + "'");
}

inline void to_json(nlohmann::json& j, const NamedRate& r) {
    switch (r.kind) {
    case RateKind::constant: j = {{"kind", "constant"}, {"value", r.value}}; break;
    case RateKind::exponential:
        j = {{"kind", "exponential"}, {"amplitude", r.amplitude}, {"decay", r.decay}};
        break;
    case RateKind::parabola:
        j = {{"kind", "parabola"}, {"coef", r.coef}, {"slope", r.slope}, {"shift", r.shift}};
        break;
    case RateKind::sine:
        j = {{"kind", "sine"},
             {"amplitude", r.amplitude},
             {"frequency", r.frequency},
             {"phase", r.phase},
             {"offset", r.offset}};
        break;
    }
}

inline void from_json(const nlohmann::json& j, NamedRate& r) {
    const auto kind = j.at("kind").get<std::string>();
    static const std::vector<std::string> allowed_keys{"kind",  "value", "amplitude", "decay", "coef", "slope",
                                                       "shift", "frequency", "phase", "offset"};
    for (const auto& [key, _] : j.items())
        if (std::find(allowed_keys.begin(), allowed_keys.end(), key) == allowed_keys.end())
            throw std::invalid_argument("unknown rate key '" + key + "'");
    if (kind == "constant")
        r = NamedRate::constant(j.value("value", 0.5));
    else if (kind == "exponential")
        r = NamedRate::benchmark_exponential();
    else if (kind == "parabola")
        r = NamedRate::benchmark_parabola();
    else if (kind == "sine")
        r = NamedRate::benchmark_sine();
    else
        throw std::invalid_argument("unknown rate kind '" + kind + "'");
    r.amplitude = j.value("amplitude", r.amplitude);
    r.decay = j.value("decay", r.decay);
    r.coef = j.value("coef", r.coef);
    r.slope = j.value("slope", r.slope);
    r.shift = j.value("shift", r.shift);
    r.frequency = j.value("frequency", r.frequency);
    r.phase = j.value("phase", r.phase);
    r.offset = j.value("offset", r.offset);
    r.validate();
}

inline void to_json(nlohmann::json& j, const GroundTruthModel& g) {
    nlohmann::json ks = nlohmann::json::array();
    for (int d = 0; d < g.dims; ++d) {
        nlohmann::json row = nlohmann::json::array();
        for (int jj = 0; jj < g.dims; ++jj) row.push_back(g.kernel(d, jj));
        ks.push_back(std::move(row));
    }
    j = {{"dims", g.dims}, {"base", g.base}, {"kernels", std::move(ks)}, {"psi", g.psi}};
}

inline void from_json(const nlohmann::json& j, GroundTruthModel& g) {
    g.dims = j.at("dims").get<int>();
    g.base = j.at("base").get<std::vector<NamedRate>>();
    g.kernels.clear();
    const auto& rows = j.at("kernels");
    if (rows.size() != static_cast<std::size_t>(g.dims))
        throw std::invalid_argument("ground truth: kernels must be dims x dims");
    for (const auto& row : rows) {
        if (row.size() != static_cast<std::size_t>(g.dims))
            throw std::invalid_argument("ground truth: kernels must be dims x dims");
        for (const auto& k : row) g.kernels.push_back(k.get<ParametricKernel>());
    }
    g.psi = j.contains("psi") ? j.at("psi").get<PsiSpec>() : PsiSpec{};
    g.validate();
}

// ---------------------------------------------------------------------------
// Simulation

struct SimulationOptions {
    /// Length of the window over which the base rate is bounded; 0 picks
    /// T/1000 for time-varying bases and the whole horizon otherwise.
    double lookahead{0.0};
    /// Verify the thinning bound at every proposal (throws std::logic_error).
    bool check_bound{false};
};

namespace detail {

inline double pick_lookahead(double T, bool varying, const SimulationOptions& opt) {
    if (opt.lookahead > 0.0) return opt.lookahead;
    return varying ? T / 1000.0 : T;
}

/// Number of entries of sorted `ts` in [a, b].
inline std::size_t count_in(const std::vector<double>& ts, double a, double b) {
    if (b < a) return 0;
    const auto lo = std::lower_bound(ts.begin(), ts.end(), a);
    const auto hi = std::upper_bound(lo, ts.end(), b);
    return static_cast<std::size_t>(hi - lo);
}

inline double net_max_over(const ReluNet& net, double a, double b) {
    double m = std::max(net_forward(net, a), net_forward(net, b));
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (net.a1[i] == 0.0) continue;
        const double x = -net.b1[i] / net.a1[i];
        if (x > a && x < b) m = std::max(m, net_forward(net, x));
    }
    return std::max(m, 0.0);
}

} // namespace detail

/// Ogata thinning. Returns the events on [0, T) with window [0, T].
[[nodiscard]] inline EventStream simulate_hawkes(const GroundTruthModel& gt, double T, Rng& rng,
                                                 const SimulationOptions& opt = {}) {
    gt.validate();
    if (!std::isfinite(T) || T < 0.0) throw std::invalid_argument("horizon must be finite and non-negative");
    const int D = gt.dims;
    if (T == 0.0) {
        warn("zero horizon: no events simulated");
        return EventStream({}, D, Window{0.0, 0.0});
    }
    bool varying = false;
    for (const auto& b : gt.base) varying = varying || b.kind != RateKind::constant;
    const double L = detail::pick_lookahead(T, varying, opt);
    const auto DD = static_cast<std::size_t>(D) * static_cast<std::size_t>(D);

    std::vector<Event> events;
    std::vector<std::vector<double>> times(D);
    // recursive exponential sums per (d, j), valid at time last[dj]
    std::vector<double> ex(DD, 0.0), last(DD, 0.0);

    auto kernel_now = [&](int d, double s, bool positive_only) {
        double v = 0.0;
        for (int j = 0; j < D; ++j) {
            const auto dj = static_cast<std::size_t>(d) * D + static_cast<std::size_t>(j);
            const auto& k = gt.kernels[dj];
            if (k.kind == KernelKind::exponential) {
                if (positive_only && k.alpha <= 0.0) continue;
                v += ex[dj] * std::exp(-k.beta * (s - last[dj]));
            } else if (k.kind == KernelKind::rectangular) {
                if (positive_only && k.alpha <= 0.0) continue;
                // bound: anything that may still be on at some lag >= s - t_k
                const double hi = positive_only ? s : s - k.delta;
                const double lo = s - k.delta - 1.0 / k.beta;
                v += k.alpha * k.beta * static_cast<double>(detail::count_in(times[j], lo, hi));
            }
        }
        return v;
    };

    std::vector<double> lam(D);
    double t = 0.0;
    while (t < T) {
        const double t_end = std::min(T, t + L);
        double bound = 0.0;
        for (int d = 0; d < D; ++d) {
            if (gt.psi.kind == PsiKind::sigmoid)
                bound += 1.0;
            else
                bound += std::max(gt.base[d].max_over(t, t_end) + kernel_now(d, t, true), 0.0);
        }
        if (!(bound > 0.0)) {
            t = t_end;
            continue;
        }
        const double s = t + rng.exponential(bound);
        if (s > t_end) {
            t = t_end;
            continue;
        }
        double total = 0.0;
        for (int d = 0; d < D; ++d) {
            lam[d] = gt.psi.apply(gt.base[d](s) + kernel_now(d, s, false));
            total += lam[d];
        }
        if (opt.check_bound && total > bound * (1.0 + 1e-12) + 1e-15)
            throw std::logic_error("thinning bound violated at t = " + format_double(s));
        const double u = rng.uniform() * bound;
        t = s;
        if (u >= total) continue;
        int d = 0;
        double acc = lam[0];
        while (d + 1 < D && u >= acc) acc += lam[++d];
        events.push_back(Event{s, d});
        times[d].push_back(s);
        for (int r = 0; r < D; ++r) {
            const auto rd = static_cast<std::size_t>(r) * D + static_cast<std::size_t>(d);
            const auto& k = gt.kernels[rd];
            if (k.kind != KernelKind::exponential) continue;
            ex[rd] = ex[rd] * std::exp(-k.beta * (s - last[rd])) + k.alpha;
            last[rd] = s;
        }
    }
    return EventStream(std::move(events), D, Window{0.0, T});
}

using NhppRate = std::variant<NamedRate, ReluNet>;

/// Lewis thinning for a non-homogeneous Poisson process with rate max(f, 0).
[[nodiscard]] inline EventStream simulate_nhpp(const NhppRate& rate, double T, Rng& rng,
                                               const SimulationOptions& opt = {}) {
    if (!std::isfinite(T) || T < 0.0) throw std::invalid_argument("horizon must be finite and non-negative");
    if (const auto* r = std::get_if<NamedRate>(&rate)) r->validate();
    if (T == 0.0) {
        warn("zero horizon: no events simulated");
        return EventStream({}, 1, Window{0.0, 0.0});
    }
    const bool varying = !(std::holds_alternative<NamedRate>(rate) &&
                           std::get<NamedRate>(rate).kind == RateKind::constant);
    const double L = detail::pick_lookahead(T, varying, opt);
    auto value = [&](double s) {
        return std::visit(
            [s](const auto& f) -> double {
                if constexpr (std::is_same_v<std::decay_t<decltype(f)>, NamedRate>)
                    return f(s);
                else
                    return std::max(net_forward(f, s), 0.0);
            },
            rate);
    };
    auto bound_over = [&](double a, double b) {
        return std::visit(
            [a, b](const auto& f) -> double {
                if constexpr (std::is_same_v<std::decay_t<decltype(f)>, NamedRate>)
                    return f.max_over(a, b);
                else
                    return detail::net_max_over(f, a, b);
            },
            rate);
    };

    std::vector<Event> events;
    double t = 0.0;
    while (t < T) {
        const double t_end = std::min(T, t + L);
        const double bound = bound_over(t, t_end);
        if (!std::isfinite(bound)) throw std::runtime_error("rate has no finite upper bound");
        if (!(bound > 0.0)) {
            t = t_end;
            continue;
        }
        const double s = t + rng.exponential(bound);
        if (s > t_end) {
            t = t_end;
            continue;
        }
        const double v = value(s);
        if (opt.check_bound && v > bound * (1.0 + 1e-12) + 1e-15)
            throw std::logic_error("thinning bound violated at t = " + format_double(s));
        if (rng.uniform() * bound < v) events.push_back(Event{s, 0});
        t = s;
    }
    return EventStream(std::move(events), 1, Window{0.0, T});
}

// ---------------------------------------------------------------------------
// Ground-truth intensity, compensator and likelihood

/// lambda_d(t) before Psi; history strictly before t.
[[nodiscard]] inline double gt_raw_intensity(const GroundTruthModel& gt, int d, double t, const EventStream& h) {
    double v = gt.base[d](t);
    for (int j = 0; j < gt.dims; ++j) {
        const auto& k = gt.kernel(d, j);
        if (k.kind == KernelKind::zero) continue;
        const auto& ts = h.times(j);
        auto it = std::lower_bound(ts.begin(), ts.end(), t - k.cutoff());
        for (; it != ts.end() && *it < t; ++it) v += k.value(t - *it);
    }
    return v;
}

[[nodiscard]] inline double gt_intensity(const GroundTruthModel& gt, int d, double t, const EventStream& h) {
    return gt.psi.apply(gt_raw_intensity(gt, d, t, h));
}

/// True lambda*_d on each grid time; result[d][i].
[[nodiscard]] inline std::vector<std::vector<double>> intensity_trace(const GroundTruthModel& gt,
                                                                      const EventStream& s,
                                                                      const std::vector<double>& grid) {
    std::vector<std::vector<double>> out(gt.dims, std::vector<double>(grid.size()));
    for (int d = 0; d < gt.dims; ++d)
        for (std::size_t i = 0; i < grid.size(); ++i) out[d][i] = gt_intensity(gt, d, grid[i], s);
    return out;
}

namespace detail {

/// lambda_d on a piece [a, b] free of event arrivals and rectangle edges:
/// mu(s) + sum_j c_j exp(-beta_j (s - a)) + r.
struct SmoothPiece {
    const NamedRate* base;
    double a;
    std::vector<std::pair<double, double>> decays;  // (c_j, beta_j)
    double rect{0.0};

    [[nodiscard]] double value(double s) const {
        double v = (*base)(s) + rect;
        for (const auto& [c, b] : decays) v += c * std::exp(-b * (s - a));
        return v;
    }
    [[nodiscard]] double integral(double x, double y) const {
        double v = base->integral(x, y) + rect * (y - x);
        for (const auto& [c, b] : decays) v += c / b * (std::exp(-b * (x - a)) - std::exp(-b * (y - a)));
        return v;
    }
};

inline double integrate_positive(const SmoothPiece& f, double a, double b) {
    constexpr int grid = 16;
    double total = 0.0;
    double x0 = a;
    double f0 = f.value(a);
    for (int k = 1; k <= grid; ++k) {
        const double x1 = k == grid ? b : a + (b - a) * k / grid;
        const double f1 = f.value(x1);
        if (f0 >= 0.0 && f1 >= 0.0) {
            total += f.integral(x0, x1);
        } else if ((f0 > 0.0) != (f1 > 0.0)) {
            double lo = x0, hi = x1;
            const bool rising = f1 > 0.0;
            for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                if ((f.value(mid) > 0.0) == rising)
                    hi = mid;
                else
                    lo = mid;
            }
            const double r = 0.5 * (lo + hi);
            total += rising ? f.integral(r, x1) : f.integral(x0, r);
        }
        x0 = x1;
        f0 = f1;
    }
    return total;
}

inline double integrate_sigmoid(const SmoothPiece& f, const PsiSpec& psi, double a, double b) {
    static constexpr std::array<double, 8> x{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                             -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                             0.7966664774136267,  0.9602898564975363};
    static constexpr std::array<double, 8> w{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                             0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                             0.2223810344533745, 0.1012285362903763};
    double bmax = 1.0;
    for (const auto& [c, beta] : f.decays) bmax = std::max(bmax, beta);
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) * bmax / 0.25)));
    const double h = (b - a) / n;
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        const double lo = a + k * h;
        for (std::size_t q = 0; q < x.size(); ++q) total += w[q] * psi.apply(f.value(lo + 0.5 * h * (x[q] + 1.0)));
    }
    return 0.5 * h * total;
}

} // namespace detail

/// Integral of lambda*_d over [interval.lo, interval.hi] given history h.
[[nodiscard]] inline double gt_compensator(const GroundTruthModel& gt, int d, Window interval, const EventStream& h) {
    const double lo = interval.lo;
    const double hi = interval.hi;
    if (!(hi > lo)) return 0.0;
    std::vector<double> cuts{lo, hi};
    for (int j = 0; j < gt.dims; ++j) {
        const auto& k = gt.kernel(d, j);
        if (k.kind == KernelKind::zero) continue;
        const auto& ts = h.times(j);
        auto it = std::lower_bound(ts.begin(), ts.end(), lo - k.cutoff());
        for (; it != ts.end() && *it < hi; ++it) {
            if (*it > lo) cuts.push_back(*it);
            if (k.kind == KernelKind::rectangular) {
                for (double e : {*it + k.delta, *it + k.delta + 1.0 / k.beta})
                    if (e > lo && e < hi) cuts.push_back(e);
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double total = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double a = cuts[c];
        const double b = cuts[c + 1];
        const double mid = 0.5 * (a + b);
        detail::SmoothPiece piece{&gt.base[d], a, {}, 0.0};
        for (int j = 0; j < gt.dims; ++j) {
            const auto& k = gt.kernel(d, j);
            if (k.kind == KernelKind::zero) continue;
            const auto& ts = h.times(j);
            auto it = std::lower_bound(ts.begin(), ts.end(), a - k.cutoff());
            double cexp = 0.0;
            for (; it != ts.end() && *it <= a; ++it) {
                if (k.kind == KernelKind::exponential)
                    cexp += k.alpha * std::exp(-k.beta * (a - *it));
                else
                    piece.rect += k.value(mid - *it);
            }
            if (cexp != 0.0) piece.decays.emplace_back(cexp, k.beta);
        }
        total += gt.psi.kind == PsiKind::max ? detail::integrate_positive(piece, a, b)
                                             : detail::integrate_sigmoid(piece, gt.psi, a, b);
    }
    return total;
}

/// Same conventions as log_likelihood for fitted models.
[[nodiscard]] inline LikelihoodReport gt_log_likelihood(const GroundTruthModel& gt, const EventStream& s,
                                                        const LikelihoodOptions& opt = {}) {
    gt.validate();
    if (s.dims() != gt.dims) throw std::invalid_argument("model/data dimension mismatch");
    LikelihoodReport rep;
    rep.window = s.window();
    rep.n_events_used = s.size();
    rep.per_dim_ll.assign(gt.dims, 0.0);
    const auto& ev = s.events();
    for (std::size_t i = s.window_begin(); i < ev.size(); ++i) {
        const int d = ev[i].dim;
        const double t = ev[i].time;
        double term = detail::log_term(gt_intensity(gt, d, t, s), opt.log_floor);
        term -= gt_compensator(gt, d, Window{s.interval_start(i), t}, s);
        if (opt.include_tail && s.last_in_window(d) == t) term -= gt_compensator(gt, d, Window{t, s.window().hi}, s);
        rep.per_dim_ll[d] += term;
    }
    const auto counts = s.counts();
    for (int d = 0; d < gt.dims; ++d) {
        if (counts[d] != 0) continue;
        warn("dimension " + std::to_string(d) + " has no events in the likelihood window");
        if (opt.include_tail) rep.per_dim_ll[d] -= gt_compensator(gt, d, s.window(), s);
    }
    for (double v : rep.per_dim_ll) rep.total_ll += v;
    return rep;
}

/// sum log f(t_n) - integral of f over the window, for a known NHPP rate.
[[nodiscard]] inline LikelihoodReport nhpp_true_log_likelihood(const NamedRate& rate, const EventStream& s,
                                                               const LikelihoodOptions& opt = {}) {
    rate.validate();
    if (s.dims() != 1) throw std::invalid_argument("NHPP likelihood needs a one-dimensional stream");
    LikelihoodReport rep;
    rep.window = s.window();
    rep.n_events_used = s.size();
    double ll = 0.0;
    for (const auto& e : s.window_events()) ll += detail::log_term(rate(e.time), opt.log_floor);
    ll -= rate.integral(s.window().lo, s.window().hi);
    rep.per_dim_ll = {ll};
    rep.total_ll = ll;
    return rep;
}

} // namespace nnnh
