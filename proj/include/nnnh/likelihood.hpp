#pragma once

#include "nnnh/events.hpp"
#include "nnnh/intensity.hpp"
#include "nnnh/log.hpp"
#include "nnnh/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nnnh {

struct LikelihoodOptions {
    /// log(lambda) uses max(lambda, log_floor).
    double log_floor{1e-10};
    /// Add the integral from each dimension's last event to the window end.
    bool include_tail{false};
    IntensityOptions intensity{};
    unsigned workers{1};
};

struct LikelihoodReport {
    double total_ll{0.0};
    std::vector<double> per_dim_ll;
    std::size_t n_events_used{0};
    Window window{};
};

inline void to_json(nlohmann::json& j, const LikelihoodReport& r) {
    j = nlohmann::json{{"total_ll", r.total_ll},
                       {"nll", -r.total_ll},
                       {"per_dim_ll", r.per_dim_ll},
                       {"n_events_used", r.n_events_used},
                       {"window", {r.window.lo, r.window.hi}}};
}

namespace detail {

/// Runs fn(begin, end, worker) over [0, n) split into contiguous chunks.
template <class Fn>
void parallel_chunks(std::size_t n, unsigned workers, Fn&& fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        fn(std::size_t{0}, n, 0u);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = std::min(n, w * chunk);
        const std::size_t e = std::min(n, b + chunk);
        pool.emplace_back([&fn, b, e, w] { fn(b, e, w); });
    }
    for (auto& t : pool) t.join();
}

inline double log_term(double raw, double floor) { return std::log(std::max(std::max(raw, 0.0), floor)); }

/// Likelihood contribution of window event `w`:
///   log lambda*_d(t_n) - integral of lambda*_d over (t_{n-1}^d, t_n^d]
/// (plus the tail to the window end for the last event of its dimension when
/// include_tail is set). Adds scale * gradient to `grad` when non-empty.
inline double event_term(const HawkesModel& m, const ParameterLayout* layout, const EventStream& s, std::size_t w,
                         const LikelihoodOptions& opt, std::span<double> grad, double scale) {
    const std::size_t i = s.window_begin() + w;
    const Event e = s.events().at(i);
    const double lo = s.interval_start(i);
    const bool want_grad = !grad.empty();

    const auto ts = collect_terms(m, want_grad ? layout : nullptr, e.dim, lo, e.time, s, opt.intensity);
    const double raw = value_at(ts, e.time);
    double term = log_term(raw, opt.log_floor);
    if (want_grad && raw > 0.0 && raw >= opt.log_floor) accumulate_value_gradient(ts, e.time, grad, scale / raw);

    const auto sw = sweep(ts, lo, e.time, false);
    term -= sw.result.value;
    if (want_grad) accumulate_integral_gradient(ts, sw.positive, lo, e.time, grad, -scale);

    if (opt.include_tail && s.last_in_window(e.dim) == e.time) {
        const double hi = s.window().hi;
        const auto tail_ts = collect_terms(m, want_grad ? layout : nullptr, e.dim, e.time, hi, s, opt.intensity);
        const auto tail = sweep(tail_ts, e.time, hi, false);
        term -= tail.result.value;
        if (want_grad) accumulate_integral_gradient(tail_ts, tail.positive, e.time, hi, grad, -scale);
    }
    return term;
}

} // namespace detail

/// Exact compensator value (no segment records).
[[nodiscard]] inline double compensator_value(const HawkesModel& m, int d, Window interval, const EventStream& h,
                                              const IntensityOptions& opt = {}) {
    const auto ts = detail::collect_terms(m, nullptr, d, interval.lo, interval.hi, h, opt);
    return detail::sweep(ts, interval.lo, interval.hi, false).result.value;
}

[[nodiscard]] inline LikelihoodReport log_likelihood(const HawkesModel& m, const EventStream& s,
                                                     const LikelihoodOptions& opt = {}) {
    if (s.dims() != m.dims) throw std::invalid_argument("model/data dimension mismatch");
    LikelihoodReport rep;
    rep.window = s.window();
    rep.n_events_used = s.size();
    rep.per_dim_ll.assign(m.dims, 0.0);

    const unsigned workers = std::max(1u, opt.workers);
    std::vector<std::vector<double>> partial(workers, std::vector<double>(m.dims, 0.0));
    detail::parallel_chunks(s.size(), workers, [&](std::size_t b, std::size_t e, unsigned wk) {
        for (std::size_t w = b; w < e; ++w) {
            const int d = s.events()[s.window_begin() + w].dim;
            partial[wk][d] += detail::event_term(m, nullptr, s, w, opt, {}, 1.0);
        }
    });
    for (const auto& p : partial)
        for (int d = 0; d < m.dims; ++d) rep.per_dim_ll[d] += p[d];

    const auto counts = s.counts();
    for (int d = 0; d < m.dims; ++d) {
        if (counts[d] != 0) continue;
        warn("dimension " + std::to_string(d) + " has no events in the likelihood window");
        if (opt.include_tail) rep.per_dim_ll[d] -= compensator_value(m, d, s.window(), s, opt.intensity);
    }
    rep.total_ll = std::accumulate(rep.per_dim_ll.begin(), rep.per_dim_ll.end(), 0.0);
    return rep;
}

/// Single-event unbiased gradient (ascent direction of the log-likelihood).
/// `w` indexes the window events.
[[nodiscard]] inline std::vector<double> event_gradient(const HawkesModel& m, const EventStream& s, std::size_t w,
                                                        const LikelihoodOptions& opt = {}) {
    if (w >= s.size()) throw std::out_of_range("event index outside the window");
    const auto layout = parameter_layout(m);
    std::vector<double> grad(layout.total, 0.0);
    detail::event_term(m, &layout, s, w, opt, grad, 1.0);
    return grad;
}

struct BatchResult {
    double mean_term{0.0};  // mean per-event log-likelihood contribution
    std::vector<double> gradient;
};

/// Mean of event terms and event gradients over `batch`.
[[nodiscard]] inline BatchResult batch_evaluate(const HawkesModel& m, const EventStream& s,
                                                std::span<const std::size_t> batch,
                                                const LikelihoodOptions& opt = {}) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    for (auto w : batch)
        if (w >= s.size()) throw std::out_of_range("batch index outside the window");
    const auto layout = parameter_layout(m);
    const unsigned workers = std::max(1u, opt.workers);
    std::vector<std::vector<double>> grads(workers, std::vector<double>(layout.total, 0.0));
    std::vector<double> sums(workers, 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    detail::parallel_chunks(batch.size(), workers, [&](std::size_t b, std::size_t e, unsigned wk) {
        for (std::size_t k = b; k < e; ++k) sums[wk] += detail::event_term(m, &layout, s, batch[k], opt, grads[wk], scale);
    });
    BatchResult r{0.0, std::move(grads[0])};
    r.mean_term = sums[0];
    for (unsigned wk = 1; wk < workers; ++wk) {
        r.mean_term += sums[wk];
        for (std::size_t q = 0; q < r.gradient.size(); ++q) r.gradient[q] += grads[wk][q];
    }
    r.mean_term *= scale;
    return r;
}

[[nodiscard]] inline std::vector<double> batch_gradient(const HawkesModel& m, const EventStream& s,
                                                        std::span<const std::size_t> batch,
                                                        const LikelihoodOptions& opt = {}) {
    return batch_evaluate(m, s, batch, opt).gradient;
}

// ---------------------------------------------------------------------------
// Non-homogeneous Poisson process: mu(t) = max(net(t), 0), parameters a1|b1|a2|b2.

namespace detail {

inline TermSet nhpp_terms(const ReluNet& net, bool track) {
    TermSet ts;
    ts.terms.push_back(NetTerm{&net, 0.0, false, track ? std::size_t{0} : no_offset, true});
    return ts;
}

inline double nhpp_event_term(const ReluNet& net, const EventStream& s, std::size_t w, const LikelihoodOptions& opt,
                              std::span<double> grad, double scale) {
    const std::size_t i = s.window_begin() + w;
    const double t = s.events().at(i).time;
    const double lo = s.interval_start(i);
    const bool want_grad = !grad.empty();
    const auto ts = nhpp_terms(net, want_grad);
    const double raw = value_at(ts, t);
    double term = log_term(raw, opt.log_floor);
    if (want_grad && raw > 0.0 && raw >= opt.log_floor) accumulate_value_gradient(ts, t, grad, scale / raw);
    double hi = t;
    if (w + 1 == s.size()) hi = s.window().hi;  // last event carries the tail
    auto sw = sweep(ts, lo, hi, false);
    term -= sw.result.value;
    if (want_grad) accumulate_integral_gradient(ts, sw.positive, lo, hi, grad, -scale);
    return term;
}

} // namespace detail

/// sum log mu(t_n) - integral of mu over the window.
[[nodiscard]] inline LikelihoodReport nhpp_log_likelihood(const ReluNet& net, const EventStream& s,
                                                          const LikelihoodOptions& opt = {}) {
    if (s.dims() != 1) throw std::invalid_argument("NHPP likelihood needs a one-dimensional stream");
    LikelihoodReport rep;
    rep.window = s.window();
    rep.n_events_used = s.size();
    const auto ts = detail::nhpp_terms(net, false);
    double ll = 0.0;
    for (const auto& e : s.window_events()) ll += detail::log_term(detail::value_at(ts, e.time), opt.log_floor);
    if (s.empty()) warn("NHPP likelihood window has no events");
    ll -= detail::sweep(ts, s.window().lo, s.window().hi, false).result.value;
    rep.per_dim_ll = {ll};
    rep.total_ll = ll;
    return rep;
}

[[nodiscard]] inline std::vector<double> nhpp_event_gradient(const ReluNet& net, const EventStream& s, std::size_t w,
                                                             const LikelihoodOptions& opt = {}) {
    if (w >= s.size()) throw std::out_of_range("event index outside the window");
    std::vector<double> grad(net_param_count(net, true), 0.0);
    detail::nhpp_event_term(net, s, w, opt, grad, 1.0);
    return grad;
}

[[nodiscard]] inline BatchResult nhpp_batch_evaluate(const ReluNet& net, const EventStream& s,
                                                     std::span<const std::size_t> batch,
                                                     const LikelihoodOptions& opt = {}) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    BatchResult r{0.0, std::vector<double>(net_param_count(net, true), 0.0)};
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (auto w : batch) {
        if (w >= s.size()) throw std::out_of_range("batch index outside the window");
        r.mean_term += detail::nhpp_event_term(net, s, w, opt, r.gradient, scale);
    }
    r.mean_term *= scale;
    return r;
}

} // namespace nnnh
