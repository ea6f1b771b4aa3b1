#pragma once

#include "nnnh/events.hpp"
#include "nnnh/log.hpp"
#include "nnnh/model.hpp"
#include "nnnh/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnnh {

struct IntensityOptions {
    /// History older than this lag is ignored for kernels whose support is
    /// longer (or infinite). Exact whenever every kernel support is shorter.
    double max_lag{100.0};
    /// Throw instead of truncating when an infinite-support kernel meets
    /// history older than max_lag.
    bool error_on_unbounded_tail{false};
};

class UnboundedTailError : public std::runtime_error {
public:
    UnboundedTailError() : std::runtime_error("unbounded kernel tail") {}
};

enum class CrossingOrigin { kernel_unit, base_unit, intensity_sign };

struct Crossing {
    double x;
    CrossingOrigin origin;
    int dim{-1};               // source dimension j of the past event
    std::size_t event{0};      // index into history.times(dim)
    std::size_t unit{0};       // hidden unit
};

struct CrossingSet {
    Window interval;
    std::vector<Crossing> crossings;  // sorted by x

    [[nodiscard]] std::vector<double> positions() const {
        std::vector<double> xs;
        xs.reserve(crossings.size());
        for (const auto& c : crossings) xs.push_back(c.x);
        return xs;
    }
};

/// lambda(s) = start_value + slope * (s - lo) on [lo, hi].
struct Segment {
    double lo;
    double hi;
    double start_value;
    double slope;

    [[nodiscard]] double end_value() const { return start_value + slope * (hi - lo); }
};

struct CompensatorResult {
    double value{0.0};
    std::vector<Segment> segments;
    std::vector<double> sign_crossings;  // where max(lambda, 0) switches on/off inside a segment
};

namespace detail {

inline constexpr std::size_t no_offset = std::numeric_limits<std::size_t>::max();

/// One network evaluated at (s - origin).
struct NetTerm {
    const ReluNet* net;
    double origin;
    bool causal;            // contributes only for s > origin
    std::size_t offset;     // parameter block, or no_offset
    bool bias_param;        // b2 is a tracked parameter
    int source_dim{-1};
    std::size_t source_event{0};
};

struct TermSet {
    double constant{0.0};
    std::size_t constant_offset{no_offset};
    std::vector<NetTerm> terms;
};

/// Everything that can influence lambda_d on (lo, hi]: the base and every
/// history event t_k^j < hi within the kernel's lag cap of lo.
inline TermSet collect_terms(const HawkesModel& m, const ParameterLayout* layout, int d, double lo, double hi,
                             const EventStream& h, const IntensityOptions& opt) {
    TermSet ts;
    const bool track = layout != nullptr;
    if (const auto* bn = std::get_if<ReluNet>(&m.base[d])) {
        ts.terms.push_back(NetTerm{bn, 0.0, false, track ? layout->base_offset[d] : no_offset, true});
    } else {
        ts.constant = std::get<ConstantRate>(m.base[d]).mu;
        ts.constant_offset = track ? layout->base_offset[d] : no_offset;
    }
    for (int j = 0; j < m.dims; ++j) {
        const ReluNet& k = m.kernel(d, j);
        const auto& times = h.times(j);
        if (times.empty()) continue;
        const double support = kernel_support(k);
        const double cap = std::min(support, opt.max_lag);
        const auto first = std::lower_bound(times.begin(), times.end(), lo - cap);
        const auto last = std::lower_bound(times.begin(), times.end(), hi);
        if (support > opt.max_lag && first != times.begin()) {
            if (std::isinf(support) && opt.error_on_unbounded_tail) throw UnboundedTailError();
            warn_once("max_lag_truncation",
                      "kernel support exceeds max_lag; history older than max_lag is ignored (approximation)");
        }
        const std::size_t koff =
            track ? layout->kernel_offset[static_cast<std::size_t>(d) * m.dims + static_cast<std::size_t>(j)]
                  : no_offset;
        for (auto it = first; it != last; ++it)
            ts.terms.push_back(NetTerm{&k, *it, true, koff, m.train_kernel_bias, j,
                                       static_cast<std::size_t>(it - times.begin())});
    }
    return ts;
}

/// Value at t. Causal terms must have origin < t (guaranteed by collect_terms(hi = t)).
inline double value_at(const TermSet& ts, double t) {
    double v = ts.constant;
    for (const auto& term : ts.terms) {
        if (term.causal && !(term.origin < t)) continue;
        v += net_forward(*term.net, t - term.origin);
    }
    return v;
}

/// Adds scale * d(raw lambda(t))/d(theta) to grad.
inline void accumulate_value_gradient(const TermSet& ts, double t, std::span<double> grad, double scale) {
    if (ts.constant_offset != no_offset) grad[ts.constant_offset] += scale;
    for (const auto& term : ts.terms) {
        if (term.offset == no_offset) continue;
        if (term.causal && !(term.origin < t)) continue;
        const ReluNet& net = *term.net;
        const std::size_t p = net.size();
        const double x = t - term.origin;
        double* g = grad.data() + term.offset;
        for (std::size_t i = 0; i < p; ++i) {
            const double z = net.a1[i] * x + net.b1[i];
            if (!(z > 0.0)) continue;
            g[i] += scale * net.a2[i] * x;
            g[p + i] += scale * net.a2[i];
            g[2 * p + i] += scale * z;
        }
        if (term.bias_param) g[3 * p] += scale;
    }
}

/// Set where lambda > 0, as disjoint sorted intervals, with prefix sums of
/// measure and first moment about `lo` for O(log n) interval queries.
class PositiveSet {
public:
    explicit PositiveSet(double lo = 0.0) : lo_(lo) {}

    void add(double a, double b) {
        if (!(b > a)) return;
        if (!end_.empty() && end_.back() == a) {
            // merge contiguous pieces
            const double a0 = start_.back();
            cum_m_.pop_back();
            cum_s_.pop_back();
            start_.pop_back();
            end_.pop_back();
            a = a0;
        }
        const double m0 = cum_m_.empty() ? 0.0 : cum_m_.back() + (end_.back() - start_.back());
        const double s0 = cum_s_.empty() ? 0.0 : cum_s_.back() + moment(start_.back(), end_.back());
        start_.push_back(a);
        end_.push_back(b);
        cum_m_.push_back(m0);
        cum_s_.push_back(s0);
    }

    struct Moments {
        double measure{0.0};
        double moment{0.0};  // integral of (s - lo) ds
    };

    /// Moments of P intersected with [lo, x].
    [[nodiscard]] Moments prefix(double x) const {
        const auto it = std::upper_bound(start_.begin(), start_.end(), x);
        if (it == start_.begin()) return {};
        const auto i = static_cast<std::size_t>(it - start_.begin()) - 1;
        const double u = std::min(x, end_[i]);
        return {cum_m_[i] + (u - start_[i]), cum_s_[i] + moment(start_[i], u)};
    }

    /// Moments of P intersected with [a, b].
    [[nodiscard]] Moments over(double a, double b) const {
        if (!(b > a)) return {};
        const auto hi = prefix(b);
        const auto lo = prefix(a);
        return {hi.measure - lo.measure, hi.moment - lo.moment};
    }

    [[nodiscard]] double measure() const {
        return end_.empty() ? 0.0 : cum_m_.back() + (end_.back() - start_.back());
    }
    [[nodiscard]] bool empty() const { return start_.empty(); }

private:
    [[nodiscard]] double moment(double a, double b) const { return (b - a) * (0.5 * (a + b) - lo_); }

    double lo_;
    std::vector<double> start_, end_, cum_m_, cum_s_;
};

struct Sweep {
    CompensatorResult result;
    PositiveSet positive;
};

struct Breakpoint {
    double x;
    double dv;
    double dslope;
};

/// Exact integral of max(lambda, 0) over [lo, hi]. lambda is piecewise affine
/// between unit crossings and event arrivals; each piece is integrated in
/// closed form after splitting at its sign change.
inline Sweep sweep(const TermSet& ts, double lo, double hi, bool keep_segments = true) {
    Sweep out{CompensatorResult{}, PositiveSet(lo)};
    if (!(hi > lo)) return out;

    double v = ts.constant;
    double slope = 0.0;
    std::vector<Breakpoint> bps;
    for (const auto& term : ts.terms) {
        const ReluNet& net = *term.net;
        const std::size_t p = net.size();
        const bool alive = !term.causal || term.origin <= lo;
        if (alive) {
            const double x0 = lo - term.origin;
            v += net.b2;
            for (std::size_t i = 0; i < p; ++i) {
                const double a = net.a1[i];
                const double z = a * x0 + net.b1[i];
                // activity decided from the crossing position so that the
                // toggles below stay consistent with the initial state
                const double xc = a != 0.0 ? term.origin - net.b1[i] / a : 0.0;
                const bool on = a == 0.0 ? z > 0.0 : (a < 0.0 ? xc > lo : xc <= lo);
                if (on) {
                    v += net.a2[i] * std::max(z, 0.0);
                    slope += net.a2[i] * a;
                }
                if (a != 0.0 && xc > lo && xc < hi)
                    bps.push_back({xc, 0.0, (a > 0.0 ? 1.0 : -1.0) * net.a2[i] * a});
            }
        } else {
            double dv = net.b2;
            double ds = 0.0;
            for (std::size_t i = 0; i < p; ++i) {
                const double a = net.a1[i];
                const double b = net.b1[i];
                const double xc = a != 0.0 ? term.origin - b / a : 0.0;
                const bool on = a == 0.0 ? b > 0.0 : (a < 0.0 ? xc > term.origin : xc <= term.origin);
                if (on) {
                    dv += net.a2[i] * std::max(b, 0.0);
                    ds += net.a2[i] * a;
                }
                if (a != 0.0 && xc > term.origin && xc < hi)
                    bps.push_back({xc, 0.0, (a > 0.0 ? 1.0 : -1.0) * net.a2[i] * a});
            }
            bps.push_back({term.origin, dv, ds});
        }
    }
    std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) { return a.x < b.x; });

    auto& res = out.result;
    if (keep_segments) res.segments.reserve(bps.size() + 1);
    double s = lo;
    auto close_segment = [&](double x) {
        if (!(x > s)) return;
        const double len = x - s;
        const double v_end = v + slope * len;
        if (keep_segments) res.segments.push_back(Segment{s, x, v, slope});
        if (std::abs(slope) < 1e-14) {
            if (v + 0.5 * slope * len > 0.0) {
                res.value += 0.5 * (v + v_end) * len;
                out.positive.add(s, x);
            }
        } else if (v >= 0.0 && v_end >= 0.0) {
            if (v > 0.0 || v_end > 0.0) {
                res.value += 0.5 * (v + v_end) * len;
                out.positive.add(s, x);
            }
        } else if (v > 0.0) {  // v_end < 0
            const double r = std::min(x, s + v / (v - v_end) * len);
            res.value += 0.5 * v * (r - s);
            out.positive.add(s, r);
            res.sign_crossings.push_back(r);
        } else if (v_end > 0.0) {  // v < 0
            const double r = std::max(s, s + v / (v - v_end) * len);
            res.value += 0.5 * v_end * (x - r);
            out.positive.add(r, x);
            res.sign_crossings.push_back(r);
        }
        v = v_end;
        s = x;
    };
    for (std::size_t k = 0; k < bps.size();) {
        const double x = bps[k].x;
        close_segment(x);
        // coincident breakpoints collapse into one
        for (; k < bps.size() && bps[k].x == x; ++k) {
            v += bps[k].dv;
            slope += bps[k].dslope;
        }
    }
    close_segment(hi);
    return out;
}

/// Adds scale * d(integral of max(lambda,0) over [lo,hi])/d(theta), holding
/// activation indicators fixed.
inline void accumulate_integral_gradient(const TermSet& ts, const PositiveSet& P, double lo, double hi,
                                         std::span<double> grad, double scale) {
    if (P.empty()) return;
    if (ts.constant_offset != no_offset) grad[ts.constant_offset] += scale * P.measure();
    for (const auto& term : ts.terms) {
        if (term.offset == no_offset) continue;
        const ReluNet& net = *term.net;
        const std::size_t p = net.size();
        const double start = term.causal ? std::max(lo, term.origin) : lo;
        if (!(hi > start)) continue;
        const double shift = lo - term.origin;  // (s - origin) = (s - lo) + shift
        double* g = grad.data() + term.offset;
        for (std::size_t i = 0; i < p; ++i) {
            const double a = net.a1[i];
            const double b = net.b1[i];
            double ua = start;
            double ub = hi;
            if (a > 0.0) {
                ua = std::max(start, term.origin - b / a);
            } else if (a < 0.0) {
                ub = std::min(hi, term.origin - b / a);
            } else if (!(b > 0.0)) {
                continue;
            }
            if (!(ub > ua)) continue;
            const auto mo = P.over(ua, ub);
            if (mo.measure == 0.0) continue;
            const double first = mo.moment + shift * mo.measure;  // integral of (s - origin)
            g[i] += scale * net.a2[i] * first;
            g[p + i] += scale * net.a2[i] * mo.measure;
            g[2 * p + i] += scale * (a * first + b * mo.measure);
        }
        if (term.bias_param) g[3 * p] += scale * P.over(start, hi).measure;
    }
}

} // namespace detail

/// lambda_d(t) before rectification; history strictly before t.
[[nodiscard]] inline double raw_intensity(const HawkesModel& m, int d, double t, const EventStream& h,
                                          const IntensityOptions& opt = {}) {
    return detail::value_at(detail::collect_terms(m, nullptr, d, t, t, h, opt), t);
}

[[nodiscard]] inline double intensity(const HawkesModel& m, int d, double t, const EventStream& h,
                                      const IntensityOptions& opt = {}) {
    return std::max(raw_intensity(m, d, t, h, opt), 0.0);
}

/// Unit zero-crossings t_k^j - b1/a1 (kernels) and -b1/a1 (base net) inside the interval.
[[nodiscard]] inline CrossingSet zero_crossings(const HawkesModel& m, int d, Window interval, const EventStream& h,
                                                const IntensityOptions& opt = {}) {
    if (interval.lo > interval.hi) throw std::invalid_argument("zero_crossings: lo > hi");
    CrossingSet cs{interval, {}};
    const auto ts = detail::collect_terms(m, nullptr, d, interval.lo, interval.hi, h, opt);
    for (const auto& term : ts.terms) {
        const ReluNet& net = *term.net;
        for (std::size_t i = 0; i < net.size(); ++i) {
            if (net.a1[i] == 0.0) continue;
            const double x = term.origin - net.b1[i] / net.a1[i];
            if (x < interval.lo || x > interval.hi) continue;
            cs.crossings.push_back(Crossing{x, term.causal ? CrossingOrigin::kernel_unit : CrossingOrigin::base_unit,
                                            term.source_dim, term.source_event, i});
        }
    }
    std::stable_sort(cs.crossings.begin(), cs.crossings.end(),
                     [](const Crossing& a, const Crossing& b) { return a.x < b.x; });
    return cs;
}

/// Exact integral of max(lambda_d, 0) over the interval.
[[nodiscard]] inline CompensatorResult compensator(const HawkesModel& m, int d, Window interval, const EventStream& h,
                                                   const IntensityOptions& opt = {}) {
    if (interval.lo > interval.hi) throw std::invalid_argument("compensator: lo > hi");
    const auto ts = detail::collect_terms(m, nullptr, d, interval.lo, interval.hi, h, opt);
    return detail::sweep(ts, interval.lo, interval.hi).result;
}

/// Gradient of the compensator over the flat parameter vector.
[[nodiscard]] inline std::vector<double> compensator_gradient(const HawkesModel& m, int d, Window interval,
                                                              const EventStream& h, const IntensityOptions& opt = {}) {
    if (interval.lo > interval.hi) throw std::invalid_argument("compensator_gradient: lo > hi");
    const auto layout = parameter_layout(m);
    std::vector<double> grad(layout.total, 0.0);
    const auto ts = detail::collect_terms(m, &layout, d, interval.lo, interval.hi, h, opt);
    const auto sw = detail::sweep(ts, interval.lo, interval.hi, false);
    detail::accumulate_integral_gradient(ts, sw.positive, interval.lo, interval.hi, grad, 1.0);
    return grad;
}

} // namespace nnnh
