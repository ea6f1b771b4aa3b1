#pragma once

#include "nnnh/events.hpp"
#include "nnnh/intensity.hpp"
#include "nnnh/likelihood.hpp"
#include "nnnh/model.hpp"
#include "nnnh/simulate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nnnh {

[[nodiscard]] inline double test_nll(const HawkesModel& m, const EventStream& test, const LikelihoodOptions& opt = {}) {
    return -log_likelihood(m, test, opt).total_ll;
}

/// Compensator increments between consecutive same-dimension events.
struct ResidualSeries {
    std::vector<std::vector<double>> per_dim;

    [[nodiscard]] std::vector<double> pooled() const {
        std::vector<double> all;
        for (const auto& r : per_dim) all.insert(all.end(), r.begin(), r.end());
        return all;
    }
    [[nodiscard]] std::size_t size() const {
        std::size_t n = 0;
        for (const auto& r : per_dim) n += r.size();
        return n;
    }
};

/// Increment for window event i is comp(d, [interval_start(i), t_i]).
template <class Compensator>
[[nodiscard]] ResidualSeries rescaled_residuals(const EventStream& s, Compensator&& comp) {
    ResidualSeries out;
    out.per_dim.assign(s.dims(), {});
    const auto& ev = s.events();
    for (std::size_t i = s.window_begin(); i < ev.size(); ++i) {
        const double inc = comp(ev[i].dim, Window{s.interval_start(i), ev[i].time});
        out.per_dim[ev[i].dim].push_back(std::max(inc, 0.0));
    }
    return out;
}

[[nodiscard]] inline ResidualSeries rescaled_residuals(const HawkesModel& m, const EventStream& s,
                                                       const IntensityOptions& opt = {}) {
    if (s.dims() != m.dims) throw std::invalid_argument("model/data dimension mismatch");
    return rescaled_residuals(s, [&](int d, Window w) { return compensator_value(m, d, w, s, opt); });
}

[[nodiscard]] inline ResidualSeries rescaled_residuals(const GroundTruthModel& gt, const EventStream& s) {
    if (s.dims() != gt.dims) throw std::invalid_argument("model/data dimension mismatch");
    return rescaled_residuals(s, [&](int d, Window w) { return gt_compensator(gt, d, w, s); });
}

[[nodiscard]] inline ResidualSeries rescaled_residuals(const ReluNet& rate, const EventStream& s) {
    if (s.dims() != 1) throw std::invalid_argument("NHPP residuals need a one-dimensional stream");
    const auto ts = detail::nhpp_terms(rate, false);
    return rescaled_residuals(s, [&](int, Window w) { return detail::sweep(ts, w.lo, w.hi, false).result.value; });
}

[[nodiscard]] inline ResidualSeries rescaled_residuals(const NamedRate& rate, const EventStream& s) {
    if (s.dims() != 1) throw std::invalid_argument("NHPP residuals need a one-dimensional stream");
    return rescaled_residuals(s, [&](int, Window w) { return rate.integral(w.lo, w.hi); });
}

struct QQPoint {
    double theoretical;
    double empirical;
};

/// Sorted sample against Exp(1) quantiles at (k - 0.5) / n.
[[nodiscard]] inline std::vector<QQPoint> qq_points(std::vector<double> sample) {
    if (sample.empty()) throw std::invalid_argument("qq_points: empty sample");
    std::sort(sample.begin(), sample.end());
    const auto n = static_cast<double>(sample.size());
    std::vector<QQPoint> pts(sample.size());
    for (std::size_t k = 0; k < sample.size(); ++k) {
        const double p = (static_cast<double>(k) + 0.5) / n;
        pts[k] = {-std::log1p(-p), sample[k]};
    }
    return pts;
}

[[nodiscard]] inline std::vector<QQPoint> qq_points(const ResidualSeries& r) { return qq_points(r.pooled()); }

/// Least-squares slope of empirical on theoretical quantiles.
[[nodiscard]] inline double qq_slope(const std::vector<QQPoint>& pts) {
    if (pts.size() < 2) throw std::invalid_argument("qq_slope: need at least two points");
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p.theoretical;
        my += p.empirical;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& p : pts) {
        sxy += (p.theoretical - mx) * (p.empirical - my);
        sxx += (p.theoretical - mx) * (p.theoretical - mx);
    }
    return sxy / sxx;
}

struct KsResult {
    double statistic{0.0};
    double p_value{1.0};
    std::size_t n{0};
};

/// P(K > x) for the Kolmogorov distribution.
[[nodiscard]] inline double kolmogorov_survival(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 0.3) {
        // alternating series converges slowly here; use the dual form
        const double pi2 = std::numbers::pi * std::numbers::pi;
        double s = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double odd = 2.0 * k - 1.0;
            s += std::exp(-odd * odd * pi2 / (8.0 * x * x));
        }
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

/// One-sample KS test against a continuous CDF. The p-value uses the
/// asymptotic Kolmogorov law with the (sqrt(n) + 0.12 + 0.11/sqrt(n)) correction.
template <class Cdf>
[[nodiscard]] KsResult ks_test(std::vector<double> sample, Cdf&& cdf) {
    if (sample.empty()) throw std::invalid_argument("ks_test: empty sample");
    std::sort(sample.begin(), sample.end());
    const auto n = static_cast<double>(sample.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double F = cdf(sample[i]);
        dmax = std::max({dmax, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
    }
    const double rn = std::sqrt(n);
    return {dmax, kolmogorov_survival((rn + 0.12 + 0.11 / rn) * dmax), sample.size()};
}

[[nodiscard]] inline KsResult ks_test_exponential(std::vector<double> sample, double rate = 1.0) {
    return ks_test(std::move(sample), [rate](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); });
}

// ---------------------------------------------------------------------------
// Grids

[[nodiscard]] inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {lo};
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    g.back() = hi;
    return g;
}

[[nodiscard]] inline std::vector<double> kernel_grid(const HawkesModel& m, int d, int j,
                                                     const std::vector<double>& lags) {
    std::vector<double> v(lags.size());
    for (std::size_t i = 0; i < lags.size(); ++i) v[i] = net_forward(m.kernel(d, j), lags[i]);
    return v;
}

[[nodiscard]] inline std::vector<double> base_grid(const HawkesModel& m, int d, const std::vector<double>& times) {
    std::vector<double> v(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) v[i] = m.base_value(d, times[i]);
    return v;
}

/// Kernel of a model fitted on scaled times, expressed in original units:
/// phi(t) = f * phi_hat(f t).
[[nodiscard]] inline std::vector<double> kernel_grid_original(const HawkesModel& m, int d, int j,
                                                              const std::vector<double>& lags, const ScaleInfo& sc) {
    std::vector<double> v(lags.size());
    for (std::size_t i = 0; i < lags.size(); ++i) v[i] = sc.factor * net_forward(m.kernel(d, j), sc.factor * lags[i]);
    return v;
}

[[nodiscard]] inline std::vector<double> base_grid_original(const HawkesModel& m, int d,
                                                            const std::vector<double>& times, const ScaleInfo& sc) {
    std::vector<double> v(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) v[i] = sc.factor * m.base_value(d, sc.factor * times[i]);
    return v;
}

struct GridDump {
    std::vector<double> lags;
    std::vector<std::vector<std::vector<double>>> kernels;  // [d][j][i]
    std::vector<double> times;
    std::vector<std::vector<double>> base;                   // [d][i]
};

[[nodiscard]] inline GridDump make_grid_dump(const HawkesModel& m, std::vector<double> lags, std::vector<double> times,
                                             const ScaleInfo* sc = nullptr) {
    for (const auto* g : {&lags, &times})
        for (std::size_t i = 1; i < g->size(); ++i)
            if (!((*g)[i] > (*g)[i - 1])) throw std::invalid_argument("grid must be strictly increasing");
    GridDump out{std::move(lags), {}, std::move(times), {}};
    out.kernels.assign(m.dims, std::vector<std::vector<double>>(m.dims));
    out.base.assign(m.dims, {});
    for (int d = 0; d < m.dims; ++d) {
        for (int j = 0; j < m.dims; ++j)
            out.kernels[d][j] = sc ? kernel_grid_original(m, d, j, out.lags, *sc) : kernel_grid(m, d, j, out.lags);
        out.base[d] = sc ? base_grid_original(m, d, out.times, *sc) : base_grid(m, d, out.times);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dumps

/// 64-bit FNV-1a over the model's JSON text, as 16 hex digits.
[[nodiscard]] inline std::string model_hash(const nlohmann::json& model) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : model.dump()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

inline void write_sidecar(const std::string& csv_path, const nlohmann::json& meta) {
    auto out = open_out(csv_path + ".json");
    out << meta.dump(2) << '\n';
}

} // namespace detail

inline void write_grid_csv(const std::string& kernel_path, const std::string& base_path, const GridDump& g,
                           nlohmann::json meta) {
    const auto D = g.base.size();
    {
        auto out = detail::open_out(kernel_path);
        out << "lag";
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t j = 0; j < D; ++j) out << ",phi_" << d << '_' << j;
        out << '\n';
        for (std::size_t i = 0; i < g.lags.size(); ++i) {
            out << format_double(g.lags[i]);
            for (std::size_t d = 0; d < D; ++d)
                for (std::size_t j = 0; j < D; ++j) out << ',' << format_double(g.kernels[d][j][i]);
            out << '\n';
        }
    }
    {
        auto out = detail::open_out(base_path);
        out << "time";
        for (std::size_t d = 0; d < D; ++d) out << ",mu_" << d;
        out << '\n';
        for (std::size_t i = 0; i < g.times.size(); ++i) {
            out << format_double(g.times[i]);
            for (std::size_t d = 0; d < D; ++d) out << ',' << format_double(g.base[d][i]);
            out << '\n';
        }
    }
    auto km = meta;
    km["grid"] = {{"lo", g.lags.empty() ? 0.0 : g.lags.front()},
                  {"hi", g.lags.empty() ? 0.0 : g.lags.back()},
                  {"n", g.lags.size()}};
    detail::write_sidecar(kernel_path, km);
    auto bm = meta;
    bm["grid"] = {{"lo", g.times.empty() ? 0.0 : g.times.front()},
                  {"hi", g.times.empty() ? 0.0 : g.times.back()},
                  {"n", g.times.size()}};
    detail::write_sidecar(base_path, bm);
}

inline void write_residuals_csv(const std::string& path, const ResidualSeries& r, nlohmann::json meta) {
    auto out = detail::open_out(path);
    out << "dim,index,increment\n";
    for (std::size_t d = 0; d < r.per_dim.size(); ++d)
        for (std::size_t i = 0; i < r.per_dim[d].size(); ++i)
            out << d << ',' << i << ',' << format_double(r.per_dim[d][i]) << '\n';
    meta["construction"] = "time-rescaling: compensator between consecutive same-dimension events";
    detail::write_sidecar(path, meta);
}

inline void write_qq_csv(const std::string& path, const std::vector<QQPoint>& pts, nlohmann::json meta) {
    auto out = detail::open_out(path);
    out << "theoretical,empirical\n";
    for (const auto& p : pts) out << format_double(p.theoretical) << ',' << format_double(p.empirical) << '\n';
    meta["construction"] = "pooled rescaled residuals vs Exp(1) quantiles at (k - 0.5)/n";
    meta["n"] = pts.size();
    detail::write_sidecar(path, meta);
}

inline void write_trace_grid_csv(const std::string& path, const std::vector<double>& grid,
                                 const std::vector<std::vector<double>>& values, nlohmann::json meta) {
    auto out = detail::open_out(path);
    out << "time";
    for (std::size_t d = 0; d < values.size(); ++d) out << ",lambda_" << d;
    out << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << format_double(grid[i]);
        for (const auto& v : values) out << ',' << format_double(v[i]);
        out << '\n';
    }
    meta["n"] = grid.size();
    detail::write_sidecar(path, meta);
}

/// Fitted lambda*_d on a time grid, history from s.
[[nodiscard]] inline std::vector<std::vector<double>> model_intensity_trace(const HawkesModel& m, const EventStream& s,
                                                                            const std::vector<double>& grid,
                                                                            const IntensityOptions& opt = {}) {
    std::vector<std::vector<double>> out(m.dims, std::vector<double>(grid.size()));
    for (int d = 0; d < m.dims; ++d)
        for (std::size_t i = 0; i < grid.size(); ++i) out[d][i] = intensity(m, d, grid[i], s, opt);
    return out;
}

} // namespace nnnh
