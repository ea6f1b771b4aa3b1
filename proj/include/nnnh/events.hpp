#pragma once

#include "nnnh/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nnnh {

struct Event {
    double time;
    int dim;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Observation window. Window events satisfy lo <= t <= hi.
struct Window {
    double lo{0.0};
    double hi{0.0};

    [[nodiscard]] double length() const { return hi - lo; }
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time-ordered marked arrivals. Events before `window_begin()` are history
/// context: they drive the intensity but the likelihood only runs over the
/// window events.
class EventStream {
public:
    EventStream() = default;

    /// Sorts by time (stable) and validates. `window_begin` defaults to the
    /// first event with time >= window.lo.
    EventStream(std::vector<Event> events, int dims, Window window,
                std::optional<std::size_t> window_begin = std::nullopt)
        : events_(std::move(events)), dims_(dims), window_(window) {
        if (dims_ < 1) throw ValidationError("dimension count must be positive");
        if (!(window_.lo <= window_.hi) || !std::isfinite(window_.lo) || !std::isfinite(window_.hi))
            throw ValidationError("invalid observation window");
        std::stable_sort(events_.begin(), events_.end(),
                         [](const Event& a, const Event& b) { return a.time < b.time; });
        if (window_begin) {
            window_begin_ = *window_begin;
        } else {
            window_begin_ = static_cast<std::size_t>(
                std::lower_bound(events_.begin(), events_.end(), window_.lo,
                                 [](const Event& e, double t) { return e.time < t; }) -
                events_.begin());
        }
        if (window_begin_ > events_.size()) throw ValidationError("window start index out of range");
        index();
    }

    [[nodiscard]] int dims() const { return dims_; }
    [[nodiscard]] Window window() const { return window_; }
    [[nodiscard]] const std::vector<Event>& events() const { return events_; }
    [[nodiscard]] std::size_t window_begin() const { return window_begin_; }
    [[nodiscard]] std::span<const Event> window_events() const {
        return std::span<const Event>(events_).subspan(window_begin_);
    }
    /// Number of events inside the window.
    [[nodiscard]] std::size_t size() const { return events_.size() - window_begin_; }
    [[nodiscard]] bool empty() const { return size() == 0; }

    /// All dim-d times, context included, increasing.
    [[nodiscard]] const std::vector<double>& times(int d) const { return times_.at(d); }

    /// Per-dimension counts of window events.
    [[nodiscard]] std::vector<std::size_t> counts() const {
        std::vector<std::size_t> n(dims_, 0);
        for (const auto& e : window_events()) ++n[e.dim];
        return n;
    }

    /// Time of the previous same-dimension event (context included), or -inf.
    [[nodiscard]] double previous_same_dim(std::size_t i) const { return prev_.at(i); }

    /// Left edge of the compensator interval for event i: max(window.lo, previous same-dim time).
    [[nodiscard]] double interval_start(std::size_t i) const { return std::max(window_.lo, prev_.at(i)); }

    /// Last window event time in dimension d, or window.lo when there is none.
    [[nodiscard]] double last_in_window(int d) const {
        const auto& ts = times_.at(d);
        if (ts.empty() || ts.back() < window_.lo) return window_.lo;
        if (last_window_index_.at(d) == npos) return window_.lo;
        return events_[last_window_index_[d]].time;
    }

private:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    void index() {
        times_.assign(dims_, {});
        prev_.assign(events_.size(), -std::numeric_limits<double>::infinity());
        last_window_index_.assign(dims_, npos);
        for (std::size_t i = 0; i < events_.size(); ++i) {
            const auto& e = events_[i];
            if (!std::isfinite(e.time) || e.time < 0.0)
                throw ValidationError("event " + std::to_string(i) + ": negative or non-finite time");
            if (e.dim < 0 || e.dim >= dims_)
                throw ValidationError("event " + std::to_string(i) + ": dimension " + std::to_string(e.dim) +
                                      " outside [0, " + std::to_string(dims_) + ")");
            if (e.time > window_.hi)
                throw ValidationError("event " + std::to_string(i) + ": time beyond horizon");
            if (i >= window_begin_ && e.time < window_.lo)
                throw ValidationError("event " + std::to_string(i) + ": window event before window start");
            if (i < window_begin_ && e.time > window_.lo)
                throw ValidationError("event " + std::to_string(i) + ": context event after window start");
            auto& ts = times_[e.dim];
            if (!ts.empty()) {
                if (!(ts.back() < e.time))
                    throw ValidationError("event " + std::to_string(i) + ": duplicate time within dimension " +
                                          std::to_string(e.dim));
                prev_[i] = ts.back();
            }
            ts.push_back(e.time);
            if (i >= window_begin_) last_window_index_[e.dim] = i;
        }
    }

    std::vector<Event> events_;
    int dims_{1};
    Window window_{};
    std::size_t window_begin_{0};
    std::vector<std::vector<double>> times_;
    std::vector<double> prev_;
    std::vector<std::size_t> last_window_index_;
};

struct ScaleInfo {
    double factor{1.0};
    double t_max{1.0};
    std::size_t n_total{0};
};

inline void to_json(nlohmann::json& j, const ScaleInfo& s) {
    j = nlohmann::json{{"factor", s.factor}, {"t_max", s.t_max}, {"n_total", s.n_total}};
}

inline void from_json(const nlohmann::json& j, ScaleInfo& s) {
    j.at("factor").get_to(s.factor);
    j.at("t_max").get_to(s.t_max);
    j.at("n_total").get_to(s.n_total);
}

/// Multiplies every time (and the window) by `factor`.
[[nodiscard]] inline EventStream rescale(const EventStream& s, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) throw ValidationError("scale factor must be positive");
    std::vector<Event> ev = s.events();
    for (auto& e : ev) e.time *= factor;
    return EventStream(std::move(ev), s.dims(), Window{s.window().lo * factor, s.window().hi * factor},
                       s.window_begin());
}

/// Rescales to unit mean arrival rate: t -> t * N(T_max) / T_max.
[[nodiscard]] inline std::pair<EventStream, ScaleInfo> scale_times(const EventStream& s) {
    if (s.events().empty()) throw ValidationError("cannot scale an empty stream");
    ScaleInfo info;
    info.t_max = s.events().back().time;
    info.n_total = s.events().size();
    if (!(info.t_max > 0.0)) throw ValidationError("cannot scale: latest event time is zero");
    info.factor = static_cast<double>(info.n_total) / info.t_max;
    return {rescale(s, info.factor), info};
}

[[nodiscard]] inline EventStream apply_scale(const EventStream& s, const ScaleInfo& info) {
    return rescale(s, info.factor);
}

[[nodiscard]] inline EventStream unscale_times(const EventStream& s, const ScaleInfo& info) {
    return rescale(s, 1.0 / info.factor);
}

struct SplitRatios {
    double train{0.6};
    double validation{0.2};
    double test{0.2};
};

struct Splits {
    EventStream train;
    EventStream validation;
    EventStream test;
};

/// Chronological split at event-time quantiles. Each split is a contiguous
/// window; later splits keep all earlier events as history context.
[[nodiscard]] inline Splits split_chronological(const EventStream& s, SplitRatios r = {}) {
    if (r.train < 0.0 || r.validation < 0.0 || r.test < 0.0 || !(r.train > 0.0 || r.validation > 0.0 || r.test > 0.0))
        throw std::invalid_argument("split ratios must be non-negative and not all zero");
    if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");

    const auto& ev = s.events();
    const std::size_t base = s.window_begin();
    const std::size_t n = s.size();
    const Window w = s.window();

    auto boundary_index = [&](double frac) {
        auto k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
        k = std::min(k, n);
        // keep simultaneous events on the same side
        while (k > 0 && k < n && ev[base + k].time == ev[base + k - 1].time) ++k;
        return k;
    };
    const std::size_t n1 = boundary_index(r.train);
    const std::size_t n2 = std::max(n1, boundary_index(r.train + r.validation));

    auto boundary_time = [&](std::size_t k) {
        if (k == 0) return w.lo;
        if (k >= n) return w.hi;
        return 0.5 * (ev[base + k - 1].time + ev[base + k].time);
    };
    const double tau1 = boundary_time(n1);
    const double tau2 = boundary_time(n2);

    auto make = [&](std::size_t begin, std::size_t end, Window win, const char* name) {
        std::vector<Event> part(ev.begin(), ev.begin() + static_cast<std::ptrdiff_t>(base + end));
        if (end == begin) warn(std::string("split '") + name + "' has no events");
        return EventStream(std::move(part), s.dims(), win, base + begin);
    };
    return Splits{make(0, n1, Window{w.lo, tau1}, "train"), make(n1, n2, Window{tau1, tau2}, "validation"),
                  make(n2, n, Window{tau2, w.hi}, "test")};
}

enum class EventFormat { csv, jsonl };

struct LoadOptions {
    std::optional<int> dims;
    std::optional<double> horizon;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

inline bool parse_int(const std::string& s, long long& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(t.c_str(), &end, 10);
    return end == t.c_str() + t.size();
}

inline EventStream finish_load(std::vector<Event> events, const LoadOptions& opt) {
    if (events.empty()) throw ValidationError("no events");
    int max_dim = 0;
    double max_t = 0.0;
    for (const auto& e : events) {
        max_dim = std::max(max_dim, e.dim);
        max_t = std::max(max_t, e.time);
    }
    const int dims = opt.dims.value_or(max_dim + 1);
    const double horizon = opt.horizon.value_or(max_t);
    return EventStream(std::move(events), dims, Window{0.0, horizon});
}

} // namespace detail

[[nodiscard]] inline EventStream parse_events(std::istream& in, EventFormat format, const LoadOptions& opt = {}) {
    std::vector<Event> events;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        double time = 0.0;
        long long dim = 0;
        if (format == EventFormat::csv) {
            const auto comma = t.find(',');
            if (comma == std::string::npos) throw ParseError("expected 'time,dim'", lineno);
            const std::string a = t.substr(0, comma);
            const std::string b = t.substr(comma + 1);
            if (!detail::parse_double(a, time) || !detail::parse_int(b, dim)) {
                if (events.empty() && lineno == 1 && detail::trim(a) == "time") continue;  // header
                throw ParseError("malformed row '" + t + "'", lineno);
            }
        } else {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(t);
                time = j.at("t").get<double>();
                dim = j.at("d").get<long long>();
            } catch (const nlohmann::json::exception& ex) {
                throw ParseError(std::string("malformed record: ") + ex.what(), lineno);
            }
        }
        if (time < 0.0 || !std::isfinite(time))
            throw ValidationError("line " + std::to_string(lineno) + ": negative or non-finite time");
        if (dim < 0) throw ValidationError("line " + std::to_string(lineno) + ": negative dimension");
        if (dim > std::numeric_limits<int>::max())
            throw ValidationError("line " + std::to_string(lineno) + ": dimension too large");
        events.push_back(Event{time, static_cast<int>(dim)});
    }
    return detail::finish_load(std::move(events), opt);
}

[[nodiscard]] inline EventFormat format_from_path(const std::string& path) {
    auto ends_with = [&](std::string_view suf) {
        return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
    };
    return (ends_with(".jsonl") || ends_with(".ndjson")) ? EventFormat::jsonl : EventFormat::csv;
}

[[nodiscard]] inline EventStream load_events(const std::string& path, EventFormat format,
                                             const LoadOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open events file: " + path);
    return parse_events(in, format, opt);
}

[[nodiscard]] inline EventStream load_events(const std::string& path, const LoadOptions& opt = {}) {
    return load_events(path, format_from_path(path), opt);
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Writes all events (context included) as `time,dim` with round-trip precision.
inline void write_events_csv(std::ostream& out, const EventStream& s) {
    out << "time,dim\n";
    for (const auto& e : s.events()) out << format_double(e.time) << ',' << e.dim << '\n';
}

inline void write_events_csv(const std::string& path, const EventStream& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write events file: " + path);
    write_events_csv(out, s);
}

} // namespace nnnh
