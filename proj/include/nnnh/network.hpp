#pragma once

#include "nnnh/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace nnnh {

/// One-hidden-layer ReLU network R -> R:
///   f(x) = b2 + sum_i a2[i] * max(a1[i] * x + b1[i], 0)
/// Used for every kernel and for time-varying base intensities.
struct ReluNet {
    std::vector<double> a1;  // hidden slopes
    std::vector<double> b1;  // hidden biases
    std::vector<double> a2;  // output weights
    double b2{0.0};          // output bias

    ReluNet() = default;
    explicit ReluNet(std::size_t p) : a1(p, 0.0), b1(p, 0.0), a2(p, 0.0) {}
    ReluNet(std::vector<double> slopes, std::vector<double> biases, std::vector<double> weights, double bias)
        : a1(std::move(slopes)), b1(std::move(biases)), a2(std::move(weights)), b2(bias) {
        validate();
    }

    [[nodiscard]] std::size_t size() const { return a1.size(); }

    void validate() const {
        if (a1.size() != b1.size() || a1.size() != a2.size())
            throw std::invalid_argument("ReluNet: a1, b1, a2 must have equal length");
    }

    /// Pre-activation of unit i at x.
    [[nodiscard]] double pre(std::size_t i, double x) const { return a1[i] * x + b1[i]; }

    friend bool operator==(const ReluNet&, const ReluNet&) = default;
};

struct NetGradient {
    std::vector<double> d_a1;
    std::vector<double> d_b1;
    std::vector<double> d_a2;
    double d_b2{0.0};
};

[[nodiscard]] inline double net_forward(const ReluNet& net, double x) {
    double y = net.b2;
    for (std::size_t i = 0; i < net.size(); ++i) y += net.a2[i] * std::max(net.a1[i] * x + net.b1[i], 0.0);
    return y;
}

/// Parameter gradient at x. At a kink the indicator is 0 (strict inequality).
[[nodiscard]] inline NetGradient net_gradient(const ReluNet& net, double x) {
    const std::size_t p = net.size();
    NetGradient g{std::vector<double>(p), std::vector<double>(p), std::vector<double>(p), 1.0};
    for (std::size_t i = 0; i < p; ++i) {
        const double z = net.a1[i] * x + net.b1[i];
        const bool on = z > 0.0;
        g.d_a2[i] = on ? z : 0.0;
        g.d_a1[i] = on ? net.a2[i] * x : 0.0;
        g.d_b1[i] = on ? net.a2[i] : 0.0;
    }
    return g;
}

/// Kernel initialization: a1 ~ U(-0.3, 0), b1 ~ U(0, 0.3), a2 ~ U(0, 0.2), b2 = 0.
[[nodiscard]] inline ReluNet init_kernel_net(std::size_t p, Rng& rng) {
    if (p == 0) throw std::invalid_argument("kernel net needs at least one hidden unit");
    ReluNet net(p);
    for (std::size_t i = 0; i < p; ++i) {
        // strictly negative slope so the unit always has a finite support
        double a = -0.3 * rng.uniform();
        while (a == 0.0) a = -0.3 * rng.uniform();
        net.a1[i] = a;
        net.a2[i] = rng.uniform(0.0, 0.2);
        net.b1[i] = rng.uniform(0.0, 0.3);
    }
    return net;
}

/// Base-intensity initialization: a1 ~ U(-1e-3, 1e-3), b1 ~ U(-1, 1), a2 ~ U(0, 0.2), b2 = 0.
[[nodiscard]] inline ReluNet init_base_net(std::size_t p, Rng& rng) {
    if (p == 0) throw std::invalid_argument("base net needs at least one hidden unit");
    ReluNet net(p);
    for (std::size_t i = 0; i < p; ++i) {
        net.a1[i] = rng.uniform(-1e-3, 1e-3);
        net.a2[i] = rng.uniform(0.0, 0.2);
        net.b1[i] = rng.uniform(-1.0, 1.0);
    }
    return net;
}

/// Largest x >= 0 at which unit i can be active; +inf if it stays active
/// for arbitrarily large x; 0 if never active on x > 0.
[[nodiscard]] inline double unit_support(const ReluNet& net, std::size_t i) {
    const double a = net.a1[i];
    const double b = net.b1[i];
    if (a < 0.0) return std::max(-b / a, 0.0);
    if (a > 0.0) return std::numeric_limits<double>::infinity();
    return b > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

/// Lag beyond which the net is identically zero on x >= 0 (+inf if none).
[[nodiscard]] inline double kernel_support(const ReluNet& net) {
    if (net.b2 != 0.0) return std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (net.a2[i] == 0.0) continue;
        s = std::max(s, unit_support(net, i));
    }
    return s;
}

inline void to_json(nlohmann::json& j, const ReluNet& net) {
    j = nlohmann::json{{"p", net.size()}, {"a1", net.a1}, {"b1", net.b1}, {"a2", net.a2}, {"b2", net.b2}};
}

inline void from_json(const nlohmann::json& j, ReluNet& net) {
    j.at("a1").get_to(net.a1);
    j.at("b1").get_to(net.b1);
    j.at("a2").get_to(net.a2);
    j.at("b2").get_to(net.b2);
    net.validate();
    if (j.contains("p") && j.at("p").get<std::size_t>() != net.size())
        throw std::invalid_argument("ReluNet: p does not match vector lengths");
}

} // namespace nnnh
