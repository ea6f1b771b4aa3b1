#pragma once

#include "nnnh/network.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace nnnh {

struct ConstantRate {
    double mu{1.0};
    friend bool operator==(const ConstantRate&, const ConstantRate&) = default;
};

using BaseIntensity = std::variant<ConstantRate, ReluNet>;

/// Which learning rate a flat parameter uses.
enum class ParamRole { base_constant, base_hidden, base_output, kernel_hidden, kernel_output };

/// Estimated model: lambda_d(t) = max(mu_d(t) + sum_j sum_{t_k^j < t} phi_dj(t - t_k^j), 0).
///
/// Flat parameter order: bases by d (constant: mu; net: a1|b1|a2|b2), then
/// kernels row-major by (d, j), each a1|b1|a2 followed by b2 only when
/// `train_kernel_bias` is set.
struct HawkesModel {
    int dims{1};
    std::vector<BaseIntensity> base;
    std::vector<ReluNet> kernels;  // dims * dims, row-major (d, j)
    bool train_kernel_bias{false};

    HawkesModel() = default;
    HawkesModel(int d, std::vector<BaseIntensity> bases, std::vector<ReluNet> ks, bool kernel_bias = false)
        : dims(d), base(std::move(bases)), kernels(std::move(ks)), train_kernel_bias(kernel_bias) {
        validate();
    }

    void validate() const {
        if (dims < 1) throw std::invalid_argument("HawkesModel: dims must be positive");
        if (base.size() != static_cast<std::size_t>(dims))
            throw std::invalid_argument("HawkesModel: need one base intensity per dimension");
        if (kernels.size() != static_cast<std::size_t>(dims) * static_cast<std::size_t>(dims))
            throw std::invalid_argument("HawkesModel: kernels must be dims x dims");
        for (const auto& k : kernels) k.validate();
        for (const auto& b : base)
            if (const auto* n = std::get_if<ReluNet>(&b)) n->validate();
    }

    [[nodiscard]] const ReluNet& kernel(int d, int j) const {
        return kernels[static_cast<std::size_t>(d) * dims + static_cast<std::size_t>(j)];
    }
    [[nodiscard]] ReluNet& kernel(int d, int j) {
        return kernels[static_cast<std::size_t>(d) * dims + static_cast<std::size_t>(j)];
    }

    [[nodiscard]] double base_value(int d, double t) const {
        return std::visit(
            [t](const auto& b) -> double {
                if constexpr (std::is_same_v<std::decay_t<decltype(b)>, ConstantRate>)
                    return b.mu;
                else
                    return net_forward(b, t);
            },
            base[d]);
    }

    friend bool operator==(const HawkesModel&, const HawkesModel&) = default;
};

/// Offsets of each network's block inside the flat parameter vector.
struct ParameterLayout {
    std::vector<std::size_t> base_offset;    // per d
    std::vector<std::size_t> kernel_offset;  // per (d, j) row-major
    std::size_t total{0};
};

[[nodiscard]] inline std::size_t net_param_count(const ReluNet& net, bool with_bias) {
    return 3 * net.size() + (with_bias ? 1 : 0);
}

[[nodiscard]] inline ParameterLayout parameter_layout(const HawkesModel& m) {
    ParameterLayout L;
    std::size_t off = 0;
    for (const auto& b : m.base) {
        L.base_offset.push_back(off);
        if (const auto* n = std::get_if<ReluNet>(&b))
            off += net_param_count(*n, true);
        else
            off += 1;
    }
    for (const auto& k : m.kernels) {
        L.kernel_offset.push_back(off);
        off += net_param_count(k, m.train_kernel_bias);
    }
    L.total = off;
    return L;
}

namespace detail {

inline void write_net(const ReluNet& net, bool with_bias, std::span<double> out) {
    const std::size_t p = net.size();
    std::copy(net.a1.begin(), net.a1.end(), out.begin());
    std::copy(net.b1.begin(), net.b1.end(), out.begin() + static_cast<std::ptrdiff_t>(p));
    std::copy(net.a2.begin(), net.a2.end(), out.begin() + static_cast<std::ptrdiff_t>(2 * p));
    if (with_bias) out[3 * p] = net.b2;
}

inline void read_net(ReluNet& net, bool with_bias, std::span<const double> in) {
    const std::size_t p = net.size();
    for (std::size_t i = 0; i < p; ++i) {
        net.a1[i] = in[i];
        net.b1[i] = in[p + i];
        net.a2[i] = in[2 * p + i];
    }
    if (with_bias) net.b2 = in[3 * p];
}

inline void net_roles(std::size_t p, bool with_bias, ParamRole hidden, ParamRole output,
                      std::vector<ParamRole>& out) {
    out.insert(out.end(), 2 * p, hidden);
    out.insert(out.end(), p, output);
    if (with_bias) out.push_back(output);
}

} // namespace detail

[[nodiscard]] inline std::vector<double> get_parameters(const HawkesModel& m) {
    const auto L = parameter_layout(m);
    std::vector<double> theta(L.total);
    for (std::size_t d = 0; d < m.base.size(); ++d) {
        std::span<double> out(theta.data() + L.base_offset[d], theta.size() - L.base_offset[d]);
        if (const auto* n = std::get_if<ReluNet>(&m.base[d]))
            detail::write_net(*n, true, out);
        else
            out[0] = std::get<ConstantRate>(m.base[d]).mu;
    }
    for (std::size_t k = 0; k < m.kernels.size(); ++k)
        detail::write_net(m.kernels[k], m.train_kernel_bias,
                          std::span<double>(theta.data() + L.kernel_offset[k], theta.size() - L.kernel_offset[k]));
    return theta;
}

inline void set_parameters(HawkesModel& m, std::span<const double> theta) {
    const auto L = parameter_layout(m);
    if (theta.size() != L.total) throw std::invalid_argument("parameter vector has wrong length");
    for (std::size_t d = 0; d < m.base.size(); ++d) {
        auto in = theta.subspan(L.base_offset[d]);
        if (auto* n = std::get_if<ReluNet>(&m.base[d]))
            detail::read_net(*n, true, in);
        else
            std::get<ConstantRate>(m.base[d]).mu = in[0];
    }
    for (std::size_t k = 0; k < m.kernels.size(); ++k)
        detail::read_net(m.kernels[k], m.train_kernel_bias, theta.subspan(L.kernel_offset[k]));
}

[[nodiscard]] inline std::vector<ParamRole> parameter_roles(const HawkesModel& m) {
    std::vector<ParamRole> roles;
    for (const auto& b : m.base) {
        if (const auto* n = std::get_if<ReluNet>(&b))
            detail::net_roles(n->size(), true, ParamRole::base_hidden, ParamRole::base_output, roles);
        else
            roles.push_back(ParamRole::base_constant);
    }
    for (const auto& k : m.kernels)
        detail::net_roles(k.size(), m.train_kernel_bias, ParamRole::kernel_hidden, ParamRole::kernel_output, roles);
    return roles;
}

inline void to_json(nlohmann::json& j, const HawkesModel& m) {
    nlohmann::json bases = nlohmann::json::array();
    for (const auto& b : m.base) {
        if (const auto* n = std::get_if<ReluNet>(&b))
            bases.push_back({{"type", "net"}, {"net", *n}});
        else
            bases.push_back({{"type", "constant"}, {"mu", std::get<ConstantRate>(b).mu}});
    }
    nlohmann::json ks = nlohmann::json::array();
    for (int d = 0; d < m.dims; ++d) {
        nlohmann::json row = nlohmann::json::array();
        for (int jj = 0; jj < m.dims; ++jj) row.push_back(m.kernel(d, jj));
        ks.push_back(std::move(row));
    }
    j = nlohmann::json{{"dims", m.dims}, {"base", std::move(bases)}, {"kernels", std::move(ks)},
                       {"train_kernel_bias", m.train_kernel_bias}};
}

inline void from_json(const nlohmann::json& j, HawkesModel& m) {
    m.dims = j.at("dims").get<int>();
    m.train_kernel_bias = j.value("train_kernel_bias", false);
    m.base.clear();
    for (const auto& b : j.at("base")) {
        const auto type = b.at("type").get<std::string>();
        if (type == "constant")
            m.base.emplace_back(ConstantRate{b.at("mu").get<double>()});
        else if (type == "net")
            m.base.emplace_back(b.at("net").get<ReluNet>());
        else
            throw std::invalid_argument("unknown base type '" + type + "'");
    }
    m.kernels.clear();
    const auto& rows = j.at("kernels");
    if (rows.size() != static_cast<std::size_t>(m.dims))
        throw std::invalid_argument("HawkesModel: kernels must be dims x dims");
    for (const auto& row : rows) {
        if (row.size() != static_cast<std::size_t>(m.dims))
            throw std::invalid_argument("HawkesModel: kernels must be dims x dims");
        for (const auto& k : row) m.kernels.push_back(k.get<ReluNet>());
    }
    m.validate();
}

} // namespace nnnh
