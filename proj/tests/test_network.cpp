#include "nnnh/model.hpp"
#include "nnnh/network.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace nnnh;

namespace {

double relu(double x) { return x > 0.0 ? x : 0.0; }

// straightforward reference evaluation
double reference_forward(const ReluNet& n, double x) {
    double y = n.b2;
    for (std::size_t i = 0; i < n.size(); ++i) y += n.a2[i] * relu(n.a1[i] * x + n.b1[i]);
    return y;
}

ReluNet random_net(std::size_t p, Rng& rng) {
    ReluNet n(p);
    for (std::size_t i = 0; i < p; ++i) {
        n.a1[i] = rng.uniform(-1.0, 1.0);
        n.b1[i] = rng.uniform(-1.0, 1.0);
        n.a2[i] = rng.uniform(-1.0, 1.0);
    }
    n.b2 = rng.uniform(-0.5, 0.5);
    return n;
}

} // namespace

TEST(ReluNet, HandComputedValues) {
    const ReluNet n({-1.0, 2.0}, {1.0, -1.0}, {0.5, 0.25}, 0.1);
    // x = 0: 0.1 + 0.5 * 1 + 0.25 * 0
    EXPECT_DOUBLE_EQ(net_forward(n, 0.0), 0.6);
    // x = 2: 0.1 + 0.5 * 0 + 0.25 * 3
    EXPECT_DOUBLE_EQ(net_forward(n, 2.0), 0.85);
}

TEST(ReluNet, MatchesReferenceOnRandomNets) {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const auto n = random_net(1 + rng.index(20), rng);
        for (int k = 0; k < 20; ++k) {
            const double x = rng.uniform(-5.0, 5.0);
            EXPECT_NEAR(net_forward(n, x), reference_forward(n, x), 1e-12);
        }
    }
}

TEST(ReluNet, LengthMismatchRejected) {
    EXPECT_THROW(ReluNet({1.0}, {1.0, 2.0}, {1.0}, 0.0), std::invalid_argument);
}

TEST(ReluNet, GradientMatchesFiniteDifferences) {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        auto n = random_net(8, rng);
        const double x = rng.uniform(-3.0, 3.0);
        const auto g = net_gradient(n, x);
        const double h = 1e-6;
        for (std::size_t i = 0; i < n.size(); ++i) {
            // skip units sitting on a kink
            if (std::abs(n.a1[i] * x + n.b1[i]) < 1e-4) continue;
            auto fd = [&](double& p) {
                const double keep = p;
                p = keep + h;
                const double up = reference_forward(n, x);
                p = keep - h;
                const double dn = reference_forward(n, x);
                p = keep;
                return (up - dn) / (2 * h);
            };
            EXPECT_NEAR(g.d_a1[i], fd(n.a1[i]), 1e-6);
            EXPECT_NEAR(g.d_b1[i], fd(n.b1[i]), 1e-6);
            EXPECT_NEAR(g.d_a2[i], fd(n.a2[i]), 1e-6);
        }
        EXPECT_DOUBLE_EQ(g.d_b2, 1.0);
    }
}

TEST(ReluNet, KinkUsesStrictIndicator) {
    const ReluNet n({1.0}, {-1.0}, {2.0}, 0.0);
    const auto g = net_gradient(n, 1.0);
    EXPECT_EQ(g.d_a1[0], 0.0);
    EXPECT_EQ(g.d_b1[0], 0.0);
    EXPECT_EQ(g.d_a2[0], 0.0);
}

TEST(ReluNet, KernelInitRanges) {
    Rng rng(7);
    const auto n = init_kernel_net(500, rng);
    EXPECT_EQ(n.b2, 0.0);
    for (std::size_t i = 0; i < n.size(); ++i) {
        EXPECT_LT(n.a1[i], 0.0);
        EXPECT_GE(n.a1[i], -0.3);
        EXPECT_GE(n.b1[i], 0.0);
        EXPECT_LT(n.b1[i], 0.3);
        EXPECT_GE(n.a2[i], 0.0);
        EXPECT_LT(n.a2[i], 0.2);
    }
    // freshly initialized kernels have finite support
    EXPECT_TRUE(std::isfinite(kernel_support(n)));
    EXPECT_THROW((void)init_kernel_net(0, rng), std::invalid_argument);
}

TEST(ReluNet, BaseInitRanges) {
    Rng rng(8);
    const auto n = init_base_net(500, rng);
    for (std::size_t i = 0; i < n.size(); ++i) {
        EXPECT_LE(std::abs(n.a1[i]), 1e-3);
        EXPECT_LE(std::abs(n.b1[i]), 1.0);
        EXPECT_GE(n.a2[i], 0.0);
        EXPECT_LT(n.a2[i], 0.2);
    }
}

TEST(ReluNet, SeededInitIsReproducible) {
    Rng a = Rng::substream(42, "init"), b = Rng::substream(42, "init");
    EXPECT_EQ(init_kernel_net(16, a), init_kernel_net(16, b));
    Rng c = Rng::substream(42, "batch");
    Rng d = Rng::substream(42, "init");
    EXPECT_NE(init_kernel_net(16, c), init_kernel_net(16, d));
}

TEST(ReluNet, SupportIsWhereTheNetVanishes) {
    const ReluNet n({-0.5, -1.0, 0.0}, {1.0, 0.5, -1.0}, {1.0, 1.0, 3.0}, 0.0);
    EXPECT_DOUBLE_EQ(kernel_support(n), 2.0);
    EXPECT_EQ(net_forward(n, 2.0), 0.0);
    EXPECT_GT(net_forward(n, 1.99), 0.0);

    const ReluNet grow({0.5}, {0.0}, {1.0}, 0.0);
    EXPECT_TRUE(std::isinf(kernel_support(grow)));
    const ReluNet biased({-1.0}, {1.0}, {1.0}, 0.1);
    EXPECT_TRUE(std::isinf(kernel_support(biased)));
}

TEST(ReluNet, JsonRoundTrip) {
    Rng rng(9);
    const auto n = random_net(6, rng);
    const nlohmann::json j = n;
    EXPECT_EQ(j.at("p"), 6);
    EXPECT_EQ(j.get<ReluNet>(), n);
    auto bad = j;
    bad["p"] = 5;
    EXPECT_THROW((void)bad.get<ReluNet>(), std::invalid_argument);
}

TEST(Model, ParameterRoundTripAndRoles) {
    Rng rng(10);
    std::vector<BaseIntensity> bases{ConstantRate{0.3}, init_base_net(4, rng)};
    std::vector<ReluNet> ks;
    for (int k = 0; k < 4; ++k) ks.push_back(init_kernel_net(3, rng));
    HawkesModel m(2, bases, ks);
    const auto L = parameter_layout(m);
    EXPECT_EQ(L.total, 1u + 13u + 4u * 9u);
    auto theta = get_parameters(m);
    ASSERT_EQ(theta.size(), L.total);
    EXPECT_DOUBLE_EQ(theta[0], 0.3);
    for (auto& x : theta) x += 0.125;
    set_parameters(m, theta);
    EXPECT_EQ(get_parameters(m), theta);
    EXPECT_THROW(set_parameters(m, std::vector<double>(3)), std::invalid_argument);

    const auto roles = parameter_roles(m);
    ASSERT_EQ(roles.size(), L.total);
    EXPECT_EQ(roles[0], ParamRole::base_constant);
    EXPECT_EQ(roles[1], ParamRole::base_hidden);
    EXPECT_EQ(roles[9], ParamRole::base_output);
    EXPECT_EQ(roles[13], ParamRole::base_output);  // b2
    EXPECT_EQ(roles[14], ParamRole::kernel_hidden);
    EXPECT_EQ(roles[20], ParamRole::kernel_output);

    const nlohmann::json j = m;
    EXPECT_EQ(j.get<HawkesModel>(), m);
}

TEST(Model, KernelBiasAddsOneParameterPerKernel) {
    Rng rng(11);
    std::vector<ReluNet> ks{init_kernel_net(5, rng)};
    HawkesModel a(1, {ConstantRate{1.0}}, ks, false);
    HawkesModel b(1, {ConstantRate{1.0}}, ks, true);
    EXPECT_EQ(parameter_layout(b).total, parameter_layout(a).total + 1);
}

TEST(Model, ShapeValidation) {
    EXPECT_THROW(HawkesModel(2, {ConstantRate{}}, {ReluNet(1), ReluNet(1), ReluNet(1), ReluNet(1)}),
                 std::invalid_argument);
    EXPECT_THROW(HawkesModel(1, {ConstantRate{}}, {ReluNet(1), ReluNet(1)}), std::invalid_argument);
}
