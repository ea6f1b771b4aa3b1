#include "nnnh/optimizer.hpp"
#include "nnnh/simulate.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace nnnh;

namespace {

// Integral of |phi| on [0, support] by dense midpoint sums.
double abs_integral(const ReluNet& k) {
    const double sup = std::min(kernel_support(k), 1e3);
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::abs(oracle::net(k, sup * (i + 0.5) / n));
    return s * sup / n;
}

struct Poisson {
    EventStream raw;
    EventStream scaled;
    ScaleInfo info;
    Splits splits;
};

Poisson poisson_data(double mu, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Event> ev;
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) ev.push_back({t += rng.exponential(mu), 0});
    EventStream raw(ev, 1, Window{0.0, t});
    auto [sc, info] = scale_times(raw);
    auto sp = split_chronological(sc);
    return {raw, sc, info, sp};
}

} // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
    AdamState st(3);
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0), lr(3, 0.1);
    adam_step(st, p, g, lr);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    AdamState st(1);
    std::vector<double> p{0.0};
    adam_step(st, p, std::vector<double>{1.0}, std::vector<double>{0.01});
    EXPECT_NEAR(p[0], -0.01, 1e-9);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
    Rng rng(1);
    AdamState st(10);
    std::vector<double> p(10), g(10);
    for (auto& x : p) x = rng.uniform(-1, 1);
    const auto keep = p;
    for (int k = 0; k < 5; ++k) {
        for (auto& x : g) x = rng.uniform(-1, 1);
        adam_step(st, p, g, std::vector<double>(10, 0.0));
    }
    EXPECT_EQ(p, keep);
}

TEST(Adam, MatchesHandRolledRecursion) {
    // independent scalar recursion
    double m = 0, v = 0, x = 0.3;
    AdamState st(1);
    std::vector<double> p{0.3};
    const double grads[] = {0.5, -1.2, 2.0, 0.1};
    int i = 0;
    for (double g : grads) {
        ++i;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.05 * (m / (1 - std::pow(0.9, i))) / (std::sqrt(v / (1 - std::pow(0.999, i))) + 1e-8);
        adam_step(st, p, std::vector<double>{g}, std::vector<double>{0.05});
        EXPECT_NEAR(p[0], x, 1e-15);
    }
}

TEST(Adam, NonFiniteGradientThrowsWithoutMutation) {
    AdamState st(2);
    std::vector<double> p{1.0, 2.0};
    EXPECT_THROW(adam_step(st, p, std::vector<double>{0.1, std::nan("")}, std::vector<double>{0.1, 0.1}),
                 NonFiniteGradient);
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(st.step, 0u);
    EXPECT_THROW(adam_step(st, p, std::vector<double>{0.1}, std::vector<double>{0.1, 0.1}), std::invalid_argument);
}

TEST(SampleBatch, DistinctIndicesInRange) {
    Rng rng(2);
    for (int rep = 0; rep < 50; ++rep) {
        auto b = sample_batch(30, 10, rng);
        ASSERT_EQ(b.size(), 10u);
        std::sort(b.begin(), b.end());
        EXPECT_EQ(std::adjacent_find(b.begin(), b.end()), b.end());
        EXPECT_LT(b.back(), 30u);
    }
    EXPECT_EQ(sample_batch(5, 100, rng).size(), 5u);
}

TEST(SampleBatch, RoughlyUniform) {
    Rng rng(3);
    std::vector<int> hits(20, 0);
    for (int rep = 0; rep < 20000; ++rep)
        for (auto i : sample_batch(20, 5, rng)) ++hits[i];
    for (int h : hits) EXPECT_NEAR(h, 5000, 350);
}

TEST(FitConfig, Validation) {
    FitConfig c;
    EXPECT_NO_THROW(c.validate());
    c.lr_kernel_output = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = FitConfig{};
    c.patience = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = FitConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = FitConfig{};
    EXPECT_EQ(c.rate_for(ParamRole::kernel_output), 1e-2);
    EXPECT_EQ(c.rate_for(ParamRole::kernel_hidden), 1e-3);
    EXPECT_EQ(c.rate_for(ParamRole::base_output), 1e-3);
    EXPECT_EQ(c.rate_for(ParamRole::base_hidden), 1e-6);
}

TEST(Fit, ZeroIterationsReturnsInitialModel) {
    const auto d = poisson_data(0.5, 300, 4);
    FitConfig cfg;
    cfg.max_iters = 0;
    cfg.seed = 9;
    const auto r = fit(d.splits.train, d.splits.validation, cfg);
    EXPECT_EQ(r.trace.stop_reason, "max_iters");
    EXPECT_EQ(r.model, init_model(1, cfg));
    EXPECT_EQ(std::get<ConstantRate>(r.model.base[0]).mu, 1.0);
    ASSERT_EQ(r.trace.records.size(), 1u);
    EXPECT_EQ(r.trace.records[0].iteration, 0u);

    const auto rn = fit_nhpp(d.splits.train, d.splits.validation, cfg);
    EXPECT_EQ(rn.trace.stop_reason, "max_iters");
    Rng rng = Rng::substream(9, "init");
    EXPECT_EQ(rn.net, init_base_net(cfg.base_neurons, rng));
}

TEST(Fit, HomogeneousPoissonRecoversRate) {
    const auto d = poisson_data(0.5, 5000, 5);
    FitConfig cfg;
    cfg.seed = 3;
    cfg.val_check_interval = 10;
    cfg.patience = 100;
    cfg.max_iters = 20000;
    const auto r = fit(d.splits.train, d.splits.validation, cfg);
    const double mu = std::get<ConstantRate>(r.model.base[0]).mu * d.info.factor;
    EXPECT_NEAR(mu, 0.5, 0.05) << "stop " << r.trace.stop_reason << " at " << r.trace.best_iteration;
    // integral of |phi| is invariant under the time scaling
    EXPECT_LT(abs_integral(r.model.kernel(0, 0)), 0.1);
}

TEST(Fit, BestCheckpointHasLowestValidationNll) {
    const auto d = poisson_data(0.5, 1500, 6);
    FitConfig cfg;
    cfg.seed = 4;
    cfg.kernel_neurons = 8;
    cfg.max_iters = 300;
    cfg.val_check_interval = 5;
    cfg.patience = 1000;
    const auto r = fit(d.splits.train, d.splits.validation, cfg);
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.trace.records) lowest = std::min(lowest, rec.val_nll);
    const double v = -log_likelihood(r.model, d.splits.validation).total_ll;
    EXPECT_NEAR(v, lowest, 1e-9);
    EXPECT_EQ(v, r.trace.best_val_nll);
    EXPECT_EQ(r.trace.stop_reason, "max_iters");
    EXPECT_EQ(r.trace.records.back().iteration, 300u);
}

TEST(Fit, EarlyStoppingAfterPatienceChecks) {
    const auto d = poisson_data(0.5, 800, 7);
    FitConfig cfg;
    cfg.seed = 5;
    cfg.kernel_neurons = 4;
    cfg.lr_kernel_output = 0.5;  // large enough to overshoot
    cfg.lr_base_output = 0.5;
    cfg.patience = 3;
    cfg.max_iters = 5000;
    const auto r = fit(d.splits.train, d.splits.validation, cfg);
    ASSERT_EQ(r.trace.stop_reason, "early_stopping");
    const auto last = r.trace.records.back().iteration;
    EXPECT_EQ(last, r.trace.best_iteration + cfg.patience);
}

TEST(Fit, BitReproducibleWithFixedSeed) {
    const auto d = poisson_data(0.5, 600, 8);
    FitConfig cfg;
    cfg.seed = 11;
    cfg.kernel_neurons = 6;
    cfg.max_iters = 150;
    const auto a = fit(d.splits.train, d.splits.validation, cfg);
    const auto b = fit(d.splits.train, d.splits.validation, cfg);
    EXPECT_EQ(get_parameters(a.model), get_parameters(b.model));
    ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
    for (std::size_t i = 0; i < a.trace.records.size(); ++i)
        EXPECT_EQ(a.trace.records[i].val_nll, b.trace.records[i].val_nll);
    cfg.seed = 12;
    const auto c = fit(d.splits.train, d.splits.validation, cfg);
    EXPECT_NE(get_parameters(a.model), get_parameters(c.model));
}

TEST(Fit, CheckpointResumeReproducesNextSteps) {
    const auto d = poisson_data(0.5, 600, 9);
    FitConfig cfg;
    cfg.seed = 13;
    cfg.kernel_neurons = 5;
    cfg.max_iters = 1000;
    cfg.patience = 1000;
    const HawkesModel init = init_model(1, cfg);

    Trainer<HawkesProblem> a(HawkesProblem(init, d.splits.train, d.splits.validation, cfg.likelihood), cfg);
    for (int k = 0; k < 20; ++k) a.step();
    // through JSON, as the CLI does
    const nlohmann::json j = a.checkpoint();
    const auto ck = j.get<FitCheckpoint>();

    Trainer<HawkesProblem> b(HawkesProblem(init, d.splits.train, d.splits.validation, cfg.likelihood), cfg);
    b.restore(ck);
    for (int k = 0; k < 7; ++k) {
        a.step();
        b.step();
        EXPECT_EQ(a.current_parameters(), b.current_parameters());
    }
    EXPECT_EQ(a.iteration(), b.iteration());
    EXPECT_EQ(a.trace().records.size(), b.trace().records.size());
}

TEST(Fit, NoValidationDataKeepsTraining) {
    const auto d = poisson_data(0.5, 400, 10);
    const auto sp = split_chronological(d.scaled, {1.0, 0.0, 0.0});
    FitConfig cfg;
    cfg.seed = 1;
    cfg.kernel_neurons = 4;
    cfg.max_iters = 50;
    const auto r = fit(sp.train, sp.validation, cfg);
    EXPECT_EQ(r.trace.stop_reason, "max_iters");
    EXPECT_EQ(r.trace.best_iteration, 50u);
    EXPECT_NE(r.model, init_model(1, cfg));
    EXPECT_TRUE(std::isnan(r.trace.records.front().val_nll));
}

TEST(Fit, NonFiniteGradientStops) {
    const auto d = poisson_data(0.5, 300, 11);
    FitConfig cfg;
    cfg.kernel_neurons = 2;
    cfg.max_iters = 10;
    HawkesModel bad = init_model(1, cfg);
    bad.kernel(0, 0).a2[0] = std::numeric_limits<double>::infinity();
    LikelihoodOptions opt;
    Trainer<HawkesProblem> t(HawkesProblem(bad, d.splits.train, d.splits.validation, opt), cfg);
    t.run();
    EXPECT_EQ(t.trace().stop_reason, "non_finite_gradient");
}

TEST(Fit, TraceCsv) {
    FitTrace tr;
    tr.records = {{0, 10.5, 3.25}, {1, 9.0, std::numeric_limits<double>::quiet_NaN()}};
    std::ostringstream out;
    write_trace_csv(out, tr);
    EXPECT_EQ(out.str(), "iteration,train_nll,val_nll\n0,10.5,3.25\n1,9,nan\n");
}

TEST(FitNhpp, ConstantTargetGivesFlatRate) {
    Rng rng = Rng::substream(21, "simulation");
    const auto s = simulate_nhpp(NamedRate::benchmark_constant(), 3000.0, rng);
    auto [sc, info] = scale_times(s);
    FitConfig cfg;
    cfg.seed = 21;
    cfg.base_mode = BaseMode::net;
    cfg.max_iters = 20000;
    cfg.val_check_interval = 100;
    cfg.patience = 1000000;
    const auto r = fit_nhpp(sc, sc, cfg);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, mean = 0.0;
    const int n = 1001;
    for (int i = 0; i < n; ++i) {
        const double t = sc.window().hi * i / (n - 1);
        const double v = std::max(oracle::net(r.net, t), 0.0) * info.factor;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        mean += v / n;
    }
    EXPECT_NEAR(mean, 0.5, 0.05);
    EXPECT_LT(hi - lo, 0.15 * mean);
}
