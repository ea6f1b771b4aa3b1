// Runs the built command-line binary end to end.

#include "nnnh/cli.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nnnh;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "nnnh_cli_test";

int run(const std::string& args, const fs::path& err_file = kRoot / "stderr.txt") {
    const std::string cmd = std::string(NNNH_CLI_PATH) + " " + args + " > " + (kRoot / "stdout.txt").string() +
                            " 2> " + err_file.string();
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_json(const std::string& name, const json& j) {
    const auto p = kRoot / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

json truth_json() {
    return {{"dims", 1},
            {"base", {{{"kind", "constant"}, {"value", 0.9}}}},
            {"kernels", {{{{"kind", "exponential"}, {"alpha", -0.5}, {"beta", 2.0}}}}}};
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        const auto cfg = write_json("sim.json", {{"seed", 5}, {"horizon", 600.0}, {"truth", truth_json()}});
        ASSERT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "sim").string()), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

} // namespace

TEST_F(Cli, HelpAndBadFlags) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("simulate --no-such-flag"), 2);
    EXPECT_EQ(run("fit --set nokeyvalue"), 2);
}

TEST_F(Cli, UnknownConfigKeyIsUsageError) {
    const auto cfg = write_json("bad.json", {{"seed", 1}, {"horizn", 10.0}, {"truth", truth_json()}});
    EXPECT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "bad").string()), 2);
    EXPECT_NE(slurp(kRoot / "stderr.txt").find("horizn"), std::string::npos);
    EXPECT_EQ(run("fit --data " + (kRoot / "sim/events.csv").string() + " --set fit.lr=0.1 -o " +
                  (kRoot / "bad").string()),
              2);
    EXPECT_EQ(run("fit --data " + (kRoot / "sim/events.csv").string() + " --set fit.patience=\"x\" -o " +
                  (kRoot / "bad").string()),
              2);
}

TEST_F(Cli, InvalidTruthIsUsageError) {
    auto t = truth_json();
    t["kernels"][0][0]["beta"] = -1.0;
    const auto cfg = write_json("badtruth.json", {{"truth", t}});
    EXPECT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "bad").string()), 2);
    EXPECT_EQ(run("simulate -o " + (kRoot / "bad").string()), 2);  // hawkes without a truth model
}

TEST_F(Cli, EvalWithoutModelIsUsageError) {
    EXPECT_EQ(run("eval --data " + (kRoot / "sim/events.csv").string() + " -o " + (kRoot / "bad").string()), 2);
    EXPECT_EQ(run("eval --data " + (kRoot / "sim/events.csv").string() + " --model " + (kRoot / "none.json").string() +
                  " -o " + (kRoot / "bad").string()),
              2);
    EXPECT_EQ(run("fit --data " + (kRoot / "missing.csv").string() + " -o " + (kRoot / "bad").string()), 2);
}

TEST_F(Cli, ZeroHorizonWritesEmptyFileAndWarns) {
    const auto cfg = write_json("zero.json", {{"horizon", 0.0}, {"truth", truth_json()}});
    ASSERT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "zero").string()), 0);
    EXPECT_EQ(slurp(kRoot / "zero/events.csv"), "time,dim\n");
    EXPECT_NE(slurp(kRoot / "stderr.txt").find("warning"), std::string::npos);
}

TEST_F(Cli, SimulationIsDeterministic) {
    const auto cfg = write_json("sim.json", {{"seed", 5}, {"horizon", 600.0}, {"truth", truth_json()}});
    ASSERT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "sim2").string()), 0);
    EXPECT_EQ(slurp(kRoot / "sim/events.csv"), slurp(kRoot / "sim2/events.csv"));
    ASSERT_EQ(run("simulate -c " + cfg.string() + " --seed 6 -o " + (kRoot / "sim3").string()), 0);
    EXPECT_NE(slurp(kRoot / "sim/events.csv"), slurp(kRoot / "sim3/events.csv"));
    // the library with the same seed substream gives the same file
    Rng rng = Rng::substream(5, "simulation");
    const auto s = simulate_hawkes(truth_json().get<GroundTruthModel>(), 600.0, rng);
    write_events_csv((kRoot / "lib.csv").string(), s);
    EXPECT_EQ(slurp(kRoot / "sim/events.csv"), slurp(kRoot / "lib.csv"));
}

TEST_F(Cli, NhppSimulation) {
    const auto cfg = write_json("nhpp.json", {{"process", "nhpp"}, {"horizon", 1000.0}, {"rate", {{"kind", "sine"}}}});
    ASSERT_EQ(run("simulate -c " + cfg.string() + " -o " + (kRoot / "nhpp").string()), 0);
    const auto s = load_events((kRoot / "nhpp/events.csv").string());
    EXPECT_GT(s.size(), 100u);
    EXPECT_EQ(json::parse(slurp(kRoot / "nhpp/truth.json")).at("rate").at("kind"), "sine");
}

TEST_F(Cli, FitEvalReportMatchesLibrary) {
    const auto data = (kRoot / "sim/events.csv").string();
    ASSERT_EQ(run("fit --data " + data + " --seed 3 --max-iters 60 --set fit.kernel_neurons=8 -o " +
                  (kRoot / "fit").string()),
              0);
    ASSERT_TRUE(fs::exists(kRoot / "fit/model.json"));
    ASSERT_TRUE(fs::exists(kRoot / "fit/trace.csv"));
    ASSERT_TRUE(fs::exists(kRoot / "fit/fit.resolved.json"));
    ASSERT_EQ(run("eval --data " + data + " --model " + (kRoot / "fit/model.json").string() + " --truth " +
                  (kRoot / "sim/truth.json").string() + " -o " + (kRoot / "eval").string()),
              0);
    const auto report = json::parse(slurp(kRoot / "eval/report.json"));

    const auto mj = json::parse(slurp(kRoot / "fit/model.json"));
    const auto m = mj.at("model").get<HawkesModel>();
    const auto raw = load_events(data);
    auto [scaled, info] = scale_times(raw);
    const auto test = split_chronological(scaled, {}).test;
    EXPECT_EQ(report.at("n_events"), test.size());
    EXPECT_DOUBLE_EQ(report.at("nll").get<double>(), -log_likelihood(m, test).total_ll);

    const auto gt = truth_json().get<GroundTruthModel>();
    const double truth_o = -gt_log_likelihood(gt, unscale_times(test, info)).total_ll;
    EXPECT_NEAR(report.at("truth").at("nll_original_units").get<double>(), truth_o, 1e-9 * std::abs(truth_o));
    EXPECT_NEAR(report.at("truth").at("nll").get<double>(), truth_o + test.size() * std::log(info.factor),
                1e-9 * std::abs(truth_o));
    for (const char* f : {"kernels.csv", "kernels.csv.json", "base.csv", "residuals.csv", "qq.csv", "intensity.csv",
                          "truth_residuals.csv"})
        EXPECT_TRUE(fs::exists(kRoot / "eval" / f)) << f;
    const auto side = json::parse(slurp(kRoot / "eval/kernels.csv.json"));
    EXPECT_EQ(side.at("model_hash"), model_hash(mj));
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
    const auto data = (kRoot / "sim/events.csv").string();
    const std::string common = "fit --data " + data + " --seed 9 --set fit.kernel_neurons=8 --set fit.patience=1000";
    ASSERT_EQ(run(common + " --max-iters 80 -o " + (kRoot / "full").string()), 0);
    ASSERT_EQ(run(common + " --max-iters 30 -o " + (kRoot / "part").string()), 0);
    ASSERT_EQ(run(common + " --max-iters 80 --resume " + (kRoot / "part/checkpoint.json").string() + " -o " +
                  (kRoot / "resumed").string()),
              0);
    const auto a = json::parse(slurp(kRoot / "full/model.json"));
    const auto b = json::parse(slurp(kRoot / "resumed/model.json"));
    EXPECT_EQ(a.at("model"), b.at("model"));
    EXPECT_EQ(a.at("best_iteration"), b.at("best_iteration"));
    EXPECT_EQ(slurp(kRoot / "full/trace.csv"), slurp(kRoot / "resumed/trace.csv"));
}

TEST_F(Cli, NhppFitAndEval) {
    const auto cfg = write_json("nhpp_fit.json", {{"model", "nhpp"},
                                                  {"fit", {{"base_mode", "net"}, {"base_neurons", 10}, {"max_iters", 40}}}});
    const auto data = (kRoot / "nhpp/events.csv").string();
    if (!fs::exists(data)) GTEST_SKIP() << "NhppSimulation did not run";
    ASSERT_EQ(run("fit -c " + cfg.string() + " --data " + data + " -o " + (kRoot / "nfit").string()), 0);
    ASSERT_EQ(run("eval --data " + data + " --model " + (kRoot / "nfit/model.json").string() + " --truth " +
                  (kRoot / "nhpp/truth.json").string() + " -o " + (kRoot / "neval").string()),
              0);
    const auto report = json::parse(slurp(kRoot / "neval/report.json"));
    EXPECT_TRUE(report.at("nll").is_number());
    EXPECT_TRUE(report.at("truth").at("nll").is_number());
}
