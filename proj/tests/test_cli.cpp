#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include "fcdgame/commands.hpp"

using namespace fcdgame;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FCDGAME_CLI_PATH;
const fs::path kScenarios = FCDGAME_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "fcdgame_tests" /
                       (std::string(info->test_suite_name()) + "." + info->name()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Outcome {
  int code;
  std::string out;
};

// Runs the binary with stdout captured; stderr goes to a side file.
Outcome run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path log = dir / "stdout.txt";
  const std::string cmd =
      env + " " + kCli + " " + args + " >" + log.string() + " 2>" + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

fs::path write_json(const fs::path& dir, const std::string& name, const std::string& body) {
  const auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

std::set<std::string> csv_names(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") out.insert(e.path().filename().string());
  return out;
}

void expect_same_csvs(const fs::path& a, const fs::path& b) {
  const auto names = csv_names(a);
  ASSERT_FALSE(names.empty());
  EXPECT_EQ(names, csv_names(b));
  for (const auto& n : names) EXPECT_EQ(slurp(a / n), slurp(b / n)) << n;
}

ScenarioConfig small_sim() {
  auto c = default_scenario();
  c.sim.vehicle_count = 20;
  c.sim.slots = 60;
  return c;
}

RunManifest manifest_for(const fs::path& dir, std::vector<Approach> approaches,
                         std::vector<std::uint64_t> seeds) {
  RunManifest m;
  m.mode = Mode::kSimulate;
  m.output_dir = dir;
  m.approaches = std::move(approaches);
  m.seeds = std::move(seeds);
  return m;
}

const AggregateRow& find_row(const SimulateOutput& out, Approach a, double bw, double share) {
  for (const auto& r : out.summary)
    if (r.approach == a && r.bandwidth == bw &&
        (std::isnan(share) ? std::isnan(r.privacy_share) : r.privacy_share == share))
      return r;
  throw std::runtime_error("missing summary row");
}

}  // namespace

// ----- scenario files -------------------------------------------------------

TEST(ScenarioIo, RoundTripKeepsEverything) {
  auto c = default_scenario();
  c.privacy_profiles = {{1, 0.0, 2}, {2, 3.5, 4}};
  c.sim.slots = 123;
  c.analysis.estimation_shift = 2;
  const auto back = scenario_from_json(scenario_to_json(c));
  EXPECT_EQ(scenario_to_json(back).dump(), scenario_to_json(c).dump());
}

TEST(ScenarioIo, UnknownKeyIsAConfigError) {
  EXPECT_THROW(scenario_from_json(json::parse(R"({"bandwith": 3})")), ConfigError);
  EXPECT_THROW(scenario_from_json(json::parse(R"({"sim": {"slot": 3}})")), ConfigError);
}

TEST(ScenarioIo, WrongTypeIsAConfigError) {
  EXPECT_THROW(scenario_from_json(json::parse(R"({"trust_weight": "high"})")), ConfigError);
}

TEST(ScenarioIo, FrequenciesBecomeLoads) {
  const auto c = scenario_from_json(
      json::parse(R"({"level_frequencies": [0.5, 0.3, 0.15, 0.05], "required_load": 20})"));
  EXPECT_NEAR(c.impact_levels[0].load, 10.0, 1e-12);
  EXPECT_NEAR(c.impact_levels[3].load, 1.0, 1e-12);
  EXPECT_NEAR(c.bandwidth_bits_per_slot, 2.0, 1e-12);
}

TEST(ScenarioIo, ShippedScenariosLoad) {
  for (const auto& e : fs::directory_iterator(kScenarios))
    EXPECT_NO_THROW(load_scenario(e.path().string())) << e.path();
}

// ----- solve ----------------------------------------------------------------

TEST(Solve, LoneVehicleEchoesGreedyStrategy) {
  const auto dir = scratch("solve");
  const auto c = default_scenario();
  const auto out = cmd_solve(c, dir, solver_options(c));
  const auto greedy =
      oracle::single_vehicle_greedy(c.impact_levels, {1, 1, 1, 1}, c.bandwidth_bits_per_slot);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.result.profile.p(0, i), greedy[i], 1e-12);
  const auto csv = slurp(dir / "solve_strategy.csv");
  EXPECT_EQ(csv.rfind("# schema: fcdgame.solve_strategy/v1\n", 0), 0u);
}

TEST(Solve, CliPrintsReportAndExitsZero) {
  const auto dir = scratch("cli");
  const auto r = run_cli("--mode solve --out " + (dir / "out").string(), dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("p = (0, 1, 1, 1)"), std::string::npos) << r.out;
}

TEST(Solve, TooManyPairsIsAGuardError) {
  const auto dir = scratch("guard");
  std::ostringstream levels;
  for (int i = 0; i < 11; ++i)
    levels << (i ? "," : "") << R"({"radius_km": 1, "expected_impact": )" << (i + 1)
           << R"(, "load": 1})";
  const auto cfg = write_json(dir, "big.json",
                              R"({"impact_levels": [)" + levels.str() +
                                  R"(], "privacy_profiles": [{"count": 2},
                                   {"imprecision_radius_km": 2, "count": 2}]})");
  const auto r =
      run_cli("--mode solve --config " + cfg.string() + " --out " + (dir / "out").string(), dir);
  EXPECT_EQ(r.code, 3);
}

TEST(Solve, SameConfigSameFiles) {
  const auto dir = scratch("twice");
  const auto cfg = (kScenarios / "two_privacy_levels.json").string();
  ASSERT_EQ(run_cli("--mode solve --config " + cfg + " --out " + (dir / "a").string(), dir).code,
            0);
  ASSERT_EQ(run_cli("--mode solve --config " + cfg + " --out " + (dir / "b").string(), dir).code,
            0);
  expect_same_csvs(dir / "a", dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "solve_report.txt"), slurp(dir / "b" / "solve_report.txt"));
}

// ----- exit codes and flags -------------------------------------------------

TEST(Cli, MalformedJsonExitsTwo) {
  const auto dir = scratch("bad");
  const auto cfg = write_json(dir, "bad.json", "{ \"seed\": ");
  EXPECT_EQ(run_cli("--mode solve --config " + cfg.string(), dir).code, 2);
}

TEST(Cli, MissingConfigExitsTwo) {
  const auto dir = scratch("missing");
  EXPECT_EQ(run_cli("--config " + (dir / "nope.json").string(), dir).code, 2);
}

TEST(Cli, InvalidValuesExitTwo) {
  const auto dir = scratch("invalid");
  const auto cfg = write_json(dir, "neg.json", R"({"bandwidth_bits_per_slot": -1})");
  EXPECT_EQ(run_cli("--mode solve --config " + cfg.string(), dir).code, 2);
  EXPECT_EQ(run_cli("--mode nonsense", dir).code, 2);
  EXPECT_EQ(run_cli("--approaches XYZ --out " + (dir / "o").string(), dir).code, 2);
  EXPECT_EQ(run_cli("--seeds , --out " + (dir / "o").string(), dir).code, 2);
}

TEST(Cli, EnvironmentMirrorsFlags) {
  const auto dir = scratch("env");
  const auto out = dir / "out";
  const auto r = run_cli("", dir, "FCDGAME_MODE=solve FCDGAME_OUT=" + out.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(out / "solve_summary.csv"));
}

TEST(Cli, PrintConfigIsLoadable) {
  const auto dir = scratch("print");
  const auto r =
      run_cli("--print-config --config " + (kScenarios / "privacy_sweep.json").string(), dir);
  ASSERT_EQ(r.code, 0);
  const auto c = scenario_from_json(json::parse(r.out));
  EXPECT_EQ(c.privacy_profiles.size(), 2u);
}

// ----- analyze --------------------------------------------------------------

TEST(Analyze, WritesOneCsvPerStudyWithSchema) {
  const auto dir = scratch("analyze");
  const auto files = cmd_analyze(default_scenario(), dir, AnalysisGrid::kAll);
  EXPECT_EQ(files.size(), 3u);
  for (const auto& f : files) EXPECT_EQ(slurp(f).rfind("# schema: fcdgame.analysis_", 0), 0u) << f;
}

TEST(Analyze, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch("analyze");
  ASSERT_EQ(run_cli("--mode analyze --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run_cli("--mode analyze --out " + (dir / "b").string(), dir).code, 0);
  expect_same_csvs(dir / "a", dir / "b");
}

// ----- simulate -------------------------------------------------------------

TEST(Simulate, TwoApproachesThreeSeedsGiveSixRunFiles) {
  const auto dir = scratch("sim");
  const auto out =
      cmd_simulate(small_sim(), manifest_for(dir, {Approach::kGTP, Approach::kNC}, {1, 2, 3}));
  int runs = 0;
  for (const auto& n : csv_names(dir)) runs += n.rfind("sim_run_", 0) == 0;
  EXPECT_EQ(runs, 6);
  EXPECT_TRUE(fs::exists(dir / "sim_summary.csv"));
  EXPECT_EQ(out.summary.size(), 2u);
  EXPECT_TRUE(out.failures.empty());
}

TEST(Simulate, WorkerCountDoesNotChangeOutput) {
  const auto a = scratch("one");
  const auto b = scratch("four");
  const auto m = [](const fs::path& d) {
    return manifest_for(d, {Approach::kGTP, Approach::kCL}, {4, 5});
  };
  cmd_simulate(small_sim(), m(a), 1);
  cmd_simulate(small_sim(), m(b), 4);
  expect_same_csvs(a, b);
}

TEST(Simulate, FailedRunIsListedAndOthersContinue) {
  const auto dir = scratch("fail");
  auto c = small_sim();
  c.privacy_profiles = {{1, 0.0, 1}, {2, 2.0, 1}};
  // A split that does not match the profiles makes every run throw; the
  // summary must still be written.
  c.sim.privacy_share_sweep = {0.5};
  c.privacy_profiles.push_back({3, 4.0, 1});
  const auto out = cmd_simulate(c, manifest_for(dir, {Approach::kNC}, {1, 2}));
  EXPECT_EQ(out.failures.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "sim_failures.txt"));
  EXPECT_NE(slurp(dir / "sim_runs.csv").find("failed"), std::string::npos);
}

TEST(Simulate, CliRunsAreByteIdentical) {
  const auto dir = scratch("simcli");
  const auto cfg = write_json(dir, "small.json", R"({"sim": {"vehicle_count": 15, "slots": 70}})");
  const std::string common = "--config " + cfg.string() + " --seeds 7,8 --approaches GTP,GK ";
  ASSERT_EQ(run_cli(common + "--out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run_cli(common + "--out " + (dir / "b").string(), dir).code, 0);
  expect_same_csvs(dir / "a", dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "sim_summary.csv").rfind("# schema: fcdgame.sim_summary/v1\n", 0),
            0u);
}

// Bandwidth sweep {0.1, 1, 10} bits per slot, three seeds.
TEST(Simulate, BandwidthSweepOrdersGtpAgainstCl) {
  const auto dir = scratch("bw");
  auto c = load_scenario((kScenarios / "bandwidth_sweep.json").string());
  const auto out = cmd_simulate(c, manifest_for(dir, {Approach::kGTP, Approach::kCL}, {1, 2, 3}));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double bw : {1.0, 10.0})
    EXPECT_GT(find_row(out, Approach::kGTP, bw, nan).mean_relative_utility,
              find_row(out, Approach::kCL, bw, nan).mean_relative_utility)
        << "bandwidth " << bw;
  EXPECT_LT(find_row(out, Approach::kGTP, 0.1, nan).mean_relative_utility,
            find_row(out, Approach::kCL, 0.1, nan).mean_relative_utility);
}

// Privacy share 0 -> 1 at 10 km imprecision: NC loses the most utility.
TEST(Simulate, PrivacySweepHurtsNcMost) {
  const auto dir = scratch("privacy");
  auto c = load_scenario((kScenarios / "privacy_sweep.json").string());
  c.sim.privacy_share_sweep = {0.0, 1.0};
  const auto out = cmd_simulate(
      c,
      manifest_for(dir, {Approach::kGTP, Approach::kNC, Approach::kGK, Approach::kCL}, {1, 2, 3}));
  const double bw = c.bandwidth_bits_per_slot;
  auto drop = [&](Approach a) {
    return find_row(out, a, bw, 0.0).mean_relative_utility -
           find_row(out, a, bw, 1.0).mean_relative_utility;
  };
  for (auto a : {Approach::kGTP, Approach::kGK, Approach::kCL})
    EXPECT_GT(drop(Approach::kNC), drop(a)) << to_string(a);
}

// ----- validate -------------------------------------------------------------

namespace {
const std::string kQuickValidate = "--mode validate --oracle-instances 20 ";
}

TEST(Validate, QuickPlanPassesAndListsTolerances) {
  const auto dir = scratch("validate");
  const auto r = run_cli(kQuickValidate + "--out " + (dir / "out").string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
  for (const char* suite :
       {"adaptation-factor", "oracle-equivalence", "single-vehicle", "concavity", "nash-deviation"})
    EXPECT_NE(r.out.find(std::string("PASS ") + suite), std::string::npos) << suite;
  const auto csv = slurp(dir / "out" / "validation.csv");
  EXPECT_NE(csv.find("tolerance"), std::string::npos);
  EXPECT_NE(csv.find("<= 1e-06"), std::string::npos);
}

TEST(Validate, InjectedLambdaFaultFailsNamedSuite) {
  const auto dir = scratch("fault");
  const auto r = run_cli(kQuickValidate + "--invert-lambda --out " + (dir / "out").string(), dir);
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.out.find("FAIL oracle-equivalence"), std::string::npos) << r.out;
}

TEST(Validate, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch("again");
  ASSERT_EQ(run_cli(kQuickValidate + "--out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run_cli(kQuickValidate + "--out " + (dir / "b").string(), dir).code, 0);
  expect_same_csvs(dir / "a", dir / "b");
}
