// Command-line runner: simulate, analyze, solve, validate.

#include "fcdgame/fcdgame.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitGuard = 3;
constexpr int kExitValidation = 4;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_summary(const fcdgame::SimulateOutput& out) {
  std::cout << "approach  bandwidth  share  runs  utility (mean +- sd)  used bandwidth\n";
  for (const auto& a : out.summary) {
    char line[160];
    std::snprintf(
        line, sizeof line, "%-8s  %9.4g  %5s  %4d  %.4f +- %.4f       %.4g\n",
        fcdgame::to_string(a.approach).c_str(), a.bandwidth,
        std::isnan(a.privacy_share) ? "-" : fcdgame::CsvWriter::cell(a.privacy_share).c_str(),
        a.runs, a.mean_relative_utility, a.sd_relative_utility, a.mean_used_bandwidth);
    std::cout << line;
  }
  for (const auto& f : out.failures) std::cout << "FAILED " << f << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-aware floating-car-data subscription game"};
  std::string mode = "simulate";
  std::string config_path;
  std::string seeds = "1,2,3,4,5";
  std::string approaches = "GTP,NC,GK,CL";
  std::string out_dir = "out";
  std::string grid = "all";
  bool print_config = false;
  bool invert_lambda = false;
  fcdgame::validation::Plan plan;

  app.add_option("--mode", mode, "simulate | analyze | solve | validate")
      ->envname("FCDGAME_MODE")
      ->check(CLI::IsMember({"simulate", "analyze", "solve", "validate"}));
  app.add_option("--config", config_path, "scenario JSON (defaults built in)")
      ->envname("FCDGAME_CONFIG");
  app.add_option("--seeds", seeds, "comma-separated seeds")->envname("FCDGAME_SEEDS");
  app.add_option("--approaches", approaches, "comma-separated subset of GTP,NC,GK,CL")
      ->envname("FCDGAME_APPROACHES");
  app.add_option("--out", out_dir, "output directory")->envname("FCDGAME_OUT");
  app.add_option("--grid", grid, "analyze: all | privacy | estimation")
      ->envname("FCDGAME_GRID")
      ->check(CLI::IsMember({"all", "privacy", "estimation"}));
  app.add_flag("--print-config", print_config, "print the resolved scenario as JSON and exit");
  app.add_option("--validate-seed", plan.seed, "validate: RNG seed");
  app.add_option("--oracle-instances", plan.oracle_instances, "validate: random games vs grid");
  app.add_option("--rho-samples", plan.rho_samples, "validate: Monte-Carlo samples per pair");
  app.add_flag("--invert-lambda", invert_lambda,
               "validate: inject a solver fault (negative control)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const fcdgame::ScenarioConfig config =
        config_path.empty() ? fcdgame::default_scenario() : fcdgame::load_scenario(config_path);
    fcdgame::validate(config);
    if (print_config) {
      std::cout << fcdgame::scenario_to_json(config).dump(2) << '\n';
      return kExitOk;
    }

    fcdgame::RunManifest manifest;
    manifest.config_path = config_path;
    manifest.output_dir = out_dir;
    manifest.mode = fcdgame::mode_from_string(mode);
    manifest.seeds.clear();
    for (const auto& s : split_list(seeds)) {
      try {
        manifest.seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw fcdgame::ConfigError("invalid seed '" + s + "'");
      }
    }
    manifest.approaches.clear();
    for (const auto& a : split_list(approaches))
      manifest.approaches.push_back(fcdgame::approach_from_string(a));
    fcdgame::validate(manifest);

    auto options = fcdgame::solver_options(config);
    options.invert_lambda = invert_lambda;

    switch (manifest.mode) {
      case fcdgame::Mode::kSolve: {
        const auto out = fcdgame::cmd_solve(config, manifest.output_dir, options);
        std::ifstream report(manifest.output_dir / "solve_report.txt");
        std::cout << report.rdbuf();
        return kExitOk;
      }
      case fcdgame::Mode::kAnalyze: {
        for (const auto& f :
             fcdgame::cmd_analyze(config, manifest.output_dir, fcdgame::grid_from_string(grid)))
          std::cout << "wrote " << f.string() << '\n';
        return kExitOk;
      }
      case fcdgame::Mode::kSimulate: {
        const auto out = fcdgame::cmd_simulate(config, manifest);
        print_summary(out);
        return kExitOk;
      }
      case fcdgame::Mode::kValidate: {
        const auto out = fcdgame::cmd_validate(plan, options, manifest.output_dir);
        for (const auto& s : out.suites) {
          std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << "  [" << s.tolerance
                    << "]  checked " << s.checked << ", worst " << s.worst;
          if (!s.detail.empty()) std::cout << "  (" << s.detail << ")";
          std::cout << '\n';
        }
        return out.passed ? kExitOk : kExitValidation;
      }
    }
  } catch (const fcdgame::GuardError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitGuard;
  } catch (const fcdgame::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}
