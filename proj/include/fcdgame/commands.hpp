#pragma once

// The four runner commands. Each writes plot-ready long-format CSVs, every
// file starting with a "# schema: <name>/v<k>" line.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fcdgame/analysis.hpp"
#include "fcdgame/model.hpp"
#include "fcdgame/scenario_io.hpp"
#include "fcdgame/sim.hpp"
#include "fcdgame/solver.hpp"
#include "fcdgame/validation.hpp"

namespace fcdgame {

enum class Mode { kSimulate, kAnalyze, kSolve, kValidate };

inline Mode mode_from_string(const std::string& s) {
  if (s == "simulate") return Mode::kSimulate;
  if (s == "analyze") return Mode::kAnalyze;
  if (s == "solve") return Mode::kSolve;
  if (s == "validate") return Mode::kValidate;
  throw ConfigError("unknown mode '" + s + "'");
}

struct RunManifest {
  std::string config_path;  // empty: built-in defaults
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<Approach> approaches{Approach::kGTP, Approach::kNC, Approach::kGK, Approach::kCL};
  std::filesystem::path output_dir{"out"};
  Mode mode{Mode::kSimulate};
};

inline void validate(const RunManifest& m) {
  if (m.seeds.empty()) throw ConfigError("no seeds given");
  if (m.approaches.empty()) throw ConfigError("no approaches given");
  std::error_code ec;
  std::filesystem::create_directories(m.output_dir, ec);
  if (ec || !std::filesystem::is_directory(m.output_dir))
    throw ConfigError("output directory '" + m.output_dir.string() + "' is not writable");
  const auto probe = m.output_dir / ".write-probe";
  {
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory '" + m.output_dir.string() + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

// Minimal CSV writer with locale-independent, fixed-precision numbers.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& schema,
            const std::vector<std::string>& columns)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    out_ << "# schema: " << schema << '\n';
    for (std::size_t k = 0; k < columns.size(); ++k) out_ << (k ? "," : "") << columns[k];
    out_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... values) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(values), first = false), ...);
    out_ << '\n';
  }

  const std::filesystem::path& path() const { return path_; }

  static std::string cell(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
  }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(unsigned long v) { return std::to_string(v); }
  static std::string cell(unsigned long long v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "true" : "false"; }
  static std::string cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + '"';
  }
  static std::string cell(const char* s) { return cell(std::string(s)); }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveOutput {
  SolveResult result;
  std::size_t tagged{0};
  std::vector<std::filesystem::path> files;
};

inline SolverOptions solver_options(const ScenarioConfig& config) {
  SolverOptions o;
  o.epsilon = config.convergence_epsilon;
  o.trust_weight = config.trust_weight;
  return o;
}

inline SolveOutput cmd_solve(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                             const SolverOptions& options) {
  const Game game = make_game(config);
  SolveOutput out;
  while (out.tagged < game.privacy_levels() && game.counts[out.tagged] < 1) ++out.tagged;
  if (out.tagged == game.privacy_levels()) throw ConfigError("every privacy level has count 0");
  out.result = solve_optimal(game, out.tagged, options);
  const auto& profile = out.result.profile;
  const auto& report = out.result.report;
  std::filesystem::create_directories(out_dir);

  {
    CsvWriter w(out_dir / "solve_strategy.csv", "fcdgame.solve_strategy/v1",
                {"privacy_level", "imprecision_radius_km", "count", "impact_level", "radius_km",
                 "expected_impact", "load", "rho", "probability"});
    for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi)
      for (std::size_t i = 0; i < game.impact_levels(); ++i)
        w.row(config.privacy_profiles[phi].phi, config.privacy_profiles[phi].imprecision_radius_km,
              game.counts[phi], static_cast<int>(i + 1), game.levels[i].radius_km,
              game.levels[i].expected_impact, game.levels[i].load, game.rho(phi, i),
              profile.p(phi, i));
    out.files.push_back(w.path());
  }
  {
    CsvWriter w(
        out_dir / "solve_summary.csv", "fcdgame.solve_summary/v1",
        {"privacy_level", "count", "expected_utility", "bandwidth_used", "budget", "tagged"});
    for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi)
      w.row(config.privacy_profiles[phi].phi, game.counts[phi], report.utility[phi],
            bandwidth_used(profile.strategies[phi], phi, game), game.budget, phi == out.tagged);
    out.files.push_back(w.path());
  }
  {
    CsvWriter w(out_dir / "solve_convergence.csv", "fcdgame.solve_convergence/v1",
                {"partition", "converged", "iterations", "robust_score", "partitions_evaluated",
                 "partitions_converged", "polished", "polish_sweeps"});
    w.row(report.partition.to_string(), report.converged, report.iterations, report.robust_score,
          static_cast<unsigned long long>(report.partitions_evaluated),
          static_cast<unsigned long long>(report.partitions_converged), report.polished,
          report.polish_sweeps);
    out.files.push_back(w.path());
  }
  {
    const auto path = out_dir / "solve_report.txt";
    std::ofstream f(path, std::ios::binary);
    f << "budget " << CsvWriter::cell(game.budget) << " bits/slot\n";
    f << "support " << report.partition.to_string() << '\n';
    f << "converged " << (report.converged ? "yes" : "no") << " after " << report.iterations
      << " sweeps; " << report.partitions_converged << '/' << report.partitions_evaluated
      << " partitions converged\n";
    for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi) {
      f << "privacy level " << config.privacy_profiles[phi].phi << " (n=" << game.counts[phi]
        << ", r=" << CsvWriter::cell(config.privacy_profiles[phi].imprecision_radius_km) << " km"
        << (phi == out.tagged ? ", tagged" : "") << "): p = (";
      for (std::size_t i = 0; i < game.impact_levels(); ++i)
        f << (i ? ", " : "") << CsvWriter::cell(profile.p(phi, i));
      f << ")  U = " << CsvWriter::cell(report.utility[phi]) << '\n';
    }
    out.files.push_back(path);
  }
  return out;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

enum class AnalysisGrid { kAll, kPrivacy, kEstimation };

inline AnalysisGrid grid_from_string(const std::string& s) {
  if (s == "all") return AnalysisGrid::kAll;
  if (s == "privacy") return AnalysisGrid::kPrivacy;
  if (s == "estimation") return AnalysisGrid::kEstimation;
  throw ConfigError("unknown grid '" + s + "' (expected all, privacy or estimation)");
}

inline std::vector<std::filesystem::path> cmd_analyze(const ScenarioConfig& config,
                                                      const std::filesystem::path& out_dir,
                                                      AnalysisGrid grid = AnalysisGrid::kAll) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  if (grid != AnalysisGrid::kEstimation) {
    CsvWriter w(out_dir / "analysis_privacy.csv", "fcdgame.analysis_privacy/v1",
                {"radius_km", "bandwidth_fraction", "privacy_share", "n_accurate", "n_private",
                 "utility", "relative_utility"});
    for (double r : config.analysis.privacy_radii_km)
      for (const auto& p : analysis::privacy_bandwidth_grid(config, r))
        w.row(p.radius_km, p.bandwidth_fraction, p.privacy_share, p.n_accurate, p.n_private,
              p.utility, p.relative_utility);
    files.push_back(w.path());
  }
  if (grid != AnalysisGrid::kPrivacy) {
    for (auto kind : {analysis::Misestimation::kOver, analysis::Misestimation::kUnder}) {
      const bool over = kind == analysis::Misestimation::kOver;
      const std::string name = over ? "analysis_overestimation" : "analysis_underestimation";
      CsvWriter w(out_dir / (name + ".csv"), "fcdgame." + name + "/v1",
                  {"n_accurate", "n_private", "shift", "radius_km", "correct_utility",
                   "expected_utility", "actual_utility", "loss"});
      for (const auto& p : analysis::estimation_grid(config, kind))
        w.row(p.n_accurate, p.n_private, p.shift, config.analysis.estimation_radius_km,
              p.correct_utility, p.expected_utility, p.actual_utility, p.loss);
      files.push_back(w.path());
    }
  }
  return files;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct AggregateRow {
  Approach approach{Approach::kGTP};
  double bandwidth{0.0};
  double privacy_share{std::numeric_limits<double>::quiet_NaN()};
  int runs{0};
  double mean_relative_utility{0.0};
  double sd_relative_utility{0.0};
  double mean_used_bandwidth{0.0};
  double sd_used_bandwidth{0.0};
  double max_used_bandwidth{0.0};
  int failed_runs{0};
};

struct SimulateOutput {
  std::vector<sim::RunSummary> runs;
  std::vector<AggregateRow> summary;
  std::vector<std::string> failures;
  std::vector<std::filesystem::path> files;
};

namespace detail {

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {m, 0.0};
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size() - 1))};
}

struct SimJob {
  ScenarioConfig config;
  Approach approach{Approach::kGTP};
  std::uint64_t seed{0};
  std::vector<int> split;
  double share{0.0};
  std::size_t group{0};  // index into the summary rows
};

struct SimResult {
  std::optional<sim::RunSummary> summary;
  std::string error;
};

// Runs the jobs on a small worker pool; results land at the job's index so
// the collector writes them in a fixed order.
inline std::vector<SimResult> run_jobs(const std::vector<SimJob>& jobs, unsigned workers) {
  std::vector<SimResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const auto& j = jobs[k];
      try {
        results[k].summary = sim::run_simulation(j.config, j.approach, j.seed, j.split);
      } catch (const std::exception& e) {
        results[k].error = e.what();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  return results;
}

}  // namespace detail

// Runs every (bandwidth, privacy share, approach, seed) combination across
// worker threads. A failed run is recorded and the remaining runs continue.
inline SimulateOutput cmd_simulate(const ScenarioConfig& config, const RunManifest& manifest,
                                   unsigned workers = std::thread::hardware_concurrency()) {
  validate(manifest);
  SimulateOutput out;
  const auto& dir = manifest.output_dir;

  std::vector<double> bandwidths = config.sim.bandwidth_sweep_bits_per_slot;
  if (bandwidths.empty()) bandwidths.push_back(config.bandwidth_bits_per_slot);
  std::vector<double> shares = config.sim.privacy_share_sweep;
  const bool share_sweep = !shares.empty();
  if (!share_sweep) shares.push_back(std::numeric_limits<double>::quiet_NaN());

  std::vector<detail::SimJob> jobs;
  for (double bw : bandwidths)
    for (double share : shares) {
      ScenarioConfig c = config;
      c.bandwidth_bits_per_slot = bw;
      std::vector<int> split;
      if (share_sweep) split = sim::apportion(c.sim.vehicle_count, {1.0 - share, share});
      for (Approach a : manifest.approaches) {
        AggregateRow agg;
        agg.approach = a;
        agg.bandwidth = bw;
        agg.privacy_share = share;
        out.summary.push_back(agg);
        for (std::uint64_t seed : manifest.seeds)
          jobs.push_back({c, a, seed, split, share, out.summary.size() - 1});
      }
    }
  auto results = detail::run_jobs(jobs, workers);

  CsvWriter runs_csv(
      dir / "sim_runs.csv", "fcdgame.sim_runs/v1",
      {"run", "approach", "seed", "bandwidth", "privacy_share", "mean_relative_utility",
       "mean_used_bandwidth", "max_used_bandwidth", "solver_failures", "status", "file"});
  std::vector<std::vector<double>> utilities(out.summary.size()), used(out.summary.size());
  for (std::size_t id = 0; id < jobs.size(); ++id) {
    const auto& j = jobs[id];
    auto& agg = out.summary[j.group];
    const double bw = j.config.bandwidth_bits_per_slot;
    const auto seed = static_cast<unsigned long long>(j.seed);
    const std::string approach = to_string(j.approach);
    if (!results[id].summary) {
      ++agg.failed_runs;
      out.failures.push_back("run " + std::to_string(id) + " (" + approach + ", seed " +
                             std::to_string(j.seed) + "): " + results[id].error);
      const double na = std::numeric_limits<double>::quiet_NaN();
      runs_csv.row(id, approach, seed, bw, j.share, na, na, na, 0, "failed", "");
      continue;
    }
    auto& s = *results[id].summary;
    s.privacy_share = j.share;
    char name[64];
    std::snprintf(name, sizeof name, "sim_run_%04zu.csv", id);
    CsvWriter w(dir / name, "fcdgame.sim_metrics/v1",
                {"run", "approach", "seed", "bandwidth", "privacy_share", "window", "vehicle",
                 "privacy_level", "relative_utility", "used_bandwidth"});
    for (const auto& r : s.rows)
      w.row(id, approach, seed, bw, j.share, r.window, r.vehicle, r.privacy_level,
            r.relative_utility, r.used_bandwidth);
    out.files.push_back(w.path());
    runs_csv.row(id, approach, seed, bw, j.share, s.mean_relative_utility, s.mean_used_bandwidth,
                 s.max_used_bandwidth, s.solver_failures, "ok", name);
    utilities[j.group].push_back(s.mean_relative_utility);
    used[j.group].push_back(s.mean_used_bandwidth);
    agg.max_used_bandwidth = std::max(agg.max_used_bandwidth, s.max_used_bandwidth);
    s.rows.clear();
    out.runs.push_back(std::move(s));
  }
  for (std::size_t g = 0; g < out.summary.size(); ++g) {
    auto& agg = out.summary[g];
    agg.runs = static_cast<int>(utilities[g].size());
    std::tie(agg.mean_relative_utility, agg.sd_relative_utility) = detail::mean_sd(utilities[g]);
    std::tie(agg.mean_used_bandwidth, agg.sd_used_bandwidth) = detail::mean_sd(used[g]);
  }
  out.files.push_back(runs_csv.path());

  CsvWriter w(
      dir / "sim_summary.csv", "fcdgame.sim_summary/v1",
      {"approach", "bandwidth", "privacy_share", "runs", "failed_runs", "mean_relative_utility",
       "sd_relative_utility", "mean_used_bandwidth", "sd_used_bandwidth", "max_used_bandwidth"});
  for (const auto& a : out.summary)
    w.row(to_string(a.approach), a.bandwidth, a.privacy_share, a.runs, a.failed_runs,
          a.mean_relative_utility, a.sd_relative_utility, a.mean_used_bandwidth,
          a.sd_used_bandwidth, a.max_used_bandwidth);
  out.files.push_back(w.path());
  if (!out.failures.empty()) {
    const auto path = dir / "sim_failures.txt";
    std::ofstream f(path, std::ios::binary);
    for (const auto& line : out.failures) f << line << '\n';
    out.files.push_back(path);
  }
  return out;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateOutput {
  std::vector<validation::SuiteResult> suites;
  bool passed{true};
  std::vector<std::filesystem::path> files;
};

// Timings are left out of the CSV so that repeated runs stay byte-identical.
inline ValidateOutput cmd_validate(const validation::Plan& plan, const SolverOptions& options,
                                   const std::filesystem::path& out_dir) {
  ValidateOutput out;
  out.suites = validation::run_all(plan, options);
  for (const auto& s : out.suites) out.passed = out.passed && s.passed;
  std::filesystem::create_directories(out_dir);
  CsvWriter w(out_dir / "validation.csv", "fcdgame.validation/v1",
              {"suite", "passed", "tolerance", "checked", "failures", "worst", "detail"});
  for (const auto& s : out.suites)
    w.row(s.name, s.passed, s.tolerance, s.checked, s.failures, s.worst, s.detail);
  out.files.push_back(w.path());
  return out;
}

}  // namespace fcdgame
