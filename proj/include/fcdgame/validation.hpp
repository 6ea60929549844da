#pragma once

// End-to-end self checks: Monte-Carlo adaptation factor, solver against the
// brute-force grid, single-vehicle exactness, concavity and unilateral
// deviations.

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fcdgame/model.hpp"
#include "fcdgame/obfuscation.hpp"
#include "fcdgame/oracle.hpp"
#include "fcdgame/solver.hpp"

namespace fcdgame::validation {

struct InstanceLimits {
  int max_privacy_levels{2};
  int max_impact_levels{3};
  int max_total_vehicles{4};
};

// Random game with increasing impacts, assorted radii and loads, and a budget
// between 5% and 95% of the exact-location requirement.
template <class Rng>
Game random_game(Rng& rng, const InstanceLimits& lim = {}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int P = std::uniform_int_distribution<int>(1, lim.max_privacy_levels)(rng);
  const int L = std::uniform_int_distribution<int>(1, lim.max_impact_levels)(rng);
  std::vector<double> lower, expected, radius, load;
  double mu = 0.5 + u(rng);
  for (int i = 0; i < L; ++i) {
    lower.push_back(mu);
    expected.push_back(mu);
    mu *= 1.5 + 10.0 * u(rng);
    radius.push_back(0.5 + 100.0 * u(rng));
    load.push_back(0.1 + 10.0 * u(rng));
  }
  Game g;
  g.levels = ImpactLevelTable::from_bounds(lower, expected, radius, load);
  std::vector<double> radii{0.0};
  for (int k = 1; k < P; ++k) radii.push_back(20.0 * u(rng));
  g.rho = RhoTable::from_radii(radii, g.levels);
  int left = lim.max_total_vehicles;
  for (int k = 0; k < P; ++k) {
    const int reserve = P - k - 1;
    const int hi = std::max(1, left - reserve);
    const int c = std::uniform_int_distribution<int>(1, hi)(rng);
    g.counts.push_back(c);
    left -= c;
  }
  double required = 0.0;
  for (int i = 0; i < L; ++i) required += g.load(0, static_cast<std::size_t>(i));
  g.budget = required * (0.05 + 0.9 * u(rng));
  return g;
}

struct SuiteResult {
  std::string name;
  bool passed{true};
  std::string tolerance;
  double worst{0.0};  // worst observed statistic, in the suite's own units
  int checked{0};
  int failures{0};
  double seconds{0.0};
  std::string detail;  // first failure
};

struct Plan {
  std::uint64_t seed{20240601};
  int rho_pairs{20};
  std::uint64_t rho_samples{1'000'000};
  double rho_tolerance{0.02};
  int oracle_instances{200};
  double grid_step{0.02};
  double oracle_tolerance{1e-3};
  int linear_instances{200};
  double linear_tolerance{1e-9};
  int concavity_profiles{100};
  double concavity_tolerance{1e-6};
  int nash_trials{1000};
  double nash_tolerance{1e-6};
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_{std::chrono::steady_clock::now()};
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

inline SuiteResult start(std::string name, std::string tolerance) {
  SuiteResult r;
  r.name = std::move(name);
  r.tolerance = std::move(tolerance);
  return r;
}

// Pairs with r_phi / r_i in [0, 2] keep the Monte-Carlo hit rate high
// enough for a 2% bound at 1e6 samples.
inline SuiteResult rho_suite(const Plan& plan) {
  detail::Stopwatch clock;
  SuiteResult r =
      start("adaptation-factor", "relative error <= " + detail::fmt(plan.rho_tolerance));
  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < plan.rho_pairs; ++k) {
    const double r_i = 0.1 + 10.0 * u(rng);
    const double r_phi = 2.0 * r_i * u(rng);
    const double mc = oracle::monte_carlo_rho(r_phi, r_i, plan.rho_samples, rng);
    const double exact = adaptation_factor(r_phi, r_i);
    const double err = std::abs(mc - exact) / exact;
    r.worst = std::max(r.worst, err);
    ++r.checked;
    if (err > plan.rho_tolerance) {
      ++r.failures;
      if (r.detail.empty())
        r.detail = "r_phi=" + detail::fmt(r_phi) + " r_i=" + detail::fmt(r_i) +
                   " monte-carlo=" + detail::fmt(mc) + " closed form=" + detail::fmt(exact);
    }
  }
  r.passed = r.failures == 0;
  r.seconds = clock.seconds();
  return r;
}

// Solver utility against the grid optimum; also collects the solved games so
// the deviation suite checks the same outputs.
inline SuiteResult oracle_suite(const Plan& plan, const SolverOptions& options,
                                std::vector<std::pair<Game, StrategyProfile>>* solved = nullptr) {
  detail::Stopwatch clock;
  SuiteResult r =
      start("oracle-equivalence", "solver >= (1 - " + detail::fmt(plan.oracle_tolerance) +
                                      ") x grid(step " + detail::fmt(plan.grid_step) + ")");
  std::mt19937_64 rng(plan.seed + 1);
  r.worst = 1.0;
  for (int k = 0; k < plan.oracle_instances; ++k) {
    const Game g = random_game(rng);
    const auto s = solve_optimal(g, 0, options);
    const auto grid = oracle::grid_search(g, plan.grid_step);
    const double ratio = grid.utility > 0.0 ? s.report.utility[0] / grid.utility : 1.0;
    r.worst = std::min(r.worst, ratio);
    ++r.checked;
    if (ratio < 1.0 - plan.oracle_tolerance || !is_feasible(s.profile, g)) {
      ++r.failures;
      if (r.detail.empty())
        r.detail = "instance " + std::to_string(k) + ": solver " +
                   detail::fmt(s.report.utility[0]) + " grid " + detail::fmt(grid.utility);
    }
    if (solved) solved->emplace_back(g, s.profile);
  }
  r.passed = r.failures == 0;
  r.seconds = clock.seconds();
  return r;
}

// One vehicle, one privacy level: the optimum is the fractional knapsack.
inline SuiteResult linear_suite(const Plan& plan, const SolverOptions& options) {
  detail::Stopwatch clock;
  SuiteResult r =
      start("single-vehicle",
            "|solver - knapsack| <= " + detail::fmt(plan.linear_tolerance) + " x max(1, U)");
  std::mt19937_64 rng(plan.seed + 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < plan.linear_instances; ++k) {
    InstanceLimits lim;
    lim.max_privacy_levels = 1;
    lim.max_total_vehicles = 1;
    lim.max_impact_levels = 4;
    Game g = random_game(rng, lim);
    if (k % 2 == 1) {  // a privacy-sensitive lone vehicle
      g.rho = RhoTable::from_radii({20.0 * u(rng)}, g.levels);
    }
    const auto s = solve_optimal(g, 0, options);
    const auto greedy = oracle::single_vehicle_greedy(g.levels, g.rho.row(0), g.budget);
    StrategyProfile gp = StrategyProfile::zeros(g.counts, g.impact_levels());
    gp.strategies[0] = greedy;
    const double ug = expected_utility(0, gp, g.levels, g.rho);
    const double err = std::abs(s.report.utility[0] - ug) / std::max(1.0, std::abs(ug));
    r.worst = std::max(r.worst, err);
    ++r.checked;
    if (err > plan.linear_tolerance) {
      ++r.failures;
      if (r.detail.empty())
        r.detail = "instance " + std::to_string(k) + ": solver " +
                   detail::fmt(s.report.utility[0]) + " knapsack " + detail::fmt(ug);
    }
  }
  r.passed = r.failures == 0;
  r.seconds = clock.seconds();
  return r;
}

// Second derivative along the bandwidth constraint at random feasible
// profiles, for every direction level.
inline SuiteResult concavity_suite(const Plan& plan) {
  detail::Stopwatch clock;
  SuiteResult r =
      start("concavity", "second derivative <= " + detail::fmt(plan.concavity_tolerance));
  std::mt19937_64 rng(plan.seed + 3);
  r.worst = -std::numeric_limits<double>::infinity();
  int made = 0;
  while (made < plan.concavity_profiles) {
    InstanceLimits lim;
    lim.max_impact_levels = 4;
    const Game g = random_game(rng, lim);
    if (g.impact_levels() < 2) continue;
    StrategyProfile p = StrategyProfile::zeros(g.counts, g.impact_levels());
    for (std::size_t phi = 0; phi < g.privacy_levels(); ++phi)
      p.strategies[phi] = random_feasible_strategy(phi, g, rng);
    ++made;
    for (std::size_t phi = 0; phi < g.privacy_levels(); ++phi)
      for (std::size_t l = 1; l < g.impact_levels(); ++l) {
        const double d2 = constrained_second_derivative(p, phi, l, g.levels, g.rho) + 0.0;  // no -0
        r.worst = std::max(r.worst, d2);
        ++r.checked;
        if (d2 > plan.concavity_tolerance) {
          ++r.failures;
          if (r.detail.empty()) r.detail = "second derivative " + detail::fmt(d2);
        }
      }
  }
  r.passed = r.failures == 0;
  r.seconds = clock.seconds();
  return r;
}

inline SuiteResult nash_suite(const Plan& plan,
                              const std::vector<std::pair<Game, StrategyProfile>>& solved) {
  detail::Stopwatch clock;
  SuiteResult r =
      start("nash-deviation", std::to_string(plan.nash_trials) +
                                  " deviations, gain <= " + detail::fmt(plan.nash_tolerance));
  std::mt19937_64 rng(plan.seed + 4);
  r.worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < solved.size(); ++k) {
    const auto& [g, profile] = solved[k];
    for (std::size_t phi = 0; phi < g.privacy_levels(); ++phi) {
      if (g.counts[phi] < 1) continue;
      const double gain = check_nash_deviation(profile, phi, g, plan.nash_trials, rng);
      r.worst = std::max(r.worst, gain);
      ++r.checked;
      if (gain > plan.nash_tolerance) {
        ++r.failures;
        if (r.detail.empty())
          r.detail = "instance " + std::to_string(k) + " privacy level " + std::to_string(phi + 1) +
                     ": gain " + detail::fmt(gain);
      }
    }
  }
  r.passed = r.failures == 0;
  r.seconds = clock.seconds();
  return r;
}

inline std::vector<SuiteResult> run_all(const Plan& plan, const SolverOptions& options = {}) {
  std::vector<SuiteResult> out;
  out.push_back(rho_suite(plan));
  std::vector<std::pair<Game, StrategyProfile>> solved;
  out.push_back(oracle_suite(plan, options, &solved));
  out.push_back(linear_suite(plan, options));
  out.push_back(concavity_suite(plan));
  out.push_back(nash_suite(plan, solved));
  return out;
}

}  // namespace fcdgame::validation
