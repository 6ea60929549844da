#pragma once

// Closed-form studies on top of the solver: utility over privacy share and
// bandwidth, and the cost of mis-estimating the neighbourhood.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fcdgame/model.hpp"
#include "fcdgame/obfuscation.hpp"
#include "fcdgame/solver.hpp"

namespace fcdgame::analysis {

// Two privacy levels: exact location and a given imprecision radius.
inline Game two_level_game(const ScenarioConfig& config, double private_radius_km, int n_accurate,
                           int n_private, double bandwidth) {
  Game g;
  g.levels = config.impact_levels;
  g.rho = RhoTable::from_radii({0.0, private_radius_km}, config.impact_levels);
  g.counts = {n_accurate, n_private};
  g.budget = bandwidth;
  return g;
}

inline SolverOptions options_for(const ScenarioConfig& config) {
  SolverOptions o;
  o.epsilon = config.convergence_epsilon;
  o.trust_weight = config.trust_weight;
  return o;
}

struct PrivacyPoint {
  double radius_km;
  double bandwidth_fraction;
  double privacy_share;
  int n_accurate;
  int n_private;
  double utility;
  double relative_utility;
};

// Sweeps the share of privacy-sensitive vehicles in a neighbourhood of fixed
// size for every configured bandwidth fraction.
inline std::vector<PrivacyPoint> privacy_bandwidth_grid(const ScenarioConfig& config,
                                                        double radius_km) {
  const int n = config.analysis.neighborhood_size;
  const double required = config.impact_levels.total_load();
  const double total_value = config.impact_levels.total_value();
  const auto options = options_for(config);
  std::vector<PrivacyPoint> out;
  for (double fraction : config.analysis.bandwidth_fractions) {
    for (int k = 0; k <= n; ++k) {
      const Game g = two_level_game(config, radius_km, n - k, k, fraction * required);
      const std::size_t tagged = n - k > 0 ? 0 : 1;
      const auto solved = solve_optimal(g, tagged, options);
      const double u = expected_utility(tagged, solved.profile, g.levels, g.rho);
      out.push_back({radius_km, fraction, static_cast<double>(k) / n, n - k, k, u,
                     total_value > 0.0 ? u / total_value : 0.0});
    }
  }
  return out;
}

enum class Misestimation { kOver, kUnder };

struct EstimationPoint {
  int n_accurate;
  int n_private;
  int shift;
  double correct_utility;   // both privacy levels know the true counts
  double expected_utility;  // what the accurate vehicles predict from their view
  double actual_utility;    // strategies from the skewed views, true counts
  double loss;              // 1 - actual / correct
};

// Each privacy level over- or under-estimates the other level's count by
// `shift` and plays its own strategy from that view.
inline EstimationPoint misestimated_utility(const ScenarioConfig& config, int n_accurate,
                                            int n_private, int shift, Misestimation kind,
                                            double radius_km, double bandwidth) {
  const auto options = options_for(config);
  const int sign = kind == Misestimation::kOver ? 1 : -1;
  const int seen_private = std::max(0, n_private + sign * shift);
  const int seen_accurate = std::max(0, n_accurate + sign * shift);

  const Game truth = two_level_game(config, radius_km, n_accurate, n_private, bandwidth);
  const Game view_a = two_level_game(config, radius_km, n_accurate, seen_private, bandwidth);
  const Game view_p = two_level_game(config, radius_km, seen_accurate, n_private, bandwidth);

  const auto correct = solve_optimal(truth, 0, options);
  const auto from_a = solve_optimal(view_a, 0, options);
  const auto from_p = solve_optimal(view_p, 1, options);

  StrategyProfile played = StrategyProfile::zeros(truth.counts, truth.impact_levels());
  played.strategies[0] = from_a.profile.strategies[0];
  played.strategies[1] = from_p.profile.strategies[1];

  EstimationPoint pt;
  pt.n_accurate = n_accurate;
  pt.n_private = n_private;
  pt.shift = shift;
  pt.correct_utility = expected_utility(0, correct.profile, truth.levels, truth.rho);
  pt.expected_utility = expected_utility(0, from_a.profile, view_a.levels, view_a.rho);
  pt.actual_utility = expected_utility(0, played, truth.levels, truth.rho);
  pt.loss = pt.correct_utility > 0.0 ? 1.0 - pt.actual_utility / pt.correct_utility : 0.0;
  return pt;
}

inline std::vector<EstimationPoint> estimation_grid(const ScenarioConfig& config,
                                                    Misestimation kind) {
  const auto& a = config.analysis;
  std::vector<EstimationPoint> out;
  for (int na = 1; na <= a.estimation_max_count; ++na)
    for (int np = 1; np <= a.estimation_max_count; ++np)
      out.push_back(misestimated_utility(config, na, np, a.estimation_shift, kind,
                                         a.estimation_radius_km, config.bandwidth_bits_per_slot));
  return out;
}

}  // namespace fcdgame::analysis
