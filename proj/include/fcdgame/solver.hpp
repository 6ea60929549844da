#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fcdgame/model.hpp"
#include "fcdgame/obfuscation.hpp"

namespace fcdgame {

// One strategy per privacy level together with the neighbourhood counts.
struct StrategyProfile {
  std::vector<Strategy> strategies;
  std::vector<int> counts;

  static StrategyProfile zeros(std::vector<int> counts, std::size_t impact_levels) {
    StrategyProfile p;
    p.strategies.assign(counts.size(), Strategy{std::vector<double>(impact_levels, 0.0)});
    p.counts = std::move(counts);
    return p;
  }

  std::size_t privacy_levels() const { return strategies.size(); }
  std::size_t impact_levels() const { return strategies.empty() ? 0 : strategies.front().size(); }
  double p(std::size_t phi, std::size_t i) const { return strategies[phi][i]; }
  double& p(std::size_t phi, std::size_t i) { return strategies[phi][i]; }
};

// Everything the game needs: levels, adaptation factors, counts and budget.
struct Game {
  ImpactLevelTable levels;
  RhoTable rho;
  std::vector<int> counts;
  double budget{0.0};

  std::size_t privacy_levels() const { return counts.size(); }
  std::size_t impact_levels() const { return levels.size(); }
  double load(std::size_t phi, std::size_t i) const {
    return obfuscated_load(levels[i].load, rho(phi, i));
  }
  // Privacy-invariant value of a level: expected impact times accurate load.
  double value(std::size_t i) const { return levels[i].expected_impact * levels[i].load; }
};

inline Game make_game(const ScenarioConfig& config) {
  Game g;
  g.levels = config.impact_levels;
  g.rho = RhoTable::from_profiles(config.privacy_profiles, config.impact_levels);
  for (const auto& p : config.privacy_profiles) g.counts.push_back(p.count);
  g.budget = config.bandwidth_bits_per_slot;
  return g;
}

// Per impact level, which privacy levels subscribe with positive probability.
// Bit i of mask(phi) set means phi is in the positive set of level i.
class SupportPartition {
 public:
  SupportPartition() = default;
  SupportPartition(std::size_t privacy_levels, std::size_t impact_levels)
      : levels_(impact_levels), masks_(privacy_levels, 0) {}

  static SupportPartition full(const std::vector<int>& counts, std::size_t impact_levels) {
    SupportPartition s(counts.size(), impact_levels);
    for (std::size_t phi = 0; phi < counts.size(); ++phi)
      if (counts[phi] > 0) s.masks_[phi] = (1u << impact_levels) - 1u;
    return s;
  }

  static SupportPartition of(const StrategyProfile& profile) {
    SupportPartition s(profile.privacy_levels(), profile.impact_levels());
    for (std::size_t phi = 0; phi < profile.privacy_levels(); ++phi)
      for (std::size_t i = 0; i < profile.impact_levels(); ++i)
        s.set(phi, i, profile.counts[phi] > 0 && profile.p(phi, i) > 0.0);
    return s;
  }

  // Decodes an enumeration code: bit k belongs to active privacy level
  // active[k / impact_levels] and impact level k % impact_levels.
  static SupportPartition from_code(std::uint64_t code, const std::vector<std::size_t>& active,
                                    std::size_t privacy_levels, std::size_t impact_levels) {
    SupportPartition s(privacy_levels, impact_levels);
    for (std::size_t k = 0; k < active.size() * impact_levels; ++k)
      if ((code >> k) & 1u) s.set(active[k / impact_levels], k % impact_levels, true);
    return s;
  }

  std::size_t privacy_levels() const { return masks_.size(); }
  std::size_t impact_levels() const { return levels_; }

  bool supported(std::size_t phi, std::size_t i) const { return (masks_[phi] >> i) & 1u; }
  void set(std::size_t phi, std::size_t i, bool on) {
    if (on)
      masks_[phi] |= (1u << i);
    else
      masks_[phi] &= ~(1u << i);
  }
  std::uint32_t mask(std::size_t phi) const { return masks_[phi]; }

  std::size_t supported_pairs() const {
    std::size_t n = 0;
    for (auto m : masks_) n += static_cast<std::size_t>(std::popcount(m));
    return n;
  }

  // n+(i): vehicles in the positive set of level i, minus the tagged one.
  int n_plus(std::size_t i, const std::vector<int>& counts) const {
    int n = 0;
    for (std::size_t phi = 0; phi < masks_.size(); ++phi)
      if (supported(phi, i)) n += counts[phi];
    return n - 1;
  }

  // "phi:levels" groups with 1-based indices, e.g. "1:{2,3,4} 2:{}".
  std::string to_string() const {
    std::ostringstream os;
    for (std::size_t phi = 0; phi < masks_.size(); ++phi) {
      if (phi) os << ' ';
      os << phi + 1 << ":{";
      bool first = true;
      for (std::size_t i = 0; i < levels_; ++i)
        if (supported(phi, i)) {
          os << (first ? "" : ",") << i + 1;
          first = false;
        }
      os << '}';
    }
    return os.str();
  }

  friend bool operator==(const SupportPartition&, const SupportPartition&) = default;

 private:
  std::size_t levels_{0};
  std::vector<std::uint32_t> masks_;
};

// ---------------------------------------------------------------------------
// Utility
// ---------------------------------------------------------------------------

// Probability that a message of level i reaches the tagged vehicle over any
// interface.
inline double receive_probability(std::size_t i, const StrategyProfile& profile) {
  double miss = 1.0;
  for (std::size_t phi = 0; phi < profile.privacy_levels(); ++phi)
    miss *= std::pow(1.0 - profile.p(phi, i), profile.counts[phi]);
  return 1.0 - miss;
}

inline double expected_utility(std::size_t phi_e, const StrategyProfile& profile,
                               const ImpactLevelTable& table, const RhoTable& rho) {
  double u = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double r = rho(phi_e, i);
    u += obfuscated_impact(table[i].expected_impact, r) * obfuscated_load(table[i].load, r) *
         receive_probability(i, profile);
  }
  return u;
}

// Weighted blend of the cooperative utility and the utility the tagged
// vehicle gets from its own strategy if nobody else shares.
inline double robust_score(const StrategyProfile& profile, std::size_t phi_e,
                           const ImpactLevelTable& table, const RhoTable& rho, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("trust weight must lie in [0,1]");
  const double cooperative = beta > 0.0 ? expected_utility(phi_e, profile, table, rho) : 0.0;
  if (beta == 1.0) return cooperative;
  StrategyProfile alone = profile;
  std::fill(alone.counts.begin(), alone.counts.end(), 0);
  alone.counts[phi_e] = 1;
  return beta * cooperative + (1.0 - beta) * expected_utility(phi_e, alone, table, rho);
}

inline double bandwidth_used(const Strategy& s, std::size_t phi, const Game& game) {
  double used = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) used += game.load(phi, i) * s[i];
  return used;
}

inline bool is_feasible(const StrategyProfile& profile, const Game& game, double tol = 1e-9) {
  for (std::size_t phi = 0; phi < profile.privacy_levels(); ++phi) {
    for (double p : profile.strategies[phi].probabilities)
      if (p < -tol || p > 1.0 + tol) return false;
    if (bandwidth_used(profile.strategies[phi], phi, game) > game.budget + tol) return false;
  }
  return true;
}

// Published lambda term for impact level l (l >= 1, level 0 is the anchor):
// the n+(l)-th root of (mu_0/mu_l)(rho_l/rho_0) prod_{minus(l)} (1-p_{phi,0})^n.
inline double lambda_term(std::size_t l, const SupportPartition& partition,
                          const StrategyProfile& profile, std::size_t phi_e,
                          const ImpactLevelTable& table, const RhoTable& rho) {
  if (l == 0) return 1.0;
  const int n_plus = partition.n_plus(l, profile.counts);
  if (n_plus <= 0)
    throw DegenerateSupportError("n+(" + std::to_string(l + 1) +
                                 ") = 0: single supporting vehicle, utility is linear");
  double base =
      (table[0].expected_impact / table[l].expected_impact) * (rho(phi_e, l) / rho(phi_e, 0));
  for (std::size_t phi = 0; phi < profile.privacy_levels(); ++phi)
    if (!partition.supported(phi, l))
      base *= std::pow(1.0 - profile.p(phi, 0), profile.counts[phi]);
  return std::pow(base, 1.0 / n_plus);
}

// ---------------------------------------------------------------------------
// Fixed-support solver
// ---------------------------------------------------------------------------

enum class LambdaRule {
  // Lambda from the other privacy levels' current strategies, exact for the
  // block of one privacy level. Coincides with the published term whenever
  // no other privacy level shares a non-anchor level.
  kBlockExact,
  // Published closed form (lambda_term), anchored at impact level 0.
  kPublished,
};

struct SolverOptions {
  double epsilon{1e-9};
  int max_sweeps{0};  // 0: 10 sweeps per active privacy level
  double trust_weight{1.0};
  LambdaRule rule{LambdaRule::kBlockExact};
  int enumeration_guard_bits{20};
  bool polish{true};
  int polish_max_sweeps{5000};
  bool invert_lambda{false};  // fault injection for validation negative controls
};

struct FixedSupportResult {
  StrategyProfile profile;
  bool converged{false};
  int sweeps{0};
  double last_change{0.0};
};

namespace detail {

inline std::vector<std::size_t> active_levels(const std::vector<int>& counts) {
  std::vector<std::size_t> active;
  for (std::size_t phi = 0; phi < counts.size(); ++phi)
    if (counts[phi] > 0) active.push_back(phi);
  return active;
}

// Product over the other privacy levels of (1 - p_{phi',i})^{n_phi'}.
inline double others_miss(std::size_t phi, std::size_t i, const StrategyProfile& profile) {
  double q = 1.0;
  for (std::size_t o = 0; o < profile.privacy_levels(); ++o)
    if (o != phi) q *= std::pow(1.0 - profile.p(o, i), profile.counts[o]);
  return q;
}

// Fractional knapsack: fill by value density, ties to the higher level.
inline void greedy_fill(const std::vector<std::size_t>& candidates,
                        const std::vector<double>& weight, const std::vector<double>& cost,
                        double budget, std::vector<double>& p) {
  auto order = candidates;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = weight[a] / cost[a];
    const double db = weight[b] / cost[b];
    if (da != db) return da > db;
    return a > b;
  });
  double remaining = budget;
  for (std::size_t i : order) {
    if (remaining <= 0.0) break;
    p[i] = std::min(1.0, remaining / cost[i]);
    remaining -= p[i] * cost[i];
  }
}

// With 1 - p_i = y * lambda_i on the active set and the budget spent exactly,
// find y and the active set (levels whose p would be negative drop out).
// For a single privacy level this is p_l = 1 + (A - sum a_i) lambda_l / sum a_i lambda_i.
inline void close_budget(const std::vector<std::size_t>& candidates,
                         const std::vector<double>& lambda, const std::vector<double>& cost,
                         double budget, std::vector<double>& p) {
  auto order = candidates;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });
  double cost_sum = 0.0;
  double weighted_sum = 0.0;
  double y = 0.0;
  std::size_t active = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cost_sum += cost[order[k]];
    weighted_sum += cost[order[k]] * lambda[order[k]];
    if (cost_sum <= budget) continue;  // y would be <= 0: keep adding levels
    const double yk = (cost_sum - budget) / weighted_sum;
    const double next = k + 1 < order.size() ? lambda[order[k + 1]] : 0.0;
    if (k + 1 == order.size() || yk * next >= 1.0) {
      y = yk;
      active = k + 1;
      break;
    }
  }
  for (std::size_t k = 0; k < active; ++k) {
    const std::size_t i = order[k];
    p[i] = std::clamp(1.0 - y * lambda[i], 0.0, 1.0);
  }
}

}  // namespace detail

// Best response of a vehicle with nobody to share with.
inline Strategy single_vehicle_strategy(const ImpactLevelTable& table,
                                        const std::vector<double>& rho_row, double budget) {
  const std::size_t n = table.size();
  std::vector<double> p(n, 0.0), weight(n), cost(n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    weight[i] = table[i].expected_impact * table[i].load;
    cost[i] = obfuscated_load(table[i].load, rho_row[i]);
    if (cost[i] > 0.0) candidates.push_back(i);
  }
  detail::greedy_fill(candidates, weight, cost, std::max(0.0, budget), p);
  return Strategy{p};
}

// Recomputes the strategy of privacy level phi on its support, holding the
// other privacy levels fixed.
inline Strategy recalculate(std::size_t phi, const SupportPartition& partition,
                            const StrategyProfile& profile, const Game& game,
                            const SolverOptions& options) {
  const std::size_t levels = game.impact_levels();
  std::vector<double> p(levels, 0.0);
  const int n = profile.counts[phi];
  if (n <= 0) return Strategy{p};

  std::vector<double> weight(levels, 0.0), cost(levels, 0.0);
  std::vector<std::size_t> candidates;
  double total_cost = 0.0;
  for (std::size_t i = 0; i < levels; ++i) {
    if (!partition.supported(phi, i)) continue;
    weight[i] = game.value(i) * detail::others_miss(phi, i, profile);
    cost[i] = game.load(phi, i);
    if (weight[i] > 0.0 && cost[i] > 0.0) {
      candidates.push_back(i);
      total_cost += cost[i];
    }
  }
  if (candidates.empty()) return Strategy{p};
  if (total_cost <= game.budget) {
    for (std::size_t i : candidates) p[i] = 1.0;
    return Strategy{p};
  }
  if (n == 1) {
    detail::greedy_fill(candidates, weight, cost, game.budget, p);
    return Strategy{p};
  }

  std::vector<double> lambda(levels, 1.0);
  const bool published = options.rule == LambdaRule::kPublished && candidates.front() == 0;
  if (published) {
    for (std::size_t i : candidates)
      lambda[i] = lambda_term(i, partition, profile, phi, game.levels, game.rho);
  } else {
    const std::size_t anchor = candidates.front();
    const double anchor_density = weight[anchor] / cost[anchor];
    for (std::size_t i : candidates)
      lambda[i] = std::pow(anchor_density / (weight[i] / cost[i]), 1.0 / (n - 1));
  }
  if (options.invert_lambda)
    for (std::size_t i : candidates) lambda[i] = 1.0 / lambda[i];
  detail::close_budget(candidates, lambda, cost, game.budget, p);
  return Strategy{p};
}

namespace detail {

inline FixedSupportResult fixed_support_distinct(const SupportPartition& partition,
                                                 const Game& game, const SolverOptions& options,
                                                 const StrategyProfile* warm_start,
                                                 int max_sweeps_override) {
  FixedSupportResult r;
  r.profile = warm_start ? *warm_start : StrategyProfile::zeros(game.counts, game.impact_levels());
  r.profile.counts = game.counts;
  for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi)
    for (std::size_t i = 0; i < game.impact_levels(); ++i)
      if (!partition.supported(phi, i) || game.counts[phi] <= 0) r.profile.p(phi, i) = 0.0;

  const auto active = detail::active_levels(game.counts);
  const int cap = max_sweeps_override > 0 ? max_sweeps_override
                  : options.max_sweeps > 0
                      ? options.max_sweeps
                      : 10 * static_cast<int>(std::max<std::size_t>(1, active.size()));
  for (int sweep = 1; sweep <= cap; ++sweep) {
    double change = 0.0;
    for (std::size_t phi : active) {
      Strategy next = recalculate(phi, partition, r.profile, game, options);
      for (std::size_t i = 0; i < next.size(); ++i)
        change += std::abs(next[i] - r.profile.p(phi, i));
      r.profile.strategies[phi] = std::move(next);
    }
    r.sweeps = sweep;
    r.last_change = change;
    if (change <= options.epsilon) {
      r.converged = true;
      break;
    }
  }
  return r;
}

// Privacy levels with identical adaptation factors (and, when a partition is
// given, identical support) describe interchangeable vehicles. They are
// folded into their first occurrence; empty levels stay separate.
struct LevelMerge {
  std::vector<std::size_t> reduced_of;  // original level -> reduced level
  std::vector<std::size_t> reps;        // reduced level -> first original level
  Game game;
  bool any{false};

  LevelMerge(const Game& g, const SupportPartition* partition) {
    const std::size_t P = g.privacy_levels();
    reduced_of.assign(P, 0);
    std::vector<std::size_t> block(P);
    for (std::size_t phi = 0; phi < P; ++phi) {
      block[phi] = phi;
      if (g.counts[phi] < 1) continue;
      for (std::size_t o = 0; o < phi; ++o)
        if (g.counts[o] > 0 && block[o] == o && g.rho.row(o) == g.rho.row(phi) &&
            (!partition || partition->mask(o) == partition->mask(phi))) {
          block[phi] = o;
          any = true;
          break;
        }
    }
    for (std::size_t phi = 0; phi < P; ++phi)
      if (block[phi] == phi) {
        reduced_of[phi] = reps.size();
        reps.push_back(phi);
      }
    for (std::size_t phi = 0; phi < P; ++phi) reduced_of[phi] = reduced_of[block[phi]];
    game.levels = g.levels;
    game.budget = g.budget;
    game.rho = RhoTable(reps.size(), g.impact_levels());
    game.counts.assign(reps.size(), 0);
    for (std::size_t k = 0; k < reps.size(); ++k)
      for (std::size_t i = 0; i < g.impact_levels(); ++i) game.rho.at(k, i) = g.rho(reps[k], i);
    for (std::size_t phi = 0; phi < P; ++phi) game.counts[reduced_of[phi]] += g.counts[phi];
  }

  SupportPartition reduce(const SupportPartition& part) const {
    SupportPartition out(reps.size(), game.impact_levels());
    for (std::size_t k = 0; k < reps.size(); ++k)
      for (std::size_t i = 0; i < game.impact_levels(); ++i)
        out.set(k, i, part.supported(reps[k], i));
    return out;
  }

  SupportPartition expand(const SupportPartition& part, const std::vector<int>& counts) const {
    SupportPartition out(counts.size(), game.impact_levels());
    for (std::size_t phi = 0; phi < counts.size(); ++phi)
      for (std::size_t i = 0; i < game.impact_levels(); ++i)
        out.set(phi, i, counts[phi] > 0 && part.supported(reduced_of[phi], i));
    return out;
  }

  StrategyProfile reduce(const StrategyProfile& p) const {
    StrategyProfile out = StrategyProfile::zeros(game.counts, game.impact_levels());
    for (std::size_t k = 0; k < reps.size(); ++k) out.strategies[k] = p.strategies[reps[k]];
    return out;
  }

  StrategyProfile expand(const StrategyProfile& p, const std::vector<int>& counts) const {
    StrategyProfile out = StrategyProfile::zeros(counts, game.impact_levels());
    for (std::size_t phi = 0; phi < counts.size(); ++phi)
      out.strategies[phi] = p.strategies[reduced_of[phi]];
    return out;
  }
};

}  // namespace detail

// Round-robin recalculation over privacy levels until one full sweep changes
// the probabilities by at most epsilon in total. Interchangeable privacy
// levels with the same support are updated as one block.
inline FixedSupportResult solve_fixed_support(const SupportPartition& partition, const Game& game,
                                              const SolverOptions& options,
                                              const StrategyProfile* warm_start = nullptr,
                                              int max_sweeps_override = 0) {
  const detail::LevelMerge merge(game, &partition);
  if (!merge.any)
    return detail::fixed_support_distinct(partition, game, options, warm_start,
                                          max_sweeps_override);
  std::optional<StrategyProfile> start;
  if (warm_start) start = merge.reduce(*warm_start);
  auto r = detail::fixed_support_distinct(merge.reduce(partition), merge.game, options,
                                          start ? &*start : nullptr, max_sweeps_override);
  r.profile = merge.expand(r.profile, game.counts);
  return r;
}

// ---------------------------------------------------------------------------
// Support enumeration
// ---------------------------------------------------------------------------

struct SolverReport {
  SupportPartition partition;
  bool converged{false};
  int iterations{0};
  std::vector<double> utility;  // expected utility per privacy level
  double robust_score{0.0};
  std::size_t partitions_evaluated{0};
  std::size_t partitions_converged{0};
  bool polished{false};
  int polish_sweeps{0};
};

struct SolveResult {
  StrategyProfile profile;
  SolverReport report;
};

namespace detail {

inline SolveResult solve_distinct(const Game& game, std::size_t phi_e,
                                  const SolverOptions& options) {
  if (game.counts[phi_e] < 1)
    throw ConfigError("tagged privacy level must count at least the tagged vehicle");
  if (game.rho.rows() != game.privacy_levels() || game.rho.cols() != game.impact_levels())
    throw ConfigError("adaptation factor table does not match the game");
  if (!(game.budget >= 0.0)) throw ConfigError("negative bandwidth");

  const auto active = detail::active_levels(game.counts);
  const std::size_t bits = active.size() * game.impact_levels();
  if (bits > static_cast<std::size_t>(options.enumeration_guard_bits) || bits >= 63)
    throw GuardError("support enumeration needs 2^" + std::to_string(bits) +
                     " partitions (guard 2^" + std::to_string(options.enumeration_guard_bits) +
                     "); merge impact or privacy levels");

  const double beta = options.trust_weight;
  auto score_of = [&](const StrategyProfile& p) {
    return robust_score(p, phi_e, game.levels, game.rho, beta);
  };

  SolveResult best;
  bool have_best = false;
  std::uint64_t best_code = 0;
  SolverReport report;
  const std::uint64_t total = std::uint64_t{1} << bits;
  for (std::uint64_t code = 0; code < total; ++code) {
    const auto partition =
        SupportPartition::from_code(code, active, game.privacy_levels(), game.impact_levels());
    auto fixed = solve_fixed_support(partition, game, options);
    ++report.partitions_evaluated;
    if (!fixed.converged || !is_feasible(fixed.profile, game)) continue;
    ++report.partitions_converged;
    const double s = score_of(fixed.profile);
    bool take = !have_best;
    if (have_best) {
      const double tol = 1e-12 * std::max(1.0, std::abs(best.report.robust_score));
      if (s > best.report.robust_score + tol) {
        take = true;
      } else if (std::abs(s - best.report.robust_score) <= tol) {
        const auto a = partition.supported_pairs();
        const auto b = best.report.partition.supported_pairs();
        take = a < b || (a == b && code < best_code);
      }
    }
    if (take) {
      have_best = true;
      best_code = code;
      best.profile = std::move(fixed.profile);
      best.report.partition = partition;
      best.report.converged = true;
      best.report.iterations = fixed.sweeps;
      best.report.robust_score = s;
    }
  }
  if (!have_best) {
    best.profile = StrategyProfile::zeros(game.counts, game.impact_levels());
    best.report.partition = SupportPartition(game.privacy_levels(), game.impact_levels());
    best.report.robust_score = score_of(best.profile);
  }

  if (options.polish) {
    // Unrestricted round-robin from the winner: only ever raises the
    // cooperative utility and ends at a point where every privacy level
    // best-responds on all impact levels.
    auto refined = solve_fixed_support(SupportPartition::full(game.counts, game.impact_levels()),
                                       game, options, &best.profile, options.polish_max_sweeps);
    if (refined.converged && is_feasible(refined.profile, game)) {
      const double s = score_of(refined.profile);
      if (s >= best.report.robust_score - 1e-12 * std::max(1.0, std::abs(s))) {
        best.profile = std::move(refined.profile);
        best.report.robust_score = s;
        best.report.polished = true;
        best.report.polish_sweeps = refined.sweeps;
        best.report.converged = true;
        best.report.partition = SupportPartition::of(best.profile);
      }
    }
  }

  best.report.partitions_evaluated = report.partitions_evaluated;
  best.report.partitions_converged = report.partitions_converged;
  best.report.utility.resize(game.privacy_levels());
  for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi)
    best.report.utility[phi] = expected_utility(phi, best.profile, game.levels, game.rho);
  return best;
}

}  // namespace detail

// Evaluates every zero/non-zero pattern over (active privacy level, impact
// level) pairs and returns the best-scoring converged profile for phi_e.
// Privacy levels with identical adaptation factors are solved as one level,
// so they always receive the same strategy.
inline SolveResult solve_optimal(const Game& game, std::size_t phi_e,
                                 const SolverOptions& options = {}) {
  if (phi_e >= game.privacy_levels()) throw ConfigError("tagged privacy level out of range");
  if (game.rho.rows() != game.privacy_levels() || game.rho.cols() != game.impact_levels())
    throw ConfigError("adaptation factor table does not match the game");
  const detail::LevelMerge merge(game, nullptr);
  if (!merge.any) return detail::solve_distinct(game, phi_e, options);
  const auto sub = detail::solve_distinct(merge.game, merge.reduced_of[phi_e], options);
  SolveResult out;
  out.profile = merge.expand(sub.profile, game.counts);
  out.report = sub.report;
  out.report.partition = merge.expand(sub.report.partition, game.counts);
  out.report.utility.assign(game.privacy_levels(), 0.0);
  for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi)
    out.report.utility[phi] = expected_utility(phi, out.profile, game.levels, game.rho);
  return out;
}

// ---------------------------------------------------------------------------
// Property checks
// ---------------------------------------------------------------------------

namespace detail {

// (x + d)^n - 2 x^n + (x - d)^n, expanded so that nothing cancels: only the
// even binomial terms survive.
inline double power_second_difference(double x, double d, int n) {
  double sum = 0.0;
  double binom = 1.0;
  for (int k = 1; k <= n; ++k) {
    binom = binom * (n - k + 1) / k;
    if (k % 2 == 0) sum += binom * std::pow(x, n - k) * std::pow(d, k);
  }
  return 2.0 * sum;
}

}  // namespace detail

// Central second difference of the expected utility when p_{phi_e,l} moves
// by t and p_{phi_e,0} absorbs the bandwidth change. Only levels 0 and l
// depend on t; their miss terms are polynomials in t, so the difference is
// evaluated term by term instead of subtracting large utilities.
inline double constrained_second_derivative(const StrategyProfile& profile, std::size_t phi_e,
                                            std::size_t l, const ImpactLevelTable& table,
                                            const RhoTable& rho) {
  if (l == 0 || l >= table.size()) throw ConfigError("direction level must be in 2..n");
  const double k =
      obfuscated_load(table[l].load, rho(phi_e, l)) / obfuscated_load(table[0].load, rho(phi_e, 0));
  const double pl = profile.p(phi_e, l);
  const double p0 = profile.p(phi_e, 0);
  double h = std::min({1e-2, 0.5 * (1.0 - pl), k > 0.0 ? 0.5 * (1.0 - p0) / k : 1e-2});
  h = std::clamp(h, 1e-4, 1e-2);
  const int n = profile.counts[phi_e];
  auto term = [&](std::size_t i, double step) {
    const double r = rho(phi_e, i);
    const double value =
        obfuscated_impact(table[i].expected_impact, r) * obfuscated_load(table[i].load, r);
    return value * detail::others_miss(phi_e, i, profile) *
           detail::power_second_difference(1.0 - profile.p(phi_e, i), step, n);
  };
  return -(term(l, h) + term(0, k * h)) / (h * h);
}

inline bool check_concavity(const StrategyProfile& profile, std::size_t phi_e, std::size_t l,
                            const ImpactLevelTable& table, const RhoTable& rho,
                            double tolerance = 1e-6) {
  return constrained_second_derivative(profile, phi_e, l, table, rho) <= tolerance;
}

// Utility of one vehicle of phi_e playing q while its peers keep the profile.
inline double deviation_utility(const StrategyProfile& profile, std::size_t phi_e,
                                const Strategy& q, const ImpactLevelTable& table,
                                const RhoTable& rho) {
  double u = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    double miss = std::pow(1.0 - profile.p(phi_e, i), profile.counts[phi_e] - 1) * (1.0 - q[i]);
    for (std::size_t phi = 0; phi < profile.privacy_levels(); ++phi)
      if (phi != phi_e) miss *= std::pow(1.0 - profile.p(phi, i), profile.counts[phi]);
    const double r = rho(phi_e, i);
    u += obfuscated_impact(table[i].expected_impact, r) * obfuscated_load(table[i].load, r) *
         (1.0 - miss);
  }
  return u;
}

inline double deviation_gain(const StrategyProfile& profile, std::size_t phi_e, const Strategy& q,
                             const ImpactLevelTable& table, const RhoTable& rho) {
  return deviation_utility(profile, phi_e, q, table, rho) -
         deviation_utility(profile, phi_e, profile.strategies[phi_e], table, rho);
}

// Random bandwidth-feasible strategy for privacy level phi. Mixes interior
// points, budget-saturating points and knapsack vertices.
template <class Rng>
Strategy random_feasible_strategy(std::size_t phi, const Game& game, Rng& rng) {
  const std::size_t n = game.impact_levels();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> q(n);
  for (auto& v : q) v = unit(rng);
  auto cost_of = [&] {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += game.load(phi, i) * q[i];
    return c;
  };
  const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
  if (kind == 0) {
    const double c = cost_of();
    if (c > game.budget)
      for (auto& v : q) v *= game.budget / c;
    return Strategy{q};
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  if (kind == 2) std::fill(q.begin(), q.end(), 0.0);
  double c = cost_of();
  if (c > game.budget)
    for (auto& v : q) v *= game.budget / c;
  double remaining = game.budget - std::min(c, game.budget);
  for (std::size_t i : order) {
    const double cost = game.load(phi, i);
    if (cost <= 0.0 || remaining <= 0.0) continue;
    const double add = std::min(1.0 - q[i], remaining / cost);
    q[i] += add;
    remaining -= add * cost;
  }
  return Strategy{q};
}

// Largest utility gain of a unilateral deviation over random feasible
// strategies.
template <class Rng>
double check_nash_deviation(const StrategyProfile& profile, std::size_t phi_e, const Game& game,
                            int trials, Rng& rng) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const Strategy q = random_feasible_strategy(phi_e, game, rng);
    worst = std::max(worst, deviation_gain(profile, phi_e, q, game.levels, game.rho));
  }
  return worst;
}

}  // namespace fcdgame
