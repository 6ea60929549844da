#pragma once

// Brute-force references. Nothing here calls into the analytic solver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fcdgame/model.hpp"
#include "fcdgame/obfuscation.hpp"
#include "fcdgame/solver.hpp"

namespace fcdgame::oracle {

struct GridResult {
  StrategyProfile profile;
  double utility{0.0};
  std::uint64_t candidates{0};
};

// Exhaustive search over per-privacy-level strategy grids. Every probability
// of impact levels 2..n takes values {0, step, 2 step, ..., feasible max};
// grid points that already overspend the budget are dropped, and level 1
// receives whatever budget is left.
inline GridResult grid_search(const Game& game, double step, std::uint64_t guard = 100'000'000) {
  if (!(step > 0.0 && step <= 0.5)) throw ConfigError("grid step must lie in (0, 0.5]");
  const std::size_t levels = game.impact_levels();

  struct Axis {
    std::size_t phi;
    std::size_t level;
    std::vector<double> values;
    std::vector<double> miss;  // (1 - value)^count
  };
  std::vector<std::size_t> active;
  for (std::size_t phi = 0; phi < game.privacy_levels(); ++phi)
    if (game.counts[phi] > 0) active.push_back(phi);

  std::vector<Axis> axes;
  std::uint64_t product = 1;
  for (std::size_t phi : active)
    for (std::size_t i = 1; i < levels; ++i) {
      Axis ax{phi, i, {}, {}};
      const double cost = game.load(phi, i);
      const double top = cost > 0.0 ? std::min(1.0, game.budget / cost) : 1.0;
      for (int k = 0;; ++k) {
        const double v = k * step;
        if (v > top + 1e-12) break;
        ax.values.push_back(std::min(v, top));
      }
      if (ax.values.back() < top - 1e-12) ax.values.push_back(top);
      for (double v : ax.values) ax.miss.push_back(std::pow(1.0 - v, game.counts[phi]));
      product *= ax.values.size();
      if (product > guard) throw GuardError("grid search exceeds the candidate guard");
      axes.push_back(std::move(ax));
    }

  std::vector<double> value(levels);
  for (std::size_t i = 0; i < levels; ++i) value[i] = game.value(i);

  GridResult best;
  best.utility = -1.0;
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<double> spent(game.privacy_levels(), 0.0);
  std::vector<double> miss(levels, 1.0);
  std::vector<double> first(game.privacy_levels(), 0.0);

  for (;;) {
    ++best.candidates;
    std::fill(spent.begin(), spent.end(), 0.0);
    std::fill(miss.begin(), miss.end(), 1.0);
    bool feasible = true;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& ax = axes[a];
      spent[ax.phi] += game.load(ax.phi, ax.level) * ax.values[idx[a]];
      miss[ax.level] *= ax.miss[idx[a]];
    }
    for (std::size_t phi : active)
      if (spent[phi] > game.budget + 1e-12) feasible = false;
    if (feasible) {
      for (std::size_t phi : active) {
        const double cost = game.load(phi, 0);
        const double left = std::max(0.0, game.budget - spent[phi]);
        first[phi] = cost > 0.0 ? std::min(1.0, left / cost) : 1.0;
        miss[0] *= std::pow(1.0 - first[phi], game.counts[phi]);
      }
      double u = 0.0;
      for (std::size_t i = 0; i < levels; ++i) u += value[i] * (1.0 - miss[i]);
      if (u > best.utility) {
        best.utility = u;
        best.profile = StrategyProfile::zeros(game.counts, levels);
        for (std::size_t phi : active) best.profile.p(phi, 0) = first[phi];
        for (std::size_t a = 0; a < axes.size(); ++a)
          best.profile.p(axes[a].phi, axes[a].level) = axes[a].values[idx[a]];
      }
    }
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return best;
}

// Closed-form optimum for a vehicle with nobody to share with: a fractional
// knapsack filled by obfuscated impact per bit.
inline Strategy single_vehicle_greedy(const ImpactLevelTable& table,
                                      const std::vector<double>& rho_row, double budget) {
  const std::size_t n = table.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = obfuscated_impact(table[a].expected_impact, rho_row[a]);
    const double db = obfuscated_impact(table[b].expected_impact, rho_row[b]);
    if (da != db) return da > db;
    return a > b;
  });
  Strategy s{std::vector<double>(n, 0.0)};
  double remaining = std::max(0.0, budget);
  for (std::size_t i : order) {
    const double cost = obfuscated_load(table[i].load, rho_row[i]);
    if (cost <= 0.0) continue;
    if (remaining <= 0.0) break;
    s[i] = std::min(1.0, remaining / cost);
    remaining -= s[i] * cost;
  }
  return s;
}

// Ratio of uniformly placed message origins that the server forwards for a
// reported disk to the ones actually relevant at the true position. The true
// position is redrawn uniformly in the disk for every sample.
template <class Rng>
double monte_carlo_rho(double r_phi, double r_i, std::uint64_t samples, Rng& rng) {
  if (!(r_i > 0.0)) throw InvalidLevelError("geocast radius must be positive");
  const double half = (r_phi + r_i) * 1.05;
  std::uniform_real_distribution<double> coord(-half, half);
  const Vec2 center{0.0, 0.0};
  std::uint64_t forwarded = 0;
  std::uint64_t relevant = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    const Vec2 origin{coord(rng), coord(rng)};
    const Vec2 truth = center + uniform_in_disk(r_phi, rng);
    if (distance(origin, center) <= r_phi + r_i) ++forwarded;
    if (distance(origin, truth) <= r_i) ++relevant;
  }
  if (relevant == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(forwarded) / static_cast<double>(relevant);
}

}  // namespace fcdgame::oracle
