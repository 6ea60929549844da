#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "fcdgame/sim.hpp"

using namespace fcdgame;
using sim::World;

namespace {

// Vehicles that never move unless a test moves them.
ScenarioConfig still(int vehicles) {
  auto c = default_scenario();
  c.sim.vehicle_count = vehicles;
  c.sim.speed_min_mps = 0.0;
  c.sim.speed_max_mps = 0.0;
  return c;
}

void place_all(World& w, Vec2 at) {
  for (auto& v : w.vehicles()) {
    v.pos = at;
    v.region = {at, 0.0};
  }
}

Message at(const World& w, Vec2 pos, std::size_t level) {
  Message m;
  m.origin = pos;
  m.impact = w.level_model().table[level].expected_impact;
  m.radius_km = w.level_model().table[level].radius_km;
  m.size = 1.0;
  return m;
}

void set_strategy(World& w, const std::vector<double>& p) {
  for (auto& v : w.vehicles()) v.strategy = Strategy{p};
}

}  // namespace

TEST(LevelModel, LoadsMatchConfiguredTotal) {
  const auto c = default_scenario();
  const auto m = sim::derive_level_model(c);
  EXPECT_NEAR(m.table.total_load(), c.impact_levels.total_load(), 1e-9);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(m.rates[i] / m.total_rate, c.level_frequencies[i], 1e-12);
}

TEST(LevelModel, RelevantShareBasisKeepsConfiguredLoads) {
  auto c = default_scenario();
  c.sim.frequencies_are_generation_shares = false;
  const auto m = sim::derive_level_model(c);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(m.table[i].load, c.impact_levels[i].load, 1e-9);
}

TEST(GenerateMessages, ZeroRateGeneratesNothing) {
  auto c = still(2);
  c.impact_levels = c.impact_levels.with_loads({0, 0, 0, 0});
  World w(c, Approach::kGTP, 1);
  for (int k = 0; k < 5; ++k) EXPECT_TRUE(w.generate_messages().empty());
}

TEST(GenerateMessages, LevelSharesAndOrigins) {
  const auto c = still(1);
  World w(c, Approach::kNC, 2);
  std::vector<long> per_level(4, 0);
  long total = 0;
  const double half = c.generation_region_km / 2;
  const Vec2 centre = w.generation_center();
  while (total < 100000) {
    for (const auto& m : w.generate_messages()) {
      const auto level = classify_message(m, w.level_model().table);
      ASSERT_TRUE(level.has_value());
      ++per_level[*level];
      ++total;
      ASSERT_LE(std::abs(m.origin.x - centre.x), half);
      ASSERT_LE(std::abs(m.origin.y - centre.y), half);
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double f = c.level_frequencies[i];
    const double sigma = std::sqrt(total * f * (1 - f));
    EXPECT_NEAR(per_level[i], total * f, 3 * sigma) << "level " << i + 1;
  }
}

TEST(CellularPush, FullSubscriptionDeliversEverythingRelevant) {
  World w(still(5), Approach::kNC, 3);
  set_strategy(w, {1, 1, 1, 1});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-30, 30);
  for (int k = 0; k < 2000; ++k) {
    const auto m = at(w, {u(rng), u(rng)}, k % 4);
    const auto d = w.cellular_push(m);
    for (const auto& v : w.vehicles()) {
      const bool relevant = vehicle_relevant(m, v.pos, m.radius_km);
      const bool held = std::find(d.holders.begin(), d.holders.end(), v.id) != d.holders.end();
      if (relevant) ASSERT_TRUE(held);
    }
  }
}

TEST(CellularPush, ZeroSubscriptionDeliversNothing) {
  World w(still(5), Approach::kGTP, 3);
  set_strategy(w, {0, 0, 0, 0});
  const auto before = w.vehicles()[0].window_bits;
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_TRUE(w.cellular_push(at(w, w.vehicles()[0].pos, i)).holders.empty());
  EXPECT_EQ(w.vehicles()[0].window_bits, before);
}

TEST(CellularPush, ChargesMessageSize) {
  World w(still(1), Approach::kNC, 3);
  set_strategy(w, {1, 1, 1, 1});
  auto m = at(w, w.vehicles()[0].pos, 0);
  m.size = 3.0;
  w.cellular_push(m);
  w.cellular_push(m);
  EXPECT_DOUBLE_EQ(w.vehicles()[0].window_bits, 6.0);
}

TEST(V2vShare, IsolatedVehicleGainsNothing) {
  World w(still(2), Approach::kGTP, 4);
  w.vehicles()[0].pos = {0, 0};
  w.vehicles()[1].pos = {1.5, 1.5};
  sim::Delivery d{{0}, {}};
  w.v2v_share(d);
  EXPECT_TRUE(d.relayed.empty());
}

TEST(V2vShare, InRangeVehiclesGetTheUnion) {
  World w(still(2), Approach::kGTP, 4);
  w.vehicles()[0].pos = {1, 1};
  w.vehicles()[1].pos = {1.1, 1};
  sim::Delivery a{{0}, {}};
  w.v2v_share(a);
  EXPECT_EQ(a.relayed, std::vector<int>{1});
  sim::Delivery b{{1}, {}};
  w.v2v_share(b);
  EXPECT_EQ(b.relayed, std::vector<int>{0});
}

TEST(V2vShare, RelaysOnlyWithinRangeOfAHolder) {
  World w(default_scenario(), Approach::kGTP, 5);
  for (int s = 0; s < 20; ++s) w.step();
  for (int h = 0; h < 10; ++h) {
    sim::Delivery d{{h}, {}};
    w.v2v_share(d);
    for (int r : d.relayed) EXPECT_TRUE(w.in_range(w.vehicles()[h], w.vehicles()[r]));
  }
}

// Co-located vehicles: the chance that vehicle 0 ends up with a message is
// 1 - (1 - p)^n.
TEST(V2vShare, ReceptionMatchesClosedForm) {
  constexpr int kVehicles = 3;
  constexpr int kTrials = 20000;
  World w(still(kVehicles), Approach::kGTP, 6);
  place_all(w, {1, 1});
  const double p = 0.3;
  set_strategy(w, {p, p, p, p});
  int got = 0;
  for (int k = 0; k < kTrials; ++k) {
    auto d = w.cellular_push(at(w, {1, 1}, 0));
    w.v2v_share(d);
    const bool held = std::find(d.holders.begin(), d.holders.end(), 0) != d.holders.end() ||
                      std::find(d.relayed.begin(), d.relayed.end(), 0) != d.relayed.end();
    got += held;
  }
  const double expected = 1 - std::pow(1 - p, kVehicles);
  const double sigma = std::sqrt(kTrials * expected * (1 - expected));
  EXPECT_NEAR(got, kTrials * expected, 3 * sigma);
}

TEST(UpdateStrategies, LoneGtpVehicleMatchesNc) {
  World gtp(still(1), Approach::kGTP, 7);
  World nc(still(1), Approach::kNC, 7);
  gtp.update_strategies();
  nc.update_strategies();
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(gtp.vehicles()[0].strategy[i], nc.vehicles()[0].strategy[i], 1e-12);
}

TEST(UpdateStrategies, CoLocatedPairCoordinates) {
  World w(still(2), Approach::kGTP, 8);
  place_all(w, {1, 1});
  w.update_strategies();
  const auto& s = w.vehicles()[0].strategy;
  bool fractional = false;
  for (double p : s.probabilities) fractional = fractional || (p > 1e-9 && p < 1 - 1e-9);
  EXPECT_TRUE(fractional);
}

TEST(UpdateStrategies, ClusterHeadPoolsBudget) {
  const int k = 3;
  World w(still(k), Approach::kGK, 9);
  place_all(w, {1, 1});
  w.maintain_clusters();
  w.update_strategies();
  ASSERT_EQ(w.clusters().size(), 1u);
  const auto& c = w.clusters()[0];
  EXPECT_EQ(c.members.size(), static_cast<std::size_t>(k - 1));
  const auto& head = w.vehicles()[c.head];
  const auto& table = w.level_model().table;
  double used = 0.0;
  for (std::size_t i = 0; i < 4; ++i) used += table[i].load * head.strategy[i];
  EXPECT_NEAR(used, k * w.bandwidth(), 1e-9);
  for (int m : c.members)
    for (double p : w.vehicles()[m].strategy.probabilities) EXPECT_EQ(p, 0.0);
}

TEST(UpdateStrategies, CountErrorShiftsObservedCounts) {
  auto c = still(3);
  c.sim.neighbor_count_error = 2;
  World w(c, Approach::kGTP, 10);
  place_all(w, {1, 1});
  EXPECT_EQ(w.observed_counts(w.vehicles()[0]), std::vector<int>{5});
  c.sim.neighbor_count_error = -5;
  World under(c, Approach::kGTP, 10);
  place_all(under, {1, 1});
  EXPECT_EQ(under.observed_counts(under.vehicles()[0]), std::vector<int>{1});
}

TEST(MaintainClusters, StaticVehiclesGkEqualsCl) {
  auto c = still(20);
  c.sim.slots = 120;
  const auto gk = sim::run_simulation(c, Approach::kGK, 11);
  const auto cl = sim::run_simulation(c, Approach::kCL, 11);
  ASSERT_EQ(gk.rows.size(), cl.rows.size());
  for (std::size_t k = 0; k < gk.rows.size(); ++k) {
    EXPECT_EQ(gk.rows[k].used_bandwidth, cl.rows[k].used_bandwidth);
    const double a = gk.rows[k].relative_utility, b = cl.rows[k].relative_utility;
    EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
  }
}

TEST(MaintainClusters, ClTimeoutHidesDeparture) {
  auto c = still(2);
  c.sim.cl_timeout_slots = 5;
  World w(c, Approach::kCL, 12);
  place_all(w, {1, 1});
  for (int s = 0; s < 3; ++s) w.step();
  ASSERT_EQ(w.clusters().size(), 1u);
  const int head = w.clusters()[0].head;
  const int member = 1 - head;
  const std::int64_t t = w.slot() - 1;  // last slot in range
  w.vehicles()[member].pos = {1.9, 1.9};
  for (std::int64_t s = t + 1; s <= t + 5; ++s) {
    w.step();
    ASSERT_EQ(w.vehicles()[member].role, sim::Role::kMember) << "slot " << s;
    sim::Delivery d{{head}, {}};
    w.v2v_share(d);
    EXPECT_TRUE(d.relayed.empty());
    double pooled = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      pooled += w.level_model().table[i].load * w.vehicles()[head].strategy[i];
    EXPECT_NEAR(pooled, 2 * w.bandwidth(), 1e-9);
  }
  w.step();  // slot t + 6: the departure is noticed
  EXPECT_NE(w.vehicles()[member].role, sim::Role::kMember);
}

TEST(MaintainClusters, GkDetectsDepartureImmediately) {
  World w(still(2), Approach::kGK, 13);
  place_all(w, {1, 1});
  w.step();
  w.vehicles()[1].pos = {1.9, 1.9};
  w.step();
  EXPECT_EQ(w.clusters().size(), 2u);
  for (const auto& v : w.vehicles()) EXPECT_EQ(v.role, sim::Role::kHead);
}

TEST(MaintainClusters, HighMobilityFavoursPerfectDetection) {
  auto c = default_scenario();
  c.sim.speed_min_mps = 25;
  c.sim.speed_max_mps = 40;
  c.sim.slots = 300;
  double gk = 0, cl = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    gk += sim::run_simulation(c, Approach::kGK, seed).mean_relative_utility;
    cl += sim::run_simulation(c, Approach::kCL, seed).mean_relative_utility;
  }
  EXPECT_LT(cl, gk);
}

TEST(Metrics, RelativeUtilityExamples) {
  sim::Vehicle v;
  EXPECT_TRUE(std::isnan(sim::relative_utility(v)));
  v.window_relevant = 10;
  v.window_received = 10;
  EXPECT_DOUBLE_EQ(sim::relative_utility(v), 1.0);
  v.window_received = 0;
  EXPECT_DOUBLE_EQ(sim::relative_utility(v), 0.0);
}

TEST(Metrics, ImpactWeightedShare) {
  World w(still(1), Approach::kNC, 14);
  const Vec2 pos = w.vehicles()[0].pos;
  const auto low = at(w, pos, 0);
  const auto high = at(w, pos, 3);
  w.record(low, {});
  w.record(high, {{0}, {}});
  EXPECT_NEAR(sim::relative_utility(w.vehicles()[0]), high.impact / (high.impact + low.impact),
              1e-12);
}

TEST(Metrics, UsedBandwidthExamples) {
  sim::Vehicle v;
  EXPECT_EQ(sim::used_bandwidth(v, 10), 0.0);
  v.total_bits = 10;
  EXPECT_DOUBLE_EQ(sim::used_bandwidth(v, 10), 1.0);
}

TEST(Run, WindowRowsAndRanges) {
  auto c = default_scenario();
  c.sim.slots = 130;
  const auto r = sim::run_simulation(c, Approach::kGTP, 15);
  EXPECT_EQ(r.rows.size(), static_cast<std::size_t>(3 * c.sim.vehicle_count));  // 60+60+10
  for (const auto& row : r.rows) {
    if (!std::isnan(row.relative_utility)) {
      EXPECT_GE(row.relative_utility, 0.0);
      EXPECT_LE(row.relative_utility, 1.0);
    }
    EXPECT_GE(row.used_bandwidth, 0.0);
  }
}

TEST(Run, ReportedRegionAlwaysContainsTruePosition) {
  auto c = default_scenario();
  c.privacy_profiles = {{1, 0, 1}, {2, 0.5, 1}};
  World w(c, Approach::kGTP, 16);
  for (int s = 0; s < 100; ++s) {
    w.step();
    for (const auto& v : w.vehicles()) ASSERT_TRUE(v.region.contains(v.pos));
  }
}

TEST(Run, GtpStaysWithinBudgetOnAverage) {
  const auto c = default_scenario();
  const auto r = sim::run_simulation(c, Approach::kGTP, 17);
  EXPECT_LE(r.mean_used_bandwidth, 1.05 * c.bandwidth_bits_per_slot);
  EXPECT_EQ(r.solver_failures, 0);
}

TEST(Run, SameSeedSameRows) {
  auto c = default_scenario();
  c.sim.slots = 120;
  for (auto a : {Approach::kGTP, Approach::kCL}) {
    const auto x = sim::run_simulation(c, a, 18);
    const auto y = sim::run_simulation(c, a, 18);
    ASSERT_EQ(x.rows.size(), y.rows.size());
    for (std::size_t k = 0; k < x.rows.size(); ++k) {
      EXPECT_EQ(x.rows[k].used_bandwidth, y.rows[k].used_bandwidth);
      EXPECT_TRUE(std::memcmp(&x.rows[k].relative_utility, &y.rows[k].relative_utility,
                              sizeof(double)) == 0);
    }
  }
}

TEST(Apportion, LargestRemainder) {
  EXPECT_EQ(sim::apportion(40, {1, 1}), (std::vector<int>{20, 20}));
  EXPECT_EQ(sim::apportion(10, {2, 1}), (std::vector<int>{7, 3}));
  EXPECT_EQ(sim::apportion(5, {0, 0}), (std::vector<int>{5, 0}));
}
