#pragma once

// Time-slotted simulation of server push, V2V sharing and the four
// subscription approaches.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fcdgame/model.hpp"
#include "fcdgame/obfuscation.hpp"
#include "fcdgame/solver.hpp"

namespace fcdgame::sim {

// Per-level generation rates and the accurate-location loads they induce.
struct LevelModel {
  ImpactLevelTable table;     // loads = expected relevant bits per slot
  std::vector<double> rates;  // generated messages per slot, whole region
  double total_rate{0.0};
};

// Messages are generated uniformly over the generation square with the
// configured level shares. The total rate is chosen so that a vehicle with an
// exact location sees the configured total load; per-level loads follow from
// the geocast disk areas.
inline LevelModel derive_level_model(const ScenarioConfig& c) {
  const double area = c.generation_region_km * c.generation_region_km;
  const double freq_sum =
      std::accumulate(c.level_frequencies.begin(), c.level_frequencies.end(), 0.0);
  auto coverage = [&](std::size_t i) {  // chance that a uniform origin is relevant
    const double r = c.impact_levels[i].radius_km;
    return std::numbers::pi * r * r / area;
  };
  LevelModel m;
  std::vector<double> loads;
  if (c.sim.frequencies_are_generation_shares) {
    double per_message_load = 0.0;  // expected relevant bits per generated message
    for (std::size_t i = 0; i < c.impact_levels.size(); ++i)
      per_message_load += c.level_frequencies[i] / freq_sum * coverage(i) * c.message_size_bits;
    m.total_rate = c.impact_levels.total_load() / per_message_load;
    for (std::size_t i = 0; i < c.impact_levels.size(); ++i) {
      m.rates.push_back(m.total_rate * c.level_frequencies[i] / freq_sum);
      loads.push_back(m.rates.back() * coverage(i) * c.message_size_bits);
    }
  } else {
    for (std::size_t i = 0; i < c.impact_levels.size(); ++i) {
      m.rates.push_back(c.impact_levels[i].load / (coverage(i) * c.message_size_bits));
      m.total_rate += m.rates.back();
      loads.push_back(c.impact_levels[i].load);
    }
  }
  m.table = c.impact_levels.with_loads(loads);
  return m;
}

enum class Role { kFree, kHead, kMember };

struct Vehicle {
  int id{0};
  Vec2 pos;
  Vec2 waypoint;
  double speed_km_per_slot{0.0};
  std::size_t phi{0};
  ReportedRegion region;
  Strategy strategy;
  Role role{Role::kFree};
  int head{-1};

  // current metric window
  double window_relevant{0.0};
  double window_received{0.0};
  double window_bits{0.0};
  // whole run
  double total_relevant{0.0};
  double total_received{0.0};
  double total_bits{0.0};
};

struct Cluster {
  int head{-1};
  std::vector<int> members;
  std::int64_t formed_at{0};
  std::map<int, std::int64_t> last_heard;
};

struct MetricRow {
  int window{0};
  int vehicle{0};
  int privacy_level{1};
  double relative_utility{std::numeric_limits<double>::quiet_NaN()};
  double used_bandwidth{0.0};
};

// Receivers of one message: cellular holders and V2V relay targets.
struct Delivery {
  std::vector<int> holders;
  std::vector<int> relayed;
};

// Per-slot counters, used by tests.
struct SlotTrace {
  std::size_t generated{0};
  std::size_t considered{0};
  std::size_t cellular_deliveries{0};
  std::size_t relayed_deliveries{0};
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Splits `total` vehicles over privacy levels proportionally to weights
// (largest remainder, ties to the lower level).
inline std::vector<int> apportion(int total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> out(weights.size(), 0);
  if (sum <= 0.0) {
    out[0] = total;
    return out;
  }
  std::vector<std::pair<double, std::size_t>> rest;
  int given = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = total * weights[k] / sum;
    out[k] = static_cast<int>(std::floor(exact));
    given += out[k];
    rest.emplace_back(exact - out[k], k);
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[rest[k % rest.size()].second];
  return out;
}

class World {
 public:
  World(ScenarioConfig config, Approach approach, std::uint64_t seed,
        std::vector<int> vehicles_per_level = {})
      : config_(std::move(config)),
        approach_(approach),
        seed_(seed),
        model_(derive_level_model(config_)),
        rho_(RhoTable::from_profiles(config_.privacy_profiles, config_.impact_levels)),
        mobility_rng_(mix_seed(seed, 1)),
        message_rng_(mix_seed(seed, 2)),
        delivery_rng_(mix_seed(seed, 3)),
        region_rng_(mix_seed(seed, 4)) {
    validate(config_);
    const double half = config_.sim_region_km / 2.0;
    center_ = {half, half};
    if (vehicles_per_level.empty()) {
      std::vector<double> w;
      for (const auto& p : config_.privacy_profiles) w.push_back(std::max(0, p.count));
      vehicles_per_level = apportion(config_.sim.vehicle_count, w);
    }
    if (vehicles_per_level.size() != config_.privacy_profiles.size())
      throw ConfigError("vehicle split does not match privacy profiles");
    std::uniform_real_distribution<double> coord(0.0, config_.sim_region_km);
    int id = 0;
    for (std::size_t phi = 0; phi < vehicles_per_level.size(); ++phi)
      for (int k = 0; k < vehicles_per_level[phi]; ++k) {
        Vehicle v;
        v.id = id++;
        v.phi = phi;
        v.pos = {coord(mobility_rng_), coord(mobility_rng_)};
        pick_waypoint(v);
        v.strategy = Strategy{std::vector<double>(levels(), 0.0)};
        vehicles_.push_back(v);
      }
    for (auto& v : vehicles_) refresh_region(v, true);
    solver_options_.epsilon = config_.convergence_epsilon;
    solver_options_.trust_weight = config_.trust_weight;
    double max_rphi = 0.0;
    for (const auto& p : config_.privacy_profiles)
      max_rphi = std::max(max_rphi, p.imprecision_radius_km);
    for (std::size_t i = 0; i < levels(); ++i)
      reach_.push_back(model_.table[i].radius_km + max_rphi + half * std::sqrt(2.0) + 1e-9);
  }

  std::size_t levels() const { return config_.impact_levels.size(); }
  std::int64_t slot() const { return slot_; }
  Approach approach() const { return approach_; }
  const LevelModel& level_model() const { return model_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  std::vector<Vehicle>& vehicles() { return vehicles_; }
  const std::vector<Cluster>& clusters() const { return clusters_; }
  const std::vector<MetricRow>& rows() const { return rows_; }
  const ScenarioConfig& config() const { return config_; }
  double bandwidth() const { return config_.bandwidth_bits_per_slot; }
  int solver_failures() const { return solver_failures_; }
  const SlotTrace& last_trace() const { return trace_; }

  // Neighbours within V2V range (excluding the vehicle itself).
  std::vector<int> neighbours(int id) const {
    std::vector<int> out;
    for (const auto& u : vehicles_)
      if (u.id != id && in_range(vehicles_[id], u)) out.push_back(u.id);
    return out;
  }

  bool in_range(const Vehicle& a, const Vehicle& b) const {
    return distance(a.pos, b.pos) <= config_.v2v_range_km;
  }

  // Observed vehicles per privacy level within V2V range, self included.
  std::vector<int> observed_counts(const Vehicle& v) const {
    std::vector<int> counts(config_.privacy_profiles.size(), 0);
    for (const auto& u : vehicles_)
      if (u.id == v.id || in_range(v, u)) ++counts[u.phi];
    const int err = config_.sim.neighbor_count_error;
    if (err != 0)
      for (std::size_t phi = 0; phi < counts.size(); ++phi) {
        const int floor = phi == v.phi ? 1 : 0;
        counts[phi] = std::max(floor, counts[phi] + err);
      }
    return counts;
  }

  // Uniform origins over the generation square, level by configured share.
  std::vector<Message> generate_messages() {
    std::vector<Message> out;
    if (!(model_.total_rate > 0.0)) return out;
    std::poisson_distribution<long> count(model_.total_rate);
    std::discrete_distribution<std::size_t> level(model_.rates.begin(), model_.rates.end());
    const double half = config_.generation_region_km / 2.0;
    std::uniform_real_distribution<double> dx(center_.x - half, center_.x + half);
    std::uniform_real_distribution<double> dy(center_.y - half, center_.y + half);
    const long n = count(message_rng_);
    out.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) {
      const std::size_t i = level(message_rng_);
      Message m;
      m.id = next_message_id_++;
      m.origin = {dx(message_rng_), dy(message_rng_)};
      m.impact = model_.table[i].expected_impact;
      m.size = config_.message_size_bits;
      m.radius_km = model_.table[i].radius_km;
      m.created_at = slot_;
      out.push_back(m);
    }
    return out;
  }

  // Geometry of the generation square (for tests).
  Vec2 generation_center() const { return center_; }

  // Every non-NC approach shares; NC only if configured to.
  bool shares() const { return approach_ != Approach::kNC || config_.sim.nc_receives_shares; }

  // Advances one slot: mobility, regions, clusters, strategies, then the
  // messages of this slot.
  void step() {
    if (slot_ > 0) move_all();
    for (auto& v : vehicles_) refresh_region(v, !config_.sim.resample_region_on_exit);
    maintain_clusters();
    update_strategies();
    trace_ = {};
    const auto messages = generate_messages();
    trace_.generated = messages.size();
    for (const auto& m : messages) deliver(m);
    ++slot_;
    if (slot_ % config_.sim.metric_window_slots == 0) close_window();
  }

  void run() {
    while (slot_ < config_.sim.slots) step();
    if (slot_ % config_.sim.metric_window_slots != 0) close_window();
  }

  // Maintains clusters for GK (rebuilt every slot from true ranges) and CL
  // (members dropped only after the timeout).
  void maintain_clusters() {
    if (approach_ == Approach::kGK) {
      clusters_.clear();
      for (auto& v : vehicles_) {
        v.role = Role::kFree;
        v.head = -1;
      }
      elect(all_ids());
      return;
    }
    if (approach_ != Approach::kCL) return;

    const int timeout = config_.sim.cl_timeout_slots;
    for (auto& c : clusters_) {
      const auto& head = vehicles_[c.head];
      std::vector<int> kept;
      for (int m : c.members) {
        if (in_range(head, vehicles_[m])) c.last_heard[m] = slot_;
        if (slot_ - c.last_heard[m] > timeout) {
          vehicles_[m].role = Role::kFree;
          vehicles_[m].head = -1;
          c.last_heard.erase(m);
        } else {
          kept.push_back(m);
        }
      }
      c.members = std::move(kept);
    }
    // A head left without members is free to join another cluster.
    std::vector<Cluster> alive;
    for (auto& c : clusters_) {
      if (c.members.empty()) {
        vehicles_[c.head].role = Role::kFree;
        vehicles_[c.head].head = -1;
      } else {
        alive.push_back(std::move(c));
      }
    }
    clusters_ = std::move(alive);

    // Free vehicles join the nearest head in range.
    for (auto& v : vehicles_) {
      if (v.role != Role::kFree) continue;
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < clusters_.size(); ++k) {
        const double d = distance(v.pos, vehicles_[clusters_[k].head].pos);
        if (d <= config_.v2v_range_km && d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      if (best >= 0) {
        auto& c = clusters_[static_cast<std::size_t>(best)];
        c.members.push_back(v.id);
        c.last_heard[v.id] = slot_;
        v.role = Role::kMember;
        v.head = c.head;
      }
    }
    std::vector<int> free;
    for (const auto& v : vehicles_)
      if (v.role == Role::kFree) free.push_back(v.id);
    elect(free);
  }

  void update_strategies() {
    const double budget = config_.bandwidth_bits_per_slot;
    switch (approach_) {
      case Approach::kNC:
        for (auto& v : vehicles_)
          v.strategy = single_vehicle_strategy(model_.table, rho_.row(v.phi), budget);
        break;
      case Approach::kGTP:
        for (auto& v : vehicles_) {
          const auto counts = observed_counts(v);
          const auto key = std::make_pair(counts, v.phi);
          auto it = cache_.find(key);
          if (it == cache_.end()) {
            Game g{model_.table, rho_, counts, budget};
            try {
              const auto solved = solve_optimal(g, v.phi, solver_options_);
              it = cache_.emplace(key, solved.profile.strategies[v.phi]).first;
            } catch (const Error&) {
              ++solver_failures_;  // keep last slot's strategy
              continue;
            }
          }
          v.strategy = it->second;
        }
        break;
      case Approach::kGK:
      case Approach::kCL:
        for (auto& v : vehicles_) v.strategy = Strategy{std::vector<double>(levels(), 0.0)};
        for (const auto& c : clusters_) {
          const double pooled = budget * static_cast<double>(1 + c.members.size());
          auto& head = vehicles_[c.head];
          head.strategy = single_vehicle_strategy(model_.table, rho_.row(head.phi), pooled);
        }
        break;
    }
  }

  // Server filter plus one independent Bernoulli draw per vehicle; every
  // delivery is charged to the receiving vehicle.
  Delivery cellular_push(const Message& m) {
    Delivery d;
    const auto level = classify_message(m, model_.table);
    if (!level) return d;
    const std::size_t i = *level;
    const double r = model_.table[i].radius_km;
    for (const auto& v : vehicles_) {
      if (!server_relevant(m, v.region, r)) continue;
      const double p = v.strategy[i];
      if (p <= 0.0) continue;
      if (p < 1.0 && unit_(delivery_rng_) >= p) continue;
      d.holders.push_back(v.id);
    }
    for (int h : d.holders) vehicles_[h].window_bits += m.size;
    trace_.cellular_deliveries += d.holders.size();
    return d;
  }

  // Lossless same-slot relay. GTP holders reach every vehicle in range;
  // cluster heads reach their own in-range members only.
  void v2v_share(Delivery& d) {
    received_.assign(vehicles_.size(), 0);
    for (int h : d.holders) received_[h] = 1;
    auto relay = [&](int to) {
      if (received_[to]) return;
      received_[to] = 1;
      d.relayed.push_back(to);
    };
    for (int h : d.holders) {
      const auto& holder = vehicles_[h];
      if (approach_ == Approach::kGK || approach_ == Approach::kCL) {
        if (holder.role != Role::kHead) continue;
        for (const auto& c : clusters_)
          if (c.head == h)
            for (int mem : c.members)
              if (in_range(holder, vehicles_[mem])) relay(mem);
      } else {
        for (const auto& u : vehicles_)
          if (in_range(holder, u)) relay(u.id);
      }
    }
    trace_.relayed_deliveries += d.relayed.size();
  }

  // Adds the message to the relevance and reception sums of the window.
  void record(const Message& m, const Delivery& d) {
    const auto level = classify_message(m, model_.table);
    if (!level) return;
    const double r = model_.table[*level].radius_km;
    received_.assign(vehicles_.size(), 0);
    for (int h : d.holders) received_[h] = 1;
    for (int u : d.relayed) received_[u] = 1;
    const double value = m.impact * m.size;
    for (auto& v : vehicles_) {
      if (!vehicle_relevant(m, v.pos, r)) continue;
      v.window_relevant += value;
      if (received_[v.id]) v.window_received += value;
    }
  }

  void deliver(const Message& m) {
    const auto level = classify_message(m, model_.table);
    if (!level || distance(m.origin, center_) > reach_[*level]) return;
    ++trace_.considered;
    auto d = cellular_push(m);
    if (shares()) v2v_share(d);
    record(m, d);
  }

  // Folds the open window into per-vehicle rows and run totals.
  void close_window() {
    const std::int64_t span = slot_ - window_start_;
    if (span <= 0) return;
    for (auto& v : vehicles_) {
      MetricRow row;
      row.window = window_index_;
      row.vehicle = v.id;
      row.privacy_level = config_.privacy_profiles[v.phi].phi;
      if (v.window_relevant > 0.0) row.relative_utility = v.window_received / v.window_relevant;
      row.used_bandwidth = v.window_bits / static_cast<double>(span);
      rows_.push_back(row);
      v.total_relevant += v.window_relevant;
      v.total_received += v.window_received;
      v.total_bits += v.window_bits;
      v.window_relevant = v.window_received = v.window_bits = 0.0;
    }
    ++window_index_;
    window_start_ = slot_;
  }

 private:
  std::vector<int> all_ids() const {
    std::vector<int> ids(vehicles_.size());
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
  }

  // Lowest-id election among the candidates, then every remaining candidate
  // attaches to its nearest new head.
  void elect(const std::vector<int>& candidates) {
    std::vector<int> heads;
    for (int id : candidates) {
      bool covered = false;
      for (int h : heads)
        if (in_range(vehicles_[id], vehicles_[h])) {
          covered = true;
          break;
        }
      if (!covered) heads.push_back(id);
    }
    std::vector<std::size_t> index;
    for (int h : heads) {
      Cluster c;
      c.head = h;
      c.formed_at = slot_;
      vehicles_[h].role = Role::kHead;
      vehicles_[h].head = h;
      index.push_back(clusters_.size());
      clusters_.push_back(std::move(c));
    }
    for (int id : candidates) {
      auto& v = vehicles_[id];
      if (v.role == Role::kHead) continue;
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < heads.size(); ++k) {
        const double d = distance(v.pos, vehicles_[heads[k]].pos);
        if (d <= config_.v2v_range_km && d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      if (best < 0) continue;  // unreachable: every candidate is near some head
      auto& c = clusters_[index[static_cast<std::size_t>(best)]];
      c.members.push_back(id);
      c.last_heard[id] = slot_;
      v.role = Role::kMember;
      v.head = c.head;
    }
  }

  void pick_waypoint(Vehicle& v) {
    std::uniform_real_distribution<double> coord(0.0, config_.sim_region_km);
    std::uniform_real_distribution<double> speed(config_.sim.speed_min_mps,
                                                 config_.sim.speed_max_mps);
    v.waypoint = {coord(mobility_rng_), coord(mobility_rng_)};
    v.speed_km_per_slot = speed(mobility_rng_) * config_.slot_seconds / 1000.0;
  }

  void move_all() {
    for (auto& v : vehicles_) {
      double budget = v.speed_km_per_slot;
      while (budget > 0.0) {
        const double d = distance(v.pos, v.waypoint);
        if (d > budget) {
          v.pos = v.pos + (budget / d) * (v.waypoint - v.pos);
          break;
        }
        v.pos = v.waypoint;
        budget -= d;
        pick_waypoint(v);
        if (v.speed_km_per_slot <= 0.0) break;
      }
    }
  }

  void refresh_region(Vehicle& v, bool always) {
    const double r = config_.privacy_profiles[v.phi].imprecision_radius_km;
    if (always || !v.region.contains(v.pos) || v.region.radius_km != r)
      v.region = sample_reported_region(v.pos, r, region_rng_);
  }

  ScenarioConfig config_;
  Approach approach_;
  std::uint64_t seed_;
  LevelModel model_;
  RhoTable rho_;
  Vec2 center_;
  std::vector<double> reach_;
  std::vector<Vehicle> vehicles_;
  std::vector<Cluster> clusters_;
  std::vector<MetricRow> rows_;
  std::int64_t slot_{0};
  std::int64_t window_start_{0};
  int window_index_{0};
  std::uint64_t next_message_id_{0};
  int solver_failures_{0};
  SolverOptions solver_options_;
  std::map<std::pair<std::vector<int>, std::size_t>, Strategy> cache_;
  std::mt19937_64 mobility_rng_;
  std::mt19937_64 message_rng_;
  std::mt19937_64 delivery_rng_;
  std::mt19937_64 region_rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::vector<char> received_;
  SlotTrace trace_;
};

// Impact-weighted share of relevant messages received so far (NaN when
// nothing was relevant).
inline double relative_utility(const Vehicle& v) {
  const double relevant = v.total_relevant + v.window_relevant;
  return relevant > 0.0 ? (v.total_received + v.window_received) / relevant
                        : std::numeric_limits<double>::quiet_NaN();
}

// Cellular bits per slot over the given number of slots.
inline double used_bandwidth(const Vehicle& v, std::int64_t slots) {
  return slots > 0 ? (v.total_bits + v.window_bits) / static_cast<double>(slots) : 0.0;
}

struct RunSummary {
  Approach approach{Approach::kGTP};
  std::uint64_t seed{0};
  double bandwidth{0.0};
  double privacy_share{0.0};
  double mean_relative_utility{0.0};
  double mean_used_bandwidth{0.0};
  double max_used_bandwidth{0.0};
  int solver_failures{0};
  std::vector<MetricRow> rows;
};

inline RunSummary run_simulation(const ScenarioConfig& config, Approach approach,
                                 std::uint64_t seed, std::vector<int> split = {}) {
  World w(config, approach, seed, std::move(split));
  w.run();
  RunSummary s;
  s.approach = approach;
  s.seed = seed;
  s.bandwidth = config.bandwidth_bits_per_slot;
  double sum_u = 0.0;
  int n_u = 0;
  double sum_b = 0.0;
  for (const auto& v : w.vehicles()) {
    const double u = relative_utility(v);
    if (!std::isnan(u)) {
      sum_u += u;
      ++n_u;
    }
    const double b = used_bandwidth(v, w.slot());
    sum_b += b;
    s.max_used_bandwidth = std::max(s.max_used_bandwidth, b);
  }
  s.mean_relative_utility = n_u ? sum_u / n_u : std::numeric_limits<double>::quiet_NaN();
  s.mean_used_bandwidth = sum_b / static_cast<double>(w.vehicles().size());
  s.solver_failures = w.solver_failures();
  s.rows = w.rows();
  return s;
}

}  // namespace fcdgame::sim
