#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcdgame {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scenario or argument validation failed.
struct ConfigError : Error {
  using Error::Error;
};

// A computation refused to run because an instance exceeds a size guard.
struct GuardError : Error {
  using Error::Error;
};

// Impact level with a non-positive radius (adaptation factor undefined).
struct InvalidLevelError : Error {
  using Error::Error;
};

// Support partition with n+(l) = 0: the root in the lambda term is undefined.
struct DegenerateSupportError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

// Planar position in kilometres.
struct Vec2 {
  double x{0.0};
  double y{0.0};

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Message {
  std::uint64_t id{0};
  Vec2 origin;
  double impact{1.0};     // impact per bit
  double size{1.0};       // bits
  double radius_km{1.0};  // dissemination radius
  std::int64_t created_at{0};
};

inline void validate(const Message& m) {
  if (!(m.impact > 0.0) || !(m.size > 0.0) || !(m.radius_km > 0.0))
    throw ConfigError("message " + std::to_string(m.id) +
                      ": impact, size and radius must be positive");
}

// One impact level. Indices are 0-based in code; files and reports print
// them 1-based.
struct ImpactLevel {
  double radius_km{1.0};
  double impact_lower{0.0};
  double impact_upper{std::numeric_limits<double>::infinity()};
  double expected_impact{1.0};  // expected impact per bit
  double load{0.0};             // bits per slot with an accurate location
};

class ImpactLevelTable {
 public:
  ImpactLevelTable() = default;

  explicit ImpactLevelTable(std::vector<ImpactLevel> levels) : levels_(std::move(levels)) {
    check();
  }

  // Builds a table whose interval upper bounds are the next level's lower
  // bound; the last level is unbounded above.
  static ImpactLevelTable from_bounds(const std::vector<double>& impact_lower,
                                      const std::vector<double>& expected_impact,
                                      const std::vector<double>& radius_km,
                                      const std::vector<double>& load) {
    const auto n = impact_lower.size();
    if (expected_impact.size() != n || radius_km.size() != n || load.size() != n)
      throw ConfigError("impact level vectors differ in length");
    std::vector<ImpactLevel> levels(n);
    for (std::size_t i = 0; i < n; ++i) {
      levels[i].impact_lower = impact_lower[i];
      levels[i].impact_upper =
          i + 1 < n ? impact_lower[i + 1] : std::numeric_limits<double>::infinity();
      levels[i].expected_impact = expected_impact[i];
      levels[i].radius_km = radius_km[i];
      levels[i].load = load[i];
    }
    return ImpactLevelTable(std::move(levels));
  }

  std::size_t size() const { return levels_.size(); }
  bool empty() const { return levels_.empty(); }
  const ImpactLevel& operator[](std::size_t i) const { return levels_[i]; }
  const std::vector<ImpactLevel>& levels() const { return levels_; }
  auto begin() const { return levels_.begin(); }
  auto end() const { return levels_.end(); }

  double total_load() const {
    return std::accumulate(levels_.begin(), levels_.end(), 0.0,
                           [](double s, const ImpactLevel& l) { return s + l.load; });
  }

  // Sum of expected impact times load: the utility of receiving everything.
  double total_value() const {
    return std::accumulate(levels_.begin(), levels_.end(), 0.0, [](double s, const ImpactLevel& l) {
      return s + l.expected_impact * l.load;
    });
  }

  ImpactLevelTable with_loads(const std::vector<double>& loads) const {
    if (loads.size() != levels_.size()) throw ConfigError("load vector length mismatch");
    auto copy = levels_;
    for (std::size_t i = 0; i < copy.size(); ++i) copy[i].load = loads[i];
    return ImpactLevelTable(std::move(copy));
  }

 private:
  void check() const {
    if (levels_.empty()) throw ConfigError("impact level table is empty");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      const auto& l = levels_[i];
      const auto where = "impact level " + std::to_string(i + 1) + ": ";
      if (!(l.radius_km > 0.0)) throw ConfigError(where + "radius must be positive");
      if (!(l.impact_lower < l.impact_upper)) throw ConfigError(where + "impact interval is empty");
      if (!(l.expected_impact >= l.impact_lower && l.expected_impact < l.impact_upper))
        throw ConfigError(where + "expected impact outside its interval");
      if (!(l.load >= 0.0)) throw ConfigError(where + "load must be non-negative");
      if (i > 0) {
        const auto& prev = levels_[i - 1];
        const bool ordered =
            prev.expected_impact < l.expected_impact ||
            (prev.expected_impact == l.expected_impact && prev.radius_km < l.radius_km);
        if (!ordered)
          throw ConfigError(where + "levels must be ordered by expected impact, then radius");
      }
    }
  }

  std::vector<ImpactLevel> levels_;
};

struct PrivacyProfile {
  int phi{1};
  double imprecision_radius_km{0.0};
  int count{1};  // vehicles at this level nearby, tagged vehicle included
};

inline void validate(const PrivacyProfile& p) {
  if (!(p.imprecision_radius_km >= 0.0))
    throw ConfigError("privacy level " + std::to_string(p.phi) +
                      ": imprecision radius must be non-negative");
  if (p.phi == 1 && p.imprecision_radius_km != 0.0)
    throw ConfigError("privacy level 1 must report an exact location");
  if (p.count < 0) throw ConfigError("privacy level " + std::to_string(p.phi) + ": negative count");
}

// Subscription probabilities over impact levels.
struct Strategy {
  std::vector<double> probabilities;

  std::size_t size() const { return probabilities.size(); }
  double operator[](std::size_t i) const { return probabilities[i]; }
  double& operator[](std::size_t i) { return probabilities[i]; }
  friend bool operator==(const Strategy&, const Strategy&) = default;
};

inline void validate_strategy(const Strategy& s, const ImpactLevelTable& table) {
  if (s.size() != table.size())
    throw ConfigError("strategy has " + std::to_string(s.size()) + " entries but the table has " +
                      std::to_string(table.size()) + " impact levels");
  for (double p : s.probabilities)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("strategy entry outside [0,1]");
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

enum class Approach { kGTP, kNC, kGK, kCL };

inline std::string to_string(Approach a) {
  switch (a) {
    case Approach::kGTP:
      return "GTP";
    case Approach::kNC:
      return "NC";
    case Approach::kGK:
      return "GK";
    case Approach::kCL:
      return "CL";
  }
  return "?";
}

inline Approach approach_from_string(const std::string& s) {
  if (s == "GTP") return Approach::kGTP;
  if (s == "NC") return Approach::kNC;
  if (s == "GK") return Approach::kGK;
  if (s == "CL") return Approach::kCL;
  throw ConfigError("unknown approach '" + s + "' (expected GTP, NC, GK or CL)");
}

struct SimSettings {
  int vehicle_count{40};
  int slots{600};
  double speed_min_mps{5.0};
  double speed_max_mps{15.0};
  int cl_timeout_slots{5};
  int metric_window_slots{60};
  bool resample_region_on_exit{true};
  bool nc_receives_shares{false};
  // Level frequencies as shares of generated messages (true) or of the
  // relevant load seen with an exact location (false).
  bool frequencies_are_generation_shares{true};
  int neighbor_count_error{0};                        // added to observed counts of other vehicles
  std::vector<double> bandwidth_sweep_bits_per_slot;  // empty: config bandwidth only
  std::vector<double> privacy_share_sweep;            // empty: profile counts as given
};

struct AnalysisSettings {
  int neighborhood_size{30};
  std::vector<double> privacy_radii_km{0.1, 10.0};
  std::vector<double> bandwidth_fractions{0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
  int estimation_max_count{10};
  int estimation_shift{1};
  double estimation_radius_km{1.0};
};

struct ScenarioConfig {
  double bandwidth_bits_per_slot{10.0};
  ImpactLevelTable impact_levels;
  std::vector<double> level_frequencies;  // share of generated messages per level
  double message_size_bits{1.0};
  std::vector<PrivacyProfile> privacy_profiles;
  double trust_weight{1.0};
  double convergence_epsilon{1e-9};
  double generation_region_km{220.0};
  double sim_region_km{2.0};
  double v2v_range_km{0.3};
  double slot_seconds{1.0};
  std::uint64_t seed{1};
  SimSettings sim;
  AnalysisSettings analysis;
};

inline void validate(const ScenarioConfig& c) {
  if (!(c.bandwidth_bits_per_slot > 0.0)) throw ConfigError("bandwidth must be positive");
  if (!(c.convergence_epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(c.trust_weight >= 0.0 && c.trust_weight <= 1.0))
    throw ConfigError("trust weight must lie in [0,1]");
  if (c.impact_levels.empty()) throw ConfigError("no impact levels");
  if (c.level_frequencies.size() != c.impact_levels.size())
    throw ConfigError("level frequency vector length differs from impact levels");
  double freq_sum = 0.0;
  for (double f : c.level_frequencies) {
    if (!(f >= 0.0)) throw ConfigError("negative level frequency");
    freq_sum += f;
  }
  if (!(freq_sum > 0.0)) throw ConfigError("level frequencies sum to zero");
  if (!(c.message_size_bits > 0.0)) throw ConfigError("message size must be positive");
  if (c.privacy_profiles.empty()) throw ConfigError("no privacy profiles");
  for (std::size_t k = 0; k < c.privacy_profiles.size(); ++k) {
    validate(c.privacy_profiles[k]);
    for (std::size_t j = 0; j < k; ++j)
      if (c.privacy_profiles[j].phi == c.privacy_profiles[k].phi)
        throw ConfigError("duplicate privacy level " + std::to_string(c.privacy_profiles[k].phi));
  }
  if (!(c.generation_region_km > 0.0) || !(c.sim_region_km > 0.0))
    throw ConfigError("region sizes must be positive");
  if (c.sim_region_km > c.generation_region_km)
    throw ConfigError("simulation region larger than generation region");
  if (!(c.v2v_range_km >= 0.0)) throw ConfigError("v2v range must be non-negative");
  if (!(c.slot_seconds > 0.0)) throw ConfigError("slot length must be positive");
  const auto& s = c.sim;
  if (s.vehicle_count < 1) throw ConfigError("need at least one vehicle");
  if (s.slots < 1) throw ConfigError("need at least one slot");
  if (!(s.speed_min_mps >= 0.0 && s.speed_max_mps >= s.speed_min_mps))
    throw ConfigError("invalid speed range");
  if (s.cl_timeout_slots < 0) throw ConfigError("negative cluster timeout");
  if (s.metric_window_slots < 1) throw ConfigError("metric window must be positive");
  for (double b : s.bandwidth_sweep_bits_per_slot)
    if (!(b > 0.0)) throw ConfigError("bandwidth sweep values must be positive");
  for (double p : s.privacy_share_sweep)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("privacy shares must lie in [0,1]");
  if (!s.privacy_share_sweep.empty() && c.privacy_profiles.size() != 2)
    throw ConfigError("a privacy share sweep needs exactly two privacy profiles");
  const auto& a = c.analysis;
  if (a.neighborhood_size < 1) throw ConfigError("analysis neighborhood must be >= 1");
  if (a.estimation_max_count < 1) throw ConfigError("estimation grid must be >= 1");
  if (a.estimation_shift < 0) throw ConfigError("estimation shift must be >= 0");
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline bool radius_matches(double a, double b) {
  return std::abs(a - b) <= 1e-6 * std::max(std::abs(a), std::abs(b));
}

// Level whose radius equals the message radius and whose impact interval
// contains the message impact.
inline std::optional<std::size_t> classify_message(const Message& m,
                                                   const ImpactLevelTable& table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& l = table[i];
    if (radius_matches(m.radius_km, l.radius_km) && m.impact >= l.impact_lower &&
        m.impact < l.impact_upper)
      return i;
  }
  return std::nullopt;
}

// Built-in four-level defaults. Frequencies are converted to loads with a
// total relevant rate of 100 messages per slot and unit message size; the
// bandwidth is 10% of that total.
inline ScenarioConfig default_scenario() {
  constexpr double kRequiredLoad = 100.0;
  const std::vector<double> impacts{1.0, 10.0, 100.0, 1000.0};
  const std::vector<double> frequencies{0.90, 0.09, 0.009, 0.001};
  const std::vector<double> radii{10.0, 1.0, 100.0, 100.0};

  ScenarioConfig c;
  std::vector<double> loads(frequencies.size());
  for (std::size_t i = 0; i < loads.size(); ++i)
    loads[i] = frequencies[i] * kRequiredLoad * c.message_size_bits;
  c.impact_levels = ImpactLevelTable::from_bounds(impacts, impacts, radii, loads);
  c.level_frequencies = frequencies;
  c.bandwidth_bits_per_slot = 0.10 * c.impact_levels.total_load();
  c.privacy_profiles = {PrivacyProfile{1, 0.0, 1}};
  return c;
}

}  // namespace fcdgame
