#pragma once

// JSON scenario files. Missing keys keep the defaults of default_scenario().

#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fcdgame/model.hpp"

namespace fcdgame {

using json = nlohmann::json;

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

// Impact levels are either given with explicit loads or derived from the
// level frequencies: load_i = f_i * required_load * message size.
inline ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  detail::reject_unknown(
      j,
      {"bandwidth_bits_per_slot", "bandwidth_fraction", "required_load", "impact_levels",
       "level_frequencies", "message_size_bits", "privacy_profiles", "trust_weight",
       "convergence_epsilon", "generation_region_km", "sim_region_km", "v2v_range_km",
       "slot_seconds", "seed", "sim", "analysis"},
      "scenario");
  ScenarioConfig c = default_scenario();
  using detail::read_opt;
  read_opt(j, "message_size_bits", c.message_size_bits);
  read_opt(j, "level_frequencies", c.level_frequencies);

  double required = 100.0;
  read_opt(j, "required_load", required);
  if (j.contains("impact_levels")) {
    const auto& arr = j.at("impact_levels");
    if (!arr.is_array() || arr.empty())
      throw ConfigError("impact_levels must be a non-empty array");
    std::vector<ImpactLevel> levels;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      detail::reject_unknown(
          e, {"radius_km", "impact_lower", "impact_upper", "expected_impact", "load"},
          "impact level " + std::to_string(i + 1));
      ImpactLevel l;
      if (!e.contains("radius_km") || !e.contains("expected_impact"))
        throw ConfigError("impact level " + std::to_string(i + 1) +
                          ": radius_km and expected_impact are required");
      read_opt(e, "radius_km", l.radius_km);
      read_opt(e, "expected_impact", l.expected_impact);
      l.impact_lower = l.expected_impact;
      read_opt(e, "impact_lower", l.impact_lower);
      l.impact_upper = std::numeric_limits<double>::infinity();
      if (e.contains("impact_upper")) {
        read_opt(e, "impact_upper", l.impact_upper);
      } else if (i + 1 < arr.size()) {
        const auto& next = arr[i + 1];
        double lower = 0.0;
        read_opt(next, "expected_impact", lower);
        read_opt(next, "impact_lower", lower);
        l.impact_upper = lower;
      }
      if (e.contains("load")) {
        read_opt(e, "load", l.load);
      } else {
        if (i >= c.level_frequencies.size())
          throw ConfigError("impact level " + std::to_string(i + 1) +
                            ": no load and no level frequency");
        l.load = c.level_frequencies[i] * required * c.message_size_bits;
      }
      levels.push_back(l);
    }
    c.impact_levels = ImpactLevelTable(std::move(levels));
    if (!j.contains("level_frequencies") && c.level_frequencies.size() != c.impact_levels.size()) {
      // Explicit loads without frequencies: generate in proportion to load.
      c.level_frequencies.clear();
      for (const auto& l : c.impact_levels) c.level_frequencies.push_back(l.load);
    }
  } else if (j.contains("required_load") || j.contains("message_size_bits") ||
             j.contains("level_frequencies")) {
    if (c.level_frequencies.size() != c.impact_levels.size())
      throw ConfigError("level_frequencies length differs from the default impact levels");
    std::vector<double> loads;
    for (double f : c.level_frequencies) loads.push_back(f * required * c.message_size_bits);
    c.impact_levels = c.impact_levels.with_loads(loads);
  }

  c.bandwidth_bits_per_slot = 0.10 * c.impact_levels.total_load();
  if (j.contains("bandwidth_fraction")) {
    double f = 0.0;
    read_opt(j, "bandwidth_fraction", f);
    c.bandwidth_bits_per_slot = f * c.impact_levels.total_load();
  }
  read_opt(j, "bandwidth_bits_per_slot", c.bandwidth_bits_per_slot);

  if (j.contains("privacy_profiles")) {
    const auto& arr = j.at("privacy_profiles");
    if (!arr.is_array()) throw ConfigError("privacy_profiles must be an array");
    c.privacy_profiles.clear();
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const auto& e = arr[k];
      detail::reject_unknown(e, {"phi", "imprecision_radius_km", "count"},
                             "privacy profile " + std::to_string(k + 1));
      PrivacyProfile p;
      p.phi = static_cast<int>(k) + 1;
      read_opt(e, "phi", p.phi);
      read_opt(e, "imprecision_radius_km", p.imprecision_radius_km);
      read_opt(e, "count", p.count);
      c.privacy_profiles.push_back(p);
    }
  }
  read_opt(j, "trust_weight", c.trust_weight);
  read_opt(j, "convergence_epsilon", c.convergence_epsilon);
  read_opt(j, "generation_region_km", c.generation_region_km);
  read_opt(j, "sim_region_km", c.sim_region_km);
  read_opt(j, "v2v_range_km", c.v2v_range_km);
  read_opt(j, "slot_seconds", c.slot_seconds);
  read_opt(j, "seed", c.seed);

  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    detail::reject_unknown(
        s,
        {"vehicle_count", "slots", "speed_min_mps", "speed_max_mps", "cl_timeout_slots",
         "metric_window_slots", "resample_region_on_exit", "nc_receives_shares",
         "frequencies_are_generation_shares", "neighbor_count_error",
         "bandwidth_sweep_bits_per_slot", "privacy_share_sweep"},
        "sim");
    read_opt(s, "vehicle_count", c.sim.vehicle_count);
    read_opt(s, "slots", c.sim.slots);
    read_opt(s, "speed_min_mps", c.sim.speed_min_mps);
    read_opt(s, "speed_max_mps", c.sim.speed_max_mps);
    read_opt(s, "cl_timeout_slots", c.sim.cl_timeout_slots);
    read_opt(s, "metric_window_slots", c.sim.metric_window_slots);
    read_opt(s, "resample_region_on_exit", c.sim.resample_region_on_exit);
    read_opt(s, "nc_receives_shares", c.sim.nc_receives_shares);
    read_opt(s, "frequencies_are_generation_shares", c.sim.frequencies_are_generation_shares);
    read_opt(s, "neighbor_count_error", c.sim.neighbor_count_error);
    read_opt(s, "bandwidth_sweep_bits_per_slot", c.sim.bandwidth_sweep_bits_per_slot);
    read_opt(s, "privacy_share_sweep", c.sim.privacy_share_sweep);
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    detail::reject_unknown(a,
                           {"neighborhood_size", "privacy_radii_km", "bandwidth_fractions",
                            "estimation_max_count", "estimation_shift", "estimation_radius_km"},
                           "analysis");
    read_opt(a, "neighborhood_size", c.analysis.neighborhood_size);
    read_opt(a, "privacy_radii_km", c.analysis.privacy_radii_km);
    read_opt(a, "bandwidth_fractions", c.analysis.bandwidth_fractions);
    read_opt(a, "estimation_max_count", c.analysis.estimation_max_count);
    read_opt(a, "estimation_shift", c.analysis.estimation_shift);
    read_opt(a, "estimation_radius_km", c.analysis.estimation_radius_km);
  }
  validate(c);
  return c;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file '" + path + "': " + e.what());
  }
  return scenario_from_json(j);
}

inline json scenario_to_json(const ScenarioConfig& c) {
  json levels = json::array();
  for (const auto& l : c.impact_levels) {
    json e{{"radius_km", l.radius_km},
           {"impact_lower", l.impact_lower},
           {"expected_impact", l.expected_impact},
           {"load", l.load}};
    if (std::isfinite(l.impact_upper)) e["impact_upper"] = l.impact_upper;
    levels.push_back(e);
  }
  json profiles = json::array();
  for (const auto& p : c.privacy_profiles)
    profiles.push_back(
        {{"phi", p.phi}, {"imprecision_radius_km", p.imprecision_radius_km}, {"count", p.count}});
  return json{{"bandwidth_bits_per_slot", c.bandwidth_bits_per_slot},
              {"impact_levels", levels},
              {"level_frequencies", c.level_frequencies},
              {"message_size_bits", c.message_size_bits},
              {"privacy_profiles", profiles},
              {"trust_weight", c.trust_weight},
              {"convergence_epsilon", c.convergence_epsilon},
              {"generation_region_km", c.generation_region_km},
              {"sim_region_km", c.sim_region_km},
              {"v2v_range_km", c.v2v_range_km},
              {"slot_seconds", c.slot_seconds},
              {"seed", c.seed},
              {"sim",
               {{"vehicle_count", c.sim.vehicle_count},
                {"slots", c.sim.slots},
                {"speed_min_mps", c.sim.speed_min_mps},
                {"speed_max_mps", c.sim.speed_max_mps},
                {"cl_timeout_slots", c.sim.cl_timeout_slots},
                {"metric_window_slots", c.sim.metric_window_slots},
                {"resample_region_on_exit", c.sim.resample_region_on_exit},
                {"nc_receives_shares", c.sim.nc_receives_shares},
                {"frequencies_are_generation_shares", c.sim.frequencies_are_generation_shares},
                {"neighbor_count_error", c.sim.neighbor_count_error},
                {"bandwidth_sweep_bits_per_slot", c.sim.bandwidth_sweep_bits_per_slot},
                {"privacy_share_sweep", c.sim.privacy_share_sweep}}},
              {"analysis",
               {{"neighborhood_size", c.analysis.neighborhood_size},
                {"privacy_radii_km", c.analysis.privacy_radii_km},
                {"bandwidth_fractions", c.analysis.bandwidth_fractions},
                {"estimation_max_count", c.analysis.estimation_max_count},
                {"estimation_shift", c.analysis.estimation_shift},
                {"estimation_radius_km", c.analysis.estimation_radius_km}}}};
}

}  // namespace fcdgame
