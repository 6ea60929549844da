#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fcdgame/model.hpp"

namespace fcdgame {

// Disk reported to the server instead of the true position.
struct ReportedRegion {
  Vec2 center;
  double radius_km{0.0};

  bool contains(Vec2 p) const { return distance(p, center) <= radius_km; }
};

// Load inflation caused by reporting a disk of radius r_phi instead of a
// point, for messages disseminated over a disk of radius r_i.
inline double adaptation_factor(double r_phi, double r_i) {
  if (!(r_i > 0.0)) throw InvalidLevelError("geocast radius must be positive");
  if (!(r_phi >= 0.0)) throw ConfigError("imprecision radius must be non-negative");
  const double q = r_phi / r_i + 1.0;
  return q * q;
}

inline double obfuscated_load(double load, double rho) { return load * rho; }

inline double obfuscated_impact(double expected_impact, double rho) {
  return expected_impact / rho;
}

// Uniform point in a disk of the given radius around the origin.
template <class Rng>
Vec2 uniform_in_disk(double radius, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = radius * std::sqrt(unit(rng));
  const double theta = 2.0 * std::numbers::pi * unit(rng);
  return {r * std::cos(theta), r * std::sin(theta)};
}

// The true position ends up uniformly distributed inside the returned disk.
template <class Rng>
ReportedRegion sample_reported_region(Vec2 true_pos, double r_phi, Rng& rng) {
  if (r_phi == 0.0) return {true_pos, 0.0};
  return {true_pos + uniform_in_disk(r_phi, rng), r_phi};
}

// Server-side filter: everything that could be relevant somewhere inside the
// reported disk.
inline bool server_relevant(const Message& msg, const ReportedRegion& region, double r_i) {
  return distance(msg.origin, region.center) <= region.radius_km + r_i;
}

inline bool vehicle_relevant(const Message& msg, Vec2 true_pos, double r_i) {
  return distance(msg.origin, true_pos) <= r_i;
}

// Adaptation factors rho[phi][i], one row per privacy profile.
class RhoTable {
 public:
  RhoTable() = default;

  RhoTable(std::size_t privacy_levels, std::size_t impact_levels, double fill = 1.0)
      : cols_(impact_levels), values_(privacy_levels * impact_levels, fill) {}

  static RhoTable from_radii(const std::vector<double>& imprecision_radii_km,
                             const ImpactLevelTable& table) {
    RhoTable rho(imprecision_radii_km.size(), table.size());
    for (std::size_t phi = 0; phi < imprecision_radii_km.size(); ++phi)
      for (std::size_t i = 0; i < table.size(); ++i)
        rho.at(phi, i) = adaptation_factor(imprecision_radii_km[phi], table[i].radius_km);
    return rho;
  }

  static RhoTable from_profiles(const std::vector<PrivacyProfile>& profiles,
                                const ImpactLevelTable& table) {
    std::vector<double> radii;
    radii.reserve(profiles.size());
    for (const auto& p : profiles) radii.push_back(p.imprecision_radius_km);
    return from_radii(radii, table);
  }

  std::size_t rows() const { return cols_ == 0 ? 0 : values_.size() / cols_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t phi, std::size_t i) const { return values_[phi * cols_ + i]; }
  double& at(std::size_t phi, std::size_t i) { return values_[phi * cols_ + i]; }

  std::vector<double> row(std::size_t phi) const {
    return {values_.begin() + static_cast<std::ptrdiff_t>(phi * cols_),
            values_.begin() + static_cast<std::ptrdiff_t>((phi + 1) * cols_)};
  }

 private:
  std::size_t cols_{0};
  std::vector<double> values_;
};

}  // namespace fcdgame
