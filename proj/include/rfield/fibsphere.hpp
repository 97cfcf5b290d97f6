#pragma once

#include "rfield/core.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfield {

/// Quasi-uniform Fibonacci discretization of the unit sphere. Immutable after
/// construction; bin indices are 0-based and stable across runs.
struct Lattice {
  int n_bins = 0;
  std::vector<Vec3> centers;
  /// Empirical covering radius (radians): max angle from any direction to its
  /// nearest bin center, measured over 10k quasi-random probes at build time.
  double bin_radius = 0.0;
  /// Optional per-bin FoV neighbor sets, see build_fov_sets().
  std::vector<std::vector<int>> fov_sets;
  /// Half-angle the fov_sets were built with (0 when absent).
  double fov_half_angle = 0.0;

  /// True when a visited-bin mask fits a single 64-bit word.
  bool compact_mask() const { return n_bins <= 64; }

  /// Index of the bin center maximizing the dot product with `dir`.
  /// Ties break to the lowest index. `dir` must be unit within 1e-6.
  int nearest_bin(const Vec3& dir) const {
    if (std::abs(dir.norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("nearest_bin: direction is not unit length");
    }
    int best = 0;
    double best_dot = centers[0].dot(dir);
    for (int k = 1; k < n_bins; ++k) {
      double d = centers[k].dot(dir);
      if (d > best_dot) {
        best_dot = d;
        best = k;
      }
    }
    return best;
  }
};

namespace detail {

inline Vec3 fib_point(int k, int n) {
  constexpr double golden = 1.6180339887498948482;  // (1+sqrt(5))/2
  double z = 1.0 - 2.0 * (k + 0.5) / n;
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  double phi = 2.0 * kPi * k / golden;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline double measure_bin_radius(const Lattice& lat) {
  // probe with a denser, offset Fibonacci spiral: deterministic quasi-random
  const int probes = 10007;
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    Vec3 p = fib_point(i, probes);
    double best_dot = -1.0;
    for (const Vec3& c : lat.centers) best_dot = std::max(best_dot, c.dot(p));
    worst = std::max(worst, std::acos(std::clamp(best_dot, -1.0, 1.0)));
  }
  // small pad so the estimate upper-bounds the true covering radius
  return worst * 1.02;
}

}  // namespace detail

inline Lattice build_lattice(int n_bins) {
  if (n_bins < 4) {
    throw std::invalid_argument("build_lattice: need at least 4 bins, got " +
                                std::to_string(n_bins));
  }
  Lattice lat;
  lat.n_bins = n_bins;
  lat.centers.reserve(n_bins);
  for (int k = 0; k < n_bins; ++k) lat.centers.push_back(detail::fib_point(k, n_bins));
  lat.bin_radius = detail::measure_bin_radius(lat);
  if (n_bins == 64 && lat.bin_radius > deg2rad(25.0)) {
    throw std::logic_error("build_lattice: 64-bin covering radius exceeds 25 deg");
  }
  return lat;
}

/// Number of bins implied by a target central angle: one spherical cap of
/// aperture theta_res per bin, N = ceil(4*pi / cap_area).
inline int bins_for_resolution(double theta_res) {
  if (!(theta_res > 0.0) || !(theta_res < kPi)) {
    throw std::invalid_argument("bins_for_resolution: theta_res must be in (0, pi)");
  }
  double cap_area = 2.0 * kPi * (1.0 - std::cos(theta_res / 2.0));
  return static_cast<int>(std::ceil(4.0 * kPi / cap_area));
}

inline Lattice build_lattice_from_resolution(double theta_res) {
  return build_lattice(bins_for_resolution(theta_res));
}

/// Precompute N(k) = { j : <q_j, q_k> >= cos(half_angle) } for every bin.
/// k is always a member of its own set.
inline void build_fov_sets(Lattice& lat, double half_angle) {
  if (!(half_angle > 0.0) || half_angle > kPi / 2.0) {
    throw std::invalid_argument("build_fov_sets: half_angle must be in (0, pi/2]");
  }
  const double thresh = std::cos(half_angle);
  lat.fov_sets.assign(lat.n_bins, {});
  for (int k = 0; k < lat.n_bins; ++k) {
    for (int j = 0; j < lat.n_bins; ++j) {
      if (lat.centers[j].dot(lat.centers[k]) >= thresh) lat.fov_sets[k].push_back(j);
    }
  }
  lat.fov_half_angle = half_angle;
}

}  // namespace rfield
