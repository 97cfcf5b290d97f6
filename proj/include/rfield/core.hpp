#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <utility>

namespace rfield {

using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

/// Integer index of a cubic grid cell, anchored at the world origin.
struct GridIndex {
  int32_t x = 0;
  int32_t y = 0;
  int32_t z = 0;

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
  friend auto operator<=>(const GridIndex&, const GridIndex&) = default;
};

struct GridIndexHash {
  size_t operator()(const GridIndex& i) const noexcept {
    // large-prime spatial hash, standard for sparse voxel maps
    uint64_t h = static_cast<uint64_t>(static_cast<uint32_t>(i.x)) * 73856093ull;
    h ^= static_cast<uint64_t>(static_cast<uint32_t>(i.y)) * 19349669ull;
    h ^= static_cast<uint64_t>(static_cast<uint32_t>(i.z)) * 83492791ull;
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 32;
    return static_cast<size_t>(h);
  }
};

inline GridIndex point_to_index(const Vec3& p, double cell_size) {
  return {static_cast<int32_t>(std::floor(p.x() / cell_size)),
          static_cast<int32_t>(std::floor(p.y() / cell_size)),
          static_cast<int32_t>(std::floor(p.z() / cell_size))};
}

inline Vec3 index_center(const GridIndex& i, double cell_size) {
  return {(i.x + 0.5) * cell_size, (i.y + 0.5) * cell_size, (i.z + 0.5) * cell_size};
}

struct Bounds {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() < max.array()).all();
  }
  Vec3 extent() const { return max - min; }
};

/// Deterministic orthonormal tangent basis at a unit direction: e1, e2 span
/// the plane orthogonal to q, with e2 = q x e1. The seed axis is the
/// coordinate axis least aligned with q.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& q) {
  int axis = 0;
  double best = std::abs(q.x());
  if (std::abs(q.y()) < best) { axis = 1; best = std::abs(q.y()); }
  if (std::abs(q.z()) < best) { axis = 2; }
  Vec3 a = Vec3::Zero();
  a[axis] = 1.0;
  Vec3 e1 = (a - a.dot(q) * q).normalized();
  Vec3 e2 = q.cross(e1);
  return {e1, e2};
}

/// Uniform direction on the unit sphere.
inline Vec3 random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uz(-1.0, 1.0);
  std::uniform_real_distribution<double> uphi(0.0, 2.0 * kPi);
  double z = uz(rng);
  double phi = uphi(rng);
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

/// Amanatides-Woo traversal of a uniform grid anchored at the origin.
/// Visits every cell the segment [origin, origin + t_max*dir) passes through,
/// each exactly once, in order, with the entry parameter t. The visitor
/// returns false to stop early. `dir` need not be unit length; t is in units
/// of |dir|.
template <class Visit>
inline void traverse_grid(const Vec3& origin, const Vec3& dir, double t_max,
                          double cell_size, Visit&& visit) {
  GridIndex idx = point_to_index(origin, cell_size);
  const double inf = std::numeric_limits<double>::infinity();
  int32_t step[3];
  double t_next[3];
  double t_delta[3];
  for (int a = 0; a < 3; ++a) {
    double d = dir[a];
    double o = origin[a];
    int32_t i = (&idx.x)[a];
    if (d > 0.0) {
      step[a] = 1;
      t_next[a] = ((i + 1) * cell_size - o) / d;
      t_delta[a] = cell_size / d;
    } else if (d < 0.0) {
      step[a] = -1;
      t_next[a] = (i * cell_size - o) / d;
      t_delta[a] = -cell_size / d;
    } else {
      step[a] = 0;
      t_next[a] = inf;
      t_delta[a] = inf;
    }
  }
  double t = 0.0;
  while (t < t_max) {
    if (!visit(idx, t)) return;
    int a = 0;
    if (t_next[1] < t_next[a]) a = 1;
    if (t_next[2] < t_next[a]) a = 2;
    t = t_next[a];
    t_next[a] += t_delta[a];
    (&idx.x)[a] += step[a];
  }
}

}  // namespace rfield
