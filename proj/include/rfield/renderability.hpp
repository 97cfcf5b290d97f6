#pragma once

#include "rfield/core.hpp"
#include "rfield/fibsphere.hpp"
#include "rfield/voxel_stats.hpp"

#include <span>
#include <vector>

namespace rfield {

struct BiasResult {
  double cos_theta = 0.0;  // in [0,1]
  int kappa = 2;           // 1 = interpolation, 2 = extrapolation
  double b = 0.0;          // cos_theta ^ kappa
};

struct RenderabilityScore {
  double b = 0.0;
  double epsilon = 1.0;
  double gamma = 0.0;
  double r = 0.0;
};

/// Extrapolation test: project the visited directions onto the tangent plane
/// at the query direction (dropping directions behind the tangent hemisphere),
/// inflate their axis-aligned bounding box by `margin` on every side, and
/// check whether the query's own projection (the origin) falls inside.
/// Returns 1 (interpolation) when it does, 2 (extrapolation) otherwise.
inline int classify_extrapolation(std::span<const Vec3> visited_dirs,
                                  const Vec3& query_dir, double margin) {
  auto [e1, e2] = tangent_basis(query_dir);
  double lo_u = 0.0, hi_u = 0.0, lo_v = 0.0, hi_v = 0.0;
  bool any = false;
  for (const Vec3& v : visited_dirs) {
    if (v.dot(query_dir) <= 0.0) continue;
    double u = v.dot(e1);
    double w = v.dot(e2);
    if (!any) {
      lo_u = hi_u = u;
      lo_v = hi_v = w;
      any = true;
    } else {
      lo_u = std::min(lo_u, u);
      hi_u = std::max(hi_u, u);
      lo_v = std::min(lo_v, w);
      hi_v = std::max(hi_v, w);
    }
  }
  if (!any) return 2;
  bool inside = lo_u - margin <= 0.0 && 0.0 <= hi_u + margin &&
                lo_v - margin <= 0.0 && 0.0 <= hi_v + margin;
  return inside ? 1 : 2;
}

/// Directional-support factor of one primitive at a query direction, computed
/// from the visited-bin mask. The bin centers stand in for the raw historical
/// directions; their angular error is bounded by the lattice covering radius,
/// which also sets the bounding-box inflation margin.
inline BiasResult bias(const VoxelStats& stats, const Lattice& lattice,
                       const Vec3& query_dir) {
  if (stats.mask.empty()) return {0.0, 2, 0.0};
  double best = -1.0;
  std::vector<Vec3> visited;
  visited.reserve(static_cast<size_t>(stats.mask.count()));
  stats.mask.for_each_set([&](int k) {
    const Vec3& q = lattice.centers[k];
    visited.push_back(q);
    // for unit vectors q.dot(d) == 1 - |q - d|^2 / 2, but this form is exact
    // at the saturation point: querying a visited bin center gives cos = 1
    best = std::max(best, 1.0 - 0.5 * (q - query_dir).squaredNorm());
  });
  BiasResult out;
  out.cos_theta = std::clamp(best, 0.0, 1.0);
  out.kappa = classify_extrapolation(visited, query_dir,
                                     std::sin(lattice.bin_radius / 2.0));
  out.b = out.kappa == 1 ? out.cos_theta : out.cos_theta * out.cos_theta;
  return out;
}

/// Appearance-stability factor: delta^(kappa * (1 - b)), with 0^0 = 1.
inline double epsilon(double delta, int kappa, double b) {
  double expo = kappa * (1.0 - b);
  if (expo == 0.0) return 1.0;
  return std::pow(delta, expo);
}

/// Resolution factor: min(1, rho_max/rho_query)^(1 - delta*b), with 0^0 = 1.
/// An unobserved primitive (rho_max = 0) gets the worst case, 0.
inline double resolution_gain(const VoxelStats& stats, double query_depth,
                              double delta, double b) {
  if (stats.rho_max == 0.0) return 0.0;
  double ratio = std::min(1.0, stats.rho_max * query_depth);
  double expo = 1.0 - delta * b;
  if (expo == 0.0 || ratio == 1.0) return 1.0;
  return std::pow(ratio, expo);
}

/// Closed-form renderability of one primitive at a query viewpoint:
/// R = b * epsilon * gamma.
inline RenderabilityScore renderability(const VoxelStats& stats, const Lattice& lattice,
                                        const Vec3& query_dir, double query_depth) {
  RenderabilityScore out;
  BiasResult br = bias(stats, lattice, query_dir);
  double d = stats.delta();
  out.b = br.b;
  out.epsilon = epsilon(d, br.kappa, br.b);
  out.gamma = resolution_gain(stats, query_depth, d, br.b);
  out.r = out.b * out.epsilon * out.gamma;
  return out;
}

/// Score a set of voxels from one camera position. Per voxel the query ray is
/// position -> voxel center. Voxels absent from the map score 0 (unknown
/// primitive). Results equal looped single queries exactly.
inline std::vector<double> batch_renderability(const StatsMap& stats,
                                               const Lattice& lattice,
                                               std::span<const GridIndex> voxel_ids,
                                               const Vec3& camera_position,
                                               double voxel_size) {
  std::vector<double> out;
  out.reserve(voxel_ids.size());
  for (const GridIndex& id : voxel_ids) {
    auto it = stats.find(id);
    if (it == stats.end()) {
      out.push_back(0.0);
      continue;
    }
    Vec3 to_voxel = index_center(id, voxel_size) - camera_position;
    double depth = to_voxel.norm();
    out.push_back(renderability(it->second, lattice, to_voxel / depth, depth).r);
  }
  return out;
}

}  // namespace rfield
