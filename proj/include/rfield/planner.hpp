#pragma once

#include "rfield/renderability.hpp"
#include "rfield/world_map.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

namespace rfield {

/// Thrown when a pose sees neither unexplored cells nor under-rendered voxels.
struct saturated_pose_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when every sampled candidate is unreachable.
struct planner_stall_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlannerConfig {
  double lambda1 = 1.0;          // exploration weight
  double lambda2 = 0.1;          // path-cost weight, per meter
  int candidate_count = 20;
  double candidate_radius = 2.0;  // meters
  enum class Mode { Pinhole, Panoramic };
  Mode mode = Mode::Pinhole;
  /// Cone half-angle for FoV bin sets and point-set prefiltering; default is
  /// the circumscribed cone of a 60x60 degree frustum.
  double fov_half_angle = deg2rad(39.2);
  double frustum_half_angle = deg2rad(30.0);
  int probe_res = 128;
  int dirs_per_candidate = 8;  // pinhole mode direction samples per position
  double max_range = 10.0;
  uint64_t rng_seed = 0;
};

struct CandidateScore {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double u_g = 0.0;     // |G|, visible unexplored cells
  double u_r = 0.0;     // sum over V of (1 - R)
  double u_path = 0.0;  // meters
  double u_view = 0.0;  // lambda1*u_g + u_r - lambda2*u_path
  bool reachable = false;
};

inline double combine_utility(const PlannerConfig& cfg, double u_g, double u_r,
                              double u_path) {
  return cfg.lambda1 * u_g + u_r - cfg.lambda2 * u_path;
}

inline ViewSpec candidate_view(const PlannerConfig& cfg, const Lattice* pano,
                               const Vec3& direction) {
  if (cfg.mode == PlannerConfig::Mode::Panoramic) return ViewSpec::panoramic(*pano);
  return ViewSpec::pinhole(direction, cfg.frustum_half_angle, cfg.probe_res);
}

/// Score one candidate pose: exploration gain from visible unknown cells,
/// rendering deficit from visible voxels, travel cost from the agent's
/// current position. Unreachable candidates come back with reachable=false
/// and are excluded from selection.
inline CandidateScore score_candidate(const WorldMap& map, const Lattice* pano_lattice,
                                      const Vec3& current_position,
                                      const Vec3& candidate_position,
                                      const Vec3& direction, const PlannerConfig& cfg) {
  CandidateScore sc;
  sc.position = candidate_position;
  sc.direction = direction;
  auto cost = map.path_cost(current_position, candidate_position);
  if (!cost) return sc;
  sc.reachable = true;
  sc.u_path = *cost;
  ViewSpec view = candidate_view(cfg, pano_lattice, direction);
  sc.u_g = static_cast<double>(
      map.visible_unknown_cells(candidate_position, view, cfg.max_range).size());
  auto visible = map.visible_voxels(candidate_position, view, cfg.max_range);
  for (const VisibleVoxel& v : visible) {
    sc.u_r += 1.0 - renderability(map.stats().at(v.id), map.lattice(), v.dir, v.depth).r;
  }
  sc.u_view = combine_utility(cfg, sc.u_g, sc.u_r, sc.u_path);
  return sc;
}

struct PanoDirection {
  int bin = 0;
  Vec3 axis = Vec3::UnitX();
  std::vector<double> scores;  // aggregated S(k) per bin
};

/// Panoramic optical-axis selection: bin the centers of visible unknown cells
/// (weight lambda1) and visible voxels (weight 1-R) by direction, aggregate
/// per-bin scores over the precomputed FoV sets, and take the best bin.
/// Ties break to the lowest bin index.
inline PanoDirection panoramic_direction(const WorldMap& map, const Lattice& pano_lattice,
                                         const Vec3& position, const PlannerConfig& cfg) {
  if (pano_lattice.fov_sets.empty()) {
    throw std::invalid_argument("panoramic_direction: lattice has no FoV sets");
  }
  ViewSpec view = ViewSpec::panoramic(pano_lattice);
  auto unknown = map.visible_unknown_cells(position, view, cfg.max_range);
  auto visible = map.visible_voxels(position, view, cfg.max_range);
  if (unknown.empty() && visible.empty()) {
    throw saturated_pose_error("panoramic_direction: no utility visible from pose");
  }
  std::vector<double> base(pano_lattice.n_bins, 0.0);
  double cell = map.occupancy().cell_size();
  for (const GridIndex& c : unknown) {
    Vec3 d = index_center(c, cell) - position;
    double len = d.norm();
    if (len == 0.0) continue;
    base[pano_lattice.nearest_bin(d / len)] += cfg.lambda1;
  }
  for (const VisibleVoxel& v : visible) {
    double r = renderability(map.stats().at(v.id), map.lattice(), v.dir, v.depth).r;
    base[pano_lattice.nearest_bin(v.dir)] += 1.0 - r;
  }
  PanoDirection out;
  out.scores.assign(pano_lattice.n_bins, 0.0);
  for (int k = 0; k < pano_lattice.n_bins; ++k) {
    double s = 0.0;
    for (int j : pano_lattice.fov_sets[k]) s += base[j];
    out.scores[k] = s;
  }
  out.bin = 0;
  for (int k = 1; k < pano_lattice.n_bins; ++k) {
    if (out.scores[k] > out.scores[out.bin]) out.bin = k;
  }
  out.axis = pano_lattice.centers[out.bin];
  return out;
}

/// Candidate positions drawn uniformly from free cells near the current
/// position. Falls back to the global free-cell set when no free cell lies
/// within the radius. Deterministic under the rng state.
inline std::vector<Vec3> sample_candidates(const WorldMap& map, const Vec3& current,
                                           const PlannerConfig& cfg,
                                           std::mt19937_64& rng) {
  std::vector<Vec3> local, global;
  double cell = map.occupancy().cell_size();
  map.occupancy().for_each_cell([&](const GridIndex& c, CellState s) {
    if (s != CellState::Free) return;
    Vec3 center = index_center(c, cell);
    global.push_back(center);
    if ((center - current).norm() <= cfg.candidate_radius) local.push_back(center);
  });
  const std::vector<Vec3>& pool = local.empty() ? global : local;
  if (pool.empty()) throw planner_stall_error("sample_candidates: no free cells");
  std::vector<Vec3> out;
  out.reserve(cfg.candidate_count);
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  for (int i = 0; i < cfg.candidate_count; ++i) out.push_back(pool[pick(rng)]);
  return out;
}

struct NbvDecision {
  CandidateScore chosen;
  std::vector<CandidateScore> candidates;
};

/// Next-best-view selection. Pinhole mode scores sampled (position,
/// direction) pairs by the combined utility and returns the argmax; panoramic
/// mode scores positions omnidirectionally, then picks the optical axis for
/// the winning position via panoramic_direction.
inline NbvDecision select_nbv(const WorldMap& map, const Lattice* pano_lattice,
                              const Vec3& current_position, const PlannerConfig& cfg,
                              std::mt19937_64& rng) {
  NbvDecision out;
  auto positions = sample_candidates(map, current_position, cfg, rng);
  if (cfg.mode == PlannerConfig::Mode::Pinhole) {
    for (const Vec3& pos : positions) {
      for (int i = 0; i < cfg.dirs_per_candidate; ++i) {
        Vec3 dir = random_unit(rng);
        out.candidates.push_back(
            score_candidate(map, pano_lattice, current_position, pos, dir, cfg));
      }
    }
  } else {
    for (const Vec3& pos : positions) {
      out.candidates.push_back(score_candidate(map, pano_lattice, current_position,
                                               pos, Vec3::UnitX(), cfg));
    }
  }
  int best = -1;
  for (size_t i = 0; i < out.candidates.size(); ++i) {
    const CandidateScore& c = out.candidates[i];
    if (!c.reachable) continue;
    if (best < 0 || c.u_view > out.candidates[best].u_view) best = static_cast<int>(i);
  }
  if (best < 0) throw planner_stall_error("select_nbv: all candidates unreachable");
  out.chosen = out.candidates[best];
  if (cfg.mode == PlannerConfig::Mode::Panoramic) {
    try {
      out.chosen.direction =
          panoramic_direction(map, *pano_lattice, out.chosen.position, cfg).axis;
    } catch (const saturated_pose_error&) {
      // saturated winning pose: keep a deterministic default axis
    }
  }
  return out;
}

}  // namespace rfield
