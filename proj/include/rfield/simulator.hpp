#pragma once

#include "rfield/planner.hpp"
#include "rfield/snapshot.hpp"
#include "rfield/world_map.hpp"

#include <chrono>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace rfield {

struct Material {
  Vec3 albedo = Vec3::Constant(0.5);
  double specular_strength = 0.0;   // 0 = Lambertian
  Vec3 specular_dir = Vec3::UnitZ();
  double specular_exponent = 4.0;
};

/// Synthetic ground-truth world: occupied voxels with per-voxel materials on
/// the same origin-anchored grid the map uses.
struct Scene {
  std::unordered_map<GridIndex, Material, GridIndexHash> voxels;
  Bounds bounds;
  Vec3 background = Vec3::Zero();
  double voxel_size = 0.05;

  bool occupied(const GridIndex& id) const { return voxels.contains(id); }
  /// Shaded color seen from a camera at `cam` for the voxel at `id`.
  Vec3 shade(const GridIndex& id, const Vec3& cam) const {
    const Material& m = voxels.at(id);
    Vec3 c = m.albedo;
    if (m.specular_strength > 0.0) {
      Vec3 to_cam = (cam - index_center(id, voxel_size)).normalized();
      double d = std::max(0.0, to_cam.dot(m.specular_dir));
      c += Vec3::Constant(m.specular_strength * std::pow(d, m.specular_exponent));
    }
    return c.cwiseMax(0.0).cwiseMin(1.0);
  }
};

namespace detail {

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic per-voxel albedo texture.
inline Vec3 procedural_albedo(const GridIndex& id, uint64_t seed) {
  uint64_t h = mix64(seed ^ mix64(static_cast<uint64_t>(static_cast<uint32_t>(id.x)) |
                                  (static_cast<uint64_t>(static_cast<uint32_t>(id.y)) << 21) |
                                  (static_cast<uint64_t>(static_cast<uint32_t>(id.z)) << 42)));
  auto chan = [&](int i) {
    return 0.15 + 0.8 * ((h >> (i * 16)) & 0xffff) / 65535.0;
  };
  return {chan(0), chan(1), chan(2)};
}

inline void fill_box(Scene& scene, const Vec3& lo, const Vec3& hi, uint64_t seed,
                     double specular_strength = 0.0, const Vec3& specular_dir = Vec3::UnitZ(),
                     double specular_exponent = 4.0) {
  GridIndex a = point_to_index(lo + Vec3::Constant(1e-9), scene.voxel_size);
  GridIndex b = point_to_index(hi - Vec3::Constant(1e-9), scene.voxel_size);
  for (int32_t z = a.z; z <= b.z; ++z)
    for (int32_t y = a.y; y <= b.y; ++y)
      for (int32_t x = a.x; x <= b.x; ++x) {
        GridIndex id{x, y, z};
        Material m;
        m.albedo = procedural_albedo(id, seed);
        m.specular_strength = specular_strength;
        m.specular_dir = specular_dir;
        m.specular_exponent = specular_exponent;
        scene.voxels[id] = m;
      }
}

inline void carve_box(Scene& scene, const Vec3& lo, const Vec3& hi) {
  GridIndex a = point_to_index(lo + Vec3::Constant(1e-9), scene.voxel_size);
  GridIndex b = point_to_index(hi - Vec3::Constant(1e-9), scene.voxel_size);
  for (int32_t z = a.z; z <= b.z; ++z)
    for (int32_t y = a.y; y <= b.y; ++y)
      for (int32_t x = a.x; x <= b.x; ++x) scene.voxels.erase(GridIndex{x, y, z});
}

/// Hollow shell (walls, floor, ceiling) of thickness `wall` around a box.
inline void add_shell(Scene& scene, const Vec3& lo, const Vec3& hi, double wall,
                      uint64_t seed) {
  fill_box(scene, lo, hi, seed);
  carve_box(scene, lo + Vec3::Constant(wall), hi - Vec3::Constant(wall));
}

}  // namespace detail

/// Deterministic scene presets. Walls are one occupancy cell (0.2 m) thick and
/// aligned to the coarse grid.
inline Scene build_scene(const std::string& preset, uint64_t seed = 0) {
  constexpr double wall = 0.2;
  Scene scene;
  if (preset == "box_room") {
    scene.bounds = {Vec3::Zero(), {4.0, 4.0, 2.4}};
    detail::add_shell(scene, scene.bounds.min, scene.bounds.max, wall, seed);
    detail::fill_box(scene, {1.0, 1.0, wall}, {1.4, 1.4, 1.4}, seed + 1);
    detail::fill_box(scene, {2.6, 2.6, wall}, {3.0, 3.0, 1.0}, seed + 2);
  } else if (preset == "two_rooms") {
    scene.bounds = {Vec3::Zero(), {8.0, 4.0, 2.4}};
    detail::add_shell(scene, scene.bounds.min, scene.bounds.max, wall, seed);
    // dividing wall with a doorway
    detail::fill_box(scene, {3.8, 0.0, 0.0}, {4.0, 4.0, 2.4}, seed + 3);
    detail::carve_box(scene, {3.8, 1.6, wall}, {4.0, 2.6, 2.0});
    detail::fill_box(scene, {1.2, 2.6, wall}, {1.6, 3.0, 1.2}, seed + 4);
    detail::fill_box(scene, {6.0, 1.0, wall}, {6.4, 1.4, 1.6}, seed + 5);
  } else if (preset == "specular_gallery") {
    scene.bounds = {Vec3::Zero(), {4.0, 4.0, 2.4}};
    detail::add_shell(scene, scene.bounds.min, scene.bounds.max, wall, seed);
    // alternate specular panels along the +y and -y walls
    std::mt19937_64 rng(seed ^ 0x5eedull);
    for (int panel = 0; panel < 5; ++panel) {
      double x0 = panel * 0.8;
      double x1 = x0 + 0.8;
      if (panel % 2 == 0) continue;  // keep even panels Lambertian
      Vec3 sdir_a = random_unit(rng);
      Vec3 sdir_b = random_unit(rng);
      detail::fill_box(scene, {x0, 0.0, wall}, {x1, wall, 2.2}, seed + 10 + panel, 0.6,
                       sdir_a, 3.0);
      detail::fill_box(scene, {x0, 4.0 - wall, wall}, {x1, 4.0, 2.2}, seed + 20 + panel,
                       0.6, sdir_b, 3.0);
    }
    detail::fill_box(scene, {1.8, 1.8, wall}, {2.2, 2.2, 1.4}, seed + 30, 0.7,
                     Vec3(0.0, 0.0, 1.0).normalized(), 2.0);
  } else {
    throw std::invalid_argument("build_scene: unknown preset '" + preset + "'");
  }
  return scene;
}

/// Camera-to-world pose looking along `direction` (camera z forward).
inline Eigen::Isometry3d make_pose(const Vec3& position, const Vec3& direction) {
  Vec3 z = direction.normalized();
  auto [e1, e2] = tangent_basis(z);
  Eigen::Matrix3d rot;
  rot.col(0) = e1;
  rot.col(1) = e2;
  rot.col(2) = z;
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.linear() = rot;
  pose.translation() = position;
  return pose;
}

struct RenderResult {
  Frame frame;
  std::vector<GridIndex> hit_voxel;  // per pixel; valid where hit[i] != 0
  std::vector<uint8_t> hit;
};

/// Ground-truth RGB-D sensor: per pixel, march to the first scene voxel.
/// Misses render the background with depth 0.
inline RenderResult render_rgbd(const Scene& scene, const Eigen::Isometry3d& pose,
                                const CameraIntrinsics& intrinsics, int width,
                                int height) {
  const Vec3 cam = pose.translation();
  if (scene.occupied(point_to_index(cam, scene.voxel_size))) {
    throw std::invalid_argument("render_rgbd: camera pose inside scene geometry");
  }
  RenderResult out;
  Frame& f = out.frame;
  f.pose = pose;
  f.width = width;
  f.height = height;
  f.intrinsics = intrinsics;
  f.rgb.assign(static_cast<size_t>(width) * height, scene.background);
  f.depth.assign(static_cast<size_t>(width) * height, 0.0);
  out.hit_voxel.assign(f.rgb.size(), GridIndex{});
  out.hit.assign(f.rgb.size(), 0);
  const double t_max = scene.bounds.extent().norm();
  const Eigen::Matrix3d rot = pose.rotation();
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      size_t px = f.at(u, v);
      Vec3 dir = rot * f.pixel_ray(u, v);
      traverse_grid(cam, dir, t_max, scene.voxel_size,
                    [&](const GridIndex& id, double t) {
                      if (!scene.occupied(id)) return true;
                      // nudge past the entry face, but never past the exit
                      // face, so backprojection lands inside the hit voxel
                      // even on grazing rays
                      double t_exit = t_max;
                      const int32_t* ic = &id.x;
                      for (int a = 0; a < 3; ++a) {
                        if (dir[a] > 0.0) {
                          t_exit = std::min(
                              t_exit, ((ic[a] + 1) * scene.voxel_size - cam[a]) / dir[a]);
                        } else if (dir[a] < 0.0) {
                          t_exit = std::min(
                              t_exit, (ic[a] * scene.voxel_size - cam[a]) / dir[a]);
                        }
                      }
                      // an edge-grazing contact has no usable interior point;
                      // let the ray continue to the next voxel
                      if (t_exit - t < 1e-9) return true;
                      f.depth[px] = t + std::min(1e-4, 0.5 * (t_exit - t));
                      f.rgb[px] = scene.shade(id, cam);
                      out.hit_voxel[px] = id;
                      out.hit[px] = 1;
                      return false;
                    });
    }
  }
  return out;
}

/// Map-based novel-view color prediction: per pixel, march the sparse
/// voxel-statistics map and return the hit voxel's streaming mean color.
/// Rays that hit no observed voxel return the background.
inline std::vector<Vec3> render_prediction(const WorldMap& map,
                                           const Eigen::Isometry3d& pose,
                                           const CameraIntrinsics& intrinsics,
                                           int width, int height,
                                           const Vec3& background) {
  std::vector<Vec3> img(static_cast<size_t>(width) * height, background);
  const Vec3 cam = pose.translation();
  const Eigen::Matrix3d rot = pose.rotation();
  const double t_max = map.bounds().extent().norm();
  Frame probe;  // reuse the pixel-ray helper
  probe.width = width;
  probe.height = height;
  probe.intrinsics = intrinsics;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      Vec3 dir = rot * probe.pixel_ray(u, v);
      traverse_grid(cam, dir, t_max, map.voxel_size(),
                    [&](const GridIndex& id, double) {
                      auto it = map.stats().find(id);
                      if (it == map.stats().end()) return true;
                      img[static_cast<size_t>(v) * width + u] =
                          it->second.mean.cwiseMax(0.0).cwiseMin(1.0);
                      return false;
                    });
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// correlation helpers

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline std::vector<double> fractional_ranks(const std::vector<double>& x) {
  size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double r = (i + j) / 2.0 + 1.0;  // average rank for ties
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(fractional_ranks(x), fractional_ranks(y));
}

// ---------------------------------------------------------------------------
// novel-view evaluation

struct TestPose {
  Vec3 position;
  Vec3 axis;
};

/// Grid-sampled free-space positions, each with six axis-aligned optical axes.
inline std::vector<TestPose> make_test_grid(const Scene& scene, const Vec3& spacing,
                                            double margin = 0.4) {
  std::vector<TestPose> poses;
  const Vec3 axes[6] = {Vec3::UnitX(),  -Vec3::UnitX(), Vec3::UnitY(),
                        -Vec3::UnitY(), Vec3::UnitZ(),  -Vec3::UnitZ()};
  for (double x = scene.bounds.min.x() + margin; x <= scene.bounds.max.x() - margin;
       x += spacing.x()) {
    for (double y = scene.bounds.min.y() + margin; y <= scene.bounds.max.y() - margin;
         y += spacing.y()) {
      for (double z = scene.bounds.min.z() + margin; z <= scene.bounds.max.z() - margin;
           z += spacing.z()) {
        Vec3 p{x, y, z};
        // clearance check: no scene voxel within ~0.15 m
        bool free = true;
        GridIndex c = point_to_index(p, scene.voxel_size);
        for (int dz = -3; dz <= 3 && free; ++dz)
          for (int dy = -3; dy <= 3 && free; ++dy)
            for (int dx = -3; dx <= 3 && free; ++dx)
              if (scene.occupied({c.x + dx, c.y + dy, c.z + dz})) free = false;
        if (!free) continue;
        for (const Vec3& a : axes) poses.push_back({p, a});
      }
    }
  }
  return poses;
}

struct ViewEvaluation {
  double mean_r = 0.0;
  double mean_deficit = 1.0;  // mean(1 - R) over visible voxels
  double mse = 0.0;
  double psnr = 0.0;
};

struct EvalResult {
  std::vector<ViewEvaluation> views;
  double spearman_deficit_mse = 0.0;
  double pearson_deficit_mse = 0.0;
};

/// Renderability-vs-error experiment: for each test view, compare the
/// map-based color prediction against the ground-truth render, and the mean
/// renderability of the truly visible surface voxels. Reports the correlation
/// of mean(1-R) with image MSE across views.
inline EvalResult eval_novel_views(const Scene& scene, const WorldMap& map,
                                   const std::vector<TestPose>& test_poses,
                                   const CameraIntrinsics& intrinsics, int width,
                                   int height) {
  if (test_poses.empty()) {
    throw std::invalid_argument("eval_novel_views: empty test pose set");
  }
  EvalResult result;
  std::vector<double> deficits, mses;
  for (const TestPose& tp : test_poses) {
    Eigen::Isometry3d pose = make_pose(tp.position, tp.axis);
    RenderResult gt = render_rgbd(scene, pose, intrinsics, width, height);
    std::vector<Vec3> pred =
        render_prediction(map, pose, intrinsics, width, height, scene.background);
    double mse = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
      mse += (pred[i] - gt.frame.rgb[i]).squaredNorm() / 3.0;
    }
    mse /= static_cast<double>(pred.size());
    std::unordered_set<GridIndex, GridIndexHash> seen;
    std::vector<GridIndex> visible;
    for (size_t i = 0; i < gt.hit.size(); ++i) {
      if (gt.hit[i] && seen.insert(gt.hit_voxel[i]).second) {
        visible.push_back(gt.hit_voxel[i]);
      }
    }
    ViewEvaluation ev;
    ev.mse = mse;
    ev.psnr = mse > 0.0 ? -10.0 * std::log10(mse) : 99.0;
    if (!visible.empty()) {
      auto rs = batch_renderability(map.stats(), map.lattice(), visible, tp.position,
                                    map.voxel_size());
      ev.mean_r = std::accumulate(rs.begin(), rs.end(), 0.0) / rs.size();
    }
    ev.mean_deficit = 1.0 - ev.mean_r;
    result.views.push_back(ev);
    deficits.push_back(ev.mean_deficit);
    mses.push_back(ev.mse);
  }
  result.spearman_deficit_mse = spearman(deficits, mses);
  result.pearson_deficit_mse = pearson(deficits, mses);
  return result;
}

// ---------------------------------------------------------------------------
// episode execution

struct EpisodeConfig {
  int max_views = 20;
  double max_seconds = 0.0;  // 0 = no wall-clock budget
  int render_width = 128;
  int render_height = 128;
  double fov = deg2rad(60.0);  // per-axis full field of view
  Vec3 start_position{1.0, 1.0, 1.0};
  Vec3 start_direction = Vec3::UnitX();
  int capture_every_cells = 0;  // extra captures along the travel path, 0 = off
  enum class Policy { Renderability, Random };
  Policy policy = Policy::Renderability;
  uint64_t seed = 0;
  double voxel_size = 0.05;
  double cell_size = 0.20;
  double max_range = 10.0;
};

struct StepLog {
  int step = 0;
  NbvDecision decision;
  double plan_seconds = 0.0;
};

struct EpisodeResult {
  std::vector<TestPose> trajectory;  // position + optical axis per captured frame
  int frames_captured = 0;
  std::vector<StepLog> steps;
  bool stalled = false;
  double coverage_fraction = 0.0;   // observed scene voxels / scene voxels
  double mean_surface_r = 0.0;      // mean R over scene voxels, final pose query
  double mean_plan_seconds = 0.0;
};

/// Run one online episode: render, ingest, select the next view, teleport
/// along the free-cell path, repeat until the view budget. All randomness is
/// seeded.
inline EpisodeResult run_episode(const Scene& scene, const Lattice& voxel_lattice,
                                 const Lattice* pano_lattice, PlannerConfig planner_cfg,
                                 const EpisodeConfig& cfg, WorldMap* map_out = nullptr) {
  WorldMap map(scene.bounds, cfg.voxel_size, cfg.cell_size, voxel_lattice,
               cfg.max_range);
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 policy_rng(detail::mix64(cfg.seed ^ 0xabcdull));
  CameraIntrinsics intr =
      CameraIntrinsics::from_fov(cfg.render_width, cfg.render_height, cfg.fov, cfg.fov);
  EpisodeResult result;
  Vec3 pos = cfg.start_position;
  Vec3 dir = cfg.start_direction.normalized();
  auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
        .count();
  };
  auto capture = [&](const Vec3& p, const Vec3& d) {
    RenderResult r = render_rgbd(scene, make_pose(p, d), intr, cfg.render_width,
                                 cfg.render_height);
    map.ingest_frame(r.frame);
    result.trajectory.push_back({p, d});
    ++result.frames_captured;
  };
  capture(pos, dir);
  int step = 0;
  while (result.frames_captured < cfg.max_views &&
         (cfg.max_seconds <= 0.0 || elapsed() < cfg.max_seconds)) {
    StepLog log;
    log.step = step++;
    auto t0 = std::chrono::steady_clock::now();
    try {
      if (cfg.policy == EpisodeConfig::Policy::Random) {
        auto positions = sample_candidates(map, pos, planner_cfg, policy_rng);
        std::vector<Vec3> reachable;
        for (const Vec3& p : positions) {
          if (map.path_cost(pos, p)) reachable.push_back(p);
        }
        if (reachable.empty()) throw planner_stall_error("no reachable candidate");
        std::uniform_int_distribution<size_t> pick(0, reachable.size() - 1);
        log.decision.chosen.position = reachable[pick(policy_rng)];
        log.decision.chosen.direction = random_unit(policy_rng);
        log.decision.chosen.reachable = true;
      } else {
        log.decision = select_nbv(map, pano_lattice, pos, planner_cfg, rng);
      }
    } catch (const planner_stall_error&) {
      result.stalled = true;
      break;
    }
    log.plan_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.steps.push_back(log);
    const Vec3 goal = log.decision.chosen.position;
    const Vec3 goal_dir = log.decision.chosen.direction;
    if (cfg.capture_every_cells > 0) {
      auto path = map.find_path(pos, goal);
      if (path) {
        for (size_t i = cfg.capture_every_cells; i + 1 < path->size();
             i += cfg.capture_every_cells) {
          if (result.frames_captured + 1 >= cfg.max_views) break;
          capture(index_center((*path)[i], cfg.cell_size), goal_dir);
        }
      }
    }
    pos = goal;
    dir = goal_dir;
    capture(pos, dir);
  }
  // final-pose surface renderability and coverage metrics
  if (!scene.voxels.empty()) {
    size_t observed = 0;
    double sum_r = 0.0;
    for (const auto& [id, _] : scene.voxels) {
      auto it = map.stats().find(id);
      if (it != map.stats().end() && it->second.n > 0) ++observed;
      Vec3 to_c = index_center(id, cfg.voxel_size) - pos;
      double depth = to_c.norm();
      if (it != map.stats().end() && depth > 0.0) {
        sum_r += renderability(it->second, voxel_lattice, to_c / depth, depth).r;
      }
    }
    result.coverage_fraction = static_cast<double>(observed) / scene.voxels.size();
    result.mean_surface_r = sum_r / static_cast<double>(scene.voxels.size());
  }
  if (!result.steps.empty()) {
    double s = 0.0;
    for (const StepLog& l : result.steps) s += l.plan_seconds;
    result.mean_plan_seconds = s / result.steps.size();
  }
  if (map_out) *map_out = std::move(map);
  return result;
}

}  // namespace rfield
