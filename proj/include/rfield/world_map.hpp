#pragma once

#include "rfield/core.hpp"
#include "rfield/fibsphere.hpp"
#include "rfield/renderability.hpp"
#include "rfield/voxel_stats.hpp"

#include <deque>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rfield {

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;

  bool finite() const {
    return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) &&
           std::isfinite(cy) && fx > 0.0 && fy > 0.0;
  }
  /// Symmetric pinhole with the given per-axis full field of view.
  static CameraIntrinsics from_fov(int width, int height, double fov_x, double fov_y) {
    CameraIntrinsics k;
    k.fx = (width / 2.0) / std::tan(fov_x / 2.0);
    k.fy = (height / 2.0) / std::tan(fov_y / 2.0);
    k.cx = width / 2.0;
    k.cy = height / 2.0;
    return k;
  }
};

/// One posed RGB-D observation. Depth is Euclidean range along the pixel ray;
/// 0 or non-finite means no return.
struct Frame {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();  // camera-to-world
  int width = 0, height = 0;
  std::vector<Vec3> rgb;
  std::vector<double> depth;
  CameraIntrinsics intrinsics;

  size_t at(int u, int v) const { return static_cast<size_t>(v) * width + u; }
  /// Unit ray direction through pixel center (u,v) in camera coordinates
  /// (z forward).
  Vec3 pixel_ray(int u, int v) const {
    Vec3 d((u + 0.5 - intrinsics.cx) / intrinsics.fx,
           (v + 0.5 - intrinsics.cy) / intrinsics.fy, 1.0);
    return d.normalized();
  }
};

enum class CellState : uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

/// Dense coarse grid over a fixed world extent with unknown/free/occupied
/// states. Cells are indexed on the same origin-anchored lattice as voxels.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Bounds& bounds, double cell_size)
      : bounds_(bounds), cell_size_(cell_size) {
    lo_ = point_to_index(bounds.min + Vec3::Constant(1e-9), cell_size);
    GridIndex hi = point_to_index(bounds.max - Vec3::Constant(1e-9), cell_size);
    dims_[0] = hi.x - lo_.x + 1;
    dims_[1] = hi.y - lo_.y + 1;
    dims_[2] = hi.z - lo_.z + 1;
    cells_.assign(static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2],
                  CellState::Unknown);
  }

  double cell_size() const { return cell_size_; }
  const Bounds& bounds() const { return bounds_; }
  Eigen::Vector3i dims() const { return {dims_[0], dims_[1], dims_[2]}; }
  size_t cell_count() const { return cells_.size(); }

  bool in_grid(const GridIndex& c) const {
    return c.x >= lo_.x && c.y >= lo_.y && c.z >= lo_.z && c.x < lo_.x + dims_[0] &&
           c.y < lo_.y + dims_[1] && c.z < lo_.z + dims_[2];
  }
  CellState state(const GridIndex& c) const { return cells_[flat(c)]; }
  CellState state_at(const Vec3& p) const {
    GridIndex c = point_to_index(p, cell_size_);
    return in_grid(c) ? state(c) : CellState::Unknown;
  }
  GridIndex cell_of(const Vec3& p) const { return point_to_index(p, cell_size_); }

  void mark_occupied(const GridIndex& c) { cells_[flat(c)] = CellState::Occupied; }
  /// Free-space carving never demotes an occupied cell.
  bool mark_free(const GridIndex& c) {
    CellState& s = cells_[flat(c)];
    if (s == CellState::Occupied) return false;
    bool changed = s == CellState::Unknown;
    s = CellState::Free;
    return changed;
  }

  template <class Fn>
  void for_each_cell(Fn&& fn) const {
    for (int z = 0; z < dims_[2]; ++z)
      for (int y = 0; y < dims_[1]; ++y)
        for (int x = 0; x < dims_[0]; ++x) {
          GridIndex c{lo_.x + x, lo_.y + y, lo_.z + z};
          fn(c, state(c));
        }
  }

  const std::vector<CellState>& raw() const { return cells_; }
  std::vector<CellState>& raw() { return cells_; }
  GridIndex origin_cell() const { return lo_; }

 private:
  size_t flat(const GridIndex& c) const {
    return (static_cast<size_t>(c.z - lo_.z) * dims_[1] + (c.y - lo_.y)) * dims_[0] +
           (c.x - lo_.x);
  }

  Bounds bounds_;
  double cell_size_ = 0.0;
  GridIndex lo_{};
  int dims_[3] = {0, 0, 0};
  std::vector<CellState> cells_;
};

struct IngestReport {
  size_t voxels_touched = 0;   // distinct stats voxels updated
  size_t updates_applied = 0;  // one per valid-depth pixel
  size_t cells_carved = 0;     // occupancy cells newly marked free
  size_t clamped_pixels = 0;   // RGB samples clamped into [0,1]
};

struct ViewSpec {
  enum class Mode { Panoramic, Pinhole };
  Mode mode = Mode::Panoramic;
  const Lattice* pano_lattice = nullptr;  // panoramic mode: one ray per bin
  Vec3 axis = Vec3::UnitX();              // pinhole mode: optical axis
  double frustum_half_angle = deg2rad(30.0);
  int probe_res = 128;  // pinhole probe raster, probe_res x probe_res rays

  static ViewSpec panoramic(const Lattice& lat) {
    ViewSpec v;
    v.mode = Mode::Panoramic;
    v.pano_lattice = &lat;
    return v;
  }
  static ViewSpec pinhole(const Vec3& axis, double half_angle, int probe_res = 128) {
    ViewSpec v;
    v.mode = Mode::Pinhole;
    v.axis = axis.normalized();
    v.frustum_half_angle = half_angle;
    v.probe_res = probe_res;
    return v;
  }
};

struct VisibleVoxel {
  GridIndex id;
  Vec3 dir;      // unit, query position -> voxel center
  double depth;  // meters
};

/// The two online maps: a sparse fine voxel-statistics map (one primitive per
/// surface voxel) and a coarse occupancy grid for exploration and path cost.
class WorldMap {
 public:
  WorldMap(const Bounds& bounds, double voxel_size, double cell_size,
           const Lattice& lattice, double max_range = 10.0)
      : voxel_size_(voxel_size),
        max_range_(max_range),
        lattice_(&lattice),
        occupancy_(bounds, cell_size) {}

  double voxel_size() const { return voxel_size_; }
  double max_range() const { return max_range_; }
  const Lattice& lattice() const { return *lattice_; }
  const Bounds& bounds() const { return occupancy_.bounds(); }
  const OccupancyGrid& occupancy() const { return occupancy_; }
  OccupancyGrid& occupancy() { return occupancy_; }
  const StatsMap& stats() const { return stats_; }
  StatsMap& stats() { return stats_; }

  /// Fuse one posed RGB-D frame: per valid-depth pixel, backproject, update
  /// the hit voxel's statistics, mark its occupancy cell occupied, and carve
  /// the camera-to-hit ray free. No-return pixels carve to max_range.
  IngestReport ingest_frame(const Frame& frame) {
    if (!occupancy_.bounds().contains(frame.pose.translation())) {
      throw std::invalid_argument("ingest_frame: pose outside map bounds");
    }
    if (!frame.intrinsics.finite()) {
      throw std::invalid_argument("ingest_frame: non-finite intrinsics");
    }
    IngestReport report;
    const Vec3 cam = frame.pose.translation();
    const Eigen::Matrix3d rot = frame.pose.rotation();
    struct Carve {
      Vec3 dir;
      double t;
    };
    std::vector<Carve> carves;
    carves.reserve(frame.rgb.size());
    std::unordered_set<GridIndex, GridIndexHash> touched;
    for (int v = 0; v < frame.height; ++v) {
      for (int u = 0; u < frame.width; ++u) {
        size_t px = frame.at(u, v);
        double d = frame.depth[px];
        Vec3 dir = rot * frame.pixel_ray(u, v);
        if (!(d > 0.0) || !std::isfinite(d)) {
          carves.push_back({dir, max_range_});
          continue;
        }
        Vec3 point = cam + dir * d;
        if (!occupancy_.bounds().contains(point)) {
          carves.push_back({dir, std::min(d, max_range_)});
          continue;
        }
        GridIndex vid = point_to_index(point, voxel_size_);
        auto [it, fresh] = stats_.try_emplace(vid, VoxelStats(lattice_->n_bins));
        if (it->second.update(*lattice_, dir, frame.rgb[px], d)) {
          ++report.clamped_pixels;
        }
        ++report.updates_applied;
        touched.insert(vid);
        GridIndex cell = occupancy_.cell_of(point);
        if (occupancy_.in_grid(cell)) occupancy_.mark_occupied(cell);
        carves.push_back({dir, d});
      }
    }
    // carve after all hits of this frame are marked occupied
    for (const Carve& c : carves) {
      traverse_grid(cam, c.dir, std::min(c.t, max_range_), occupancy_.cell_size(),
                    [&](const GridIndex& cell, double) {
                      if (!occupancy_.in_grid(cell)) return false;
                      if (occupancy_.state(cell) == CellState::Occupied) return false;
                      if (occupancy_.mark_free(cell)) ++report.cells_carved;
                      return true;
                    });
    }
    report.voxels_touched = touched.size();
    return report;
  }

  /// Visible surface voxels from a position: each cast ray stops at the first
  /// occupied cell and contributes that cell's stats voxels, deduplicated
  /// across rays. The position must be in a free cell.
  std::vector<VisibleVoxel> visible_voxels(const Vec3& position, const ViewSpec& view,
                                           double max_range) const {
    require_free(position);
    std::vector<VisibleVoxel> out;
    std::unordered_set<GridIndex, GridIndexHash> seen;
    for (const Vec3& dir : view_rays(view)) {
      GridIndex hit;
      if (!march_to_occupied(position, dir, max_range, hit)) continue;
      for_voxels_in_cell(hit, [&](const GridIndex& vid) {
        if (!seen.insert(vid).second) return;
        Vec3 to_c = index_center(vid, voxel_size_) - position;
        double depth = to_c.norm();
        out.push_back({vid, to_c / depth, depth});
      });
    }
    return out;
  }

  /// Unknown occupancy cells any cast ray traverses before its first occupied
  /// cell (or max_range).
  std::vector<GridIndex> visible_unknown_cells(const Vec3& position,
                                               const ViewSpec& view,
                                               double max_range) const {
    require_free(position);
    std::unordered_set<GridIndex, GridIndexHash> cells;
    for (const Vec3& dir : view_rays(view)) {
      traverse_grid(position, dir, max_range, occupancy_.cell_size(),
                    [&](const GridIndex& cell, double) {
                      if (!occupancy_.in_grid(cell)) return false;
                      CellState s = occupancy_.state(cell);
                      if (s == CellState::Occupied) return false;
                      if (s == CellState::Unknown) cells.insert(cell);
                      return true;
                    });
    }
    return {cells.begin(), cells.end()};
  }

  /// Shortest-path length between two free positions over the 6-connected
  /// free-cell graph, in meters. nullopt = unreachable.
  std::optional<double> path_cost(const Vec3& from, const Vec3& to) const {
    auto path = find_path(from, to);
    if (!path) return std::nullopt;
    return static_cast<double>(path->size() - 1) * occupancy_.cell_size();
  }

  /// Breadth-first shortest cell path (endpoints included).
  std::optional<std::vector<GridIndex>> find_path(const Vec3& from,
                                                  const Vec3& to) const {
    require_free(from, "path endpoint");
    require_free(to, "path endpoint");
    GridIndex start = occupancy_.cell_of(from);
    GridIndex goal = occupancy_.cell_of(to);
    if (start == goal) return std::vector<GridIndex>{start};
    std::unordered_map<GridIndex, GridIndex, GridIndexHash> came_from;
    std::deque<GridIndex> frontier{start};
    came_from[start] = start;
    const int32_t off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                               {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    while (!frontier.empty()) {
      GridIndex cur = frontier.front();
      frontier.pop_front();
      for (auto& o : off) {
        GridIndex nxt{cur.x + o[0], cur.y + o[1], cur.z + o[2]};
        if (!occupancy_.in_grid(nxt) || occupancy_.state(nxt) != CellState::Free)
          continue;
        if (came_from.contains(nxt)) continue;
        came_from[nxt] = cur;
        if (nxt == goal) {
          std::vector<GridIndex> path{goal};
          while (!(path.back() == start)) path.push_back(came_from[path.back()]);
          std::reverse(path.begin(), path.end());
          return path;
        }
        frontier.push_back(nxt);
      }
    }
    return std::nullopt;
  }

  /// Ray directions for a view spec (panoramic bin centers or a pinhole probe
  /// raster), deterministic.
  std::vector<Vec3> view_rays(const ViewSpec& view) const {
    if (view.mode == ViewSpec::Mode::Panoramic) {
      if (!view.pano_lattice) {
        throw std::invalid_argument("view_rays: panoramic view needs a lattice");
      }
      return view.pano_lattice->centers;
    }
    std::vector<Vec3> rays;
    rays.reserve(static_cast<size_t>(view.probe_res) * view.probe_res);
    auto [e1, e2] = tangent_basis(view.axis);
    double half_tan = std::tan(view.frustum_half_angle);
    for (int v = 0; v < view.probe_res; ++v) {
      for (int u = 0; u < view.probe_res; ++u) {
        double su = (2.0 * (u + 0.5) / view.probe_res - 1.0) * half_tan;
        double sv = (2.0 * (v + 0.5) / view.probe_res - 1.0) * half_tan;
        rays.push_back((view.axis + su * e1 + sv * e2).normalized());
      }
    }
    return rays;
  }

  template <class Fn>
  void for_voxels_in_cell(const GridIndex& cell, Fn&& fn) const {
    double cs = occupancy_.cell_size();
    Vec3 lo{cell.x * cs, cell.y * cs, cell.z * cs};
    GridIndex vlo = point_to_index(lo + Vec3::Constant(1e-9), voxel_size_);
    GridIndex vhi = point_to_index(lo + Vec3::Constant(cs - 1e-9), voxel_size_);
    for (int32_t z = vlo.z; z <= vhi.z; ++z)
      for (int32_t y = vlo.y; y <= vhi.y; ++y)
        for (int32_t x = vlo.x; x <= vhi.x; ++x) {
          GridIndex vid{x, y, z};
          if (stats_.contains(vid)) fn(vid);
        }
  }

 private:
  void require_free(const Vec3& p, const char* what = "query position") const {
    if (occupancy_.state_at(p) != CellState::Free) {
      throw std::invalid_argument(std::string(what) + " is not in a free cell");
    }
  }

  bool march_to_occupied(const Vec3& origin, const Vec3& dir, double max_range,
                         GridIndex& hit) const {
    bool found = false;
    traverse_grid(origin, dir, max_range, occupancy_.cell_size(),
                  [&](const GridIndex& cell, double) {
                    if (!occupancy_.in_grid(cell)) return false;
                    if (occupancy_.state(cell) == CellState::Occupied) {
                      hit = cell;
                      found = true;
                      return false;
                    }
                    return true;
                  });
    return found;
  }

  double voxel_size_;
  double max_range_;
  const Lattice* lattice_;
  OccupancyGrid occupancy_;
  StatsMap stats_;
};

}  // namespace rfield
