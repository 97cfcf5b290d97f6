#include "rfield/planner.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace rfield;

namespace {

const Lattice& lattice64() {
  static Lattice lat = build_lattice(64);
  return lat;
}

const Lattice& pano_with_fov() {
  static Lattice lat = [] {
    Lattice l = build_lattice_from_resolution(deg2rad(10.0));
    build_fov_sets(l, deg2rad(39.2));
    return l;
  }();
  return lat;
}

/// 16^3-cell box, free except an optional unknown slab at x = [3.0, 3.2) and
/// an optional fresh surface cell. Fresh stats voxels have R = 0, so each
/// visible one is worth exactly 1 deficit.
WorldMap scenario_map(bool with_surface, bool with_unknown_slab,
                      const Vec3& surface_at = {2.5, 1.5, 1.5}) {
  WorldMap map({Vec3::Zero(), Vec3::Constant(3.2)}, 0.05, 0.2, lattice64(), 10.0);
  map.occupancy().for_each_cell([&](const GridIndex& c, CellState) {
    if (with_unknown_slab && c.x == 15) return;  // stays Unknown
    map.occupancy().mark_free(c);
  });
  if (with_surface) {
    map.occupancy().mark_occupied(map.occupancy().cell_of(surface_at));
    map.stats().emplace(point_to_index(surface_at, 0.05), VoxelStats(64));
  }
  return map;
}

}  // namespace

TEST_CASE("utility combination is linear in its weights") {
  PlannerConfig cfg;
  cfg.lambda1 = 2.5;
  cfg.lambda2 = 0.3;
  REQUIRE(combine_utility(cfg, 4.0, 1.5, 2.0) == 2.5 * 4.0 + 1.5 - 0.3 * 2.0);
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 0.0;
  REQUIRE(combine_utility(cfg, 100.0, 1.5, 50.0) == 1.5);
}

TEST_CASE("candidate scoring reproduces its ingredients") {
  WorldMap map = scenario_map(true, true);
  PlannerConfig cfg;
  cfg.mode = PlannerConfig::Mode::Panoramic;
  Vec3 current{0.5, 1.5, 1.5};
  Vec3 cand{1.5, 1.5, 1.5};
  CandidateScore sc =
      score_candidate(map, &pano_with_fov(), current, cand, Vec3::UnitX(), cfg);
  REQUIRE(sc.reachable);
  REQUIRE(sc.u_path == *map.path_cost(current, cand));

  ViewSpec view = ViewSpec::panoramic(pano_with_fov());
  auto unknown = map.visible_unknown_cells(cand, view, cfg.max_range);
  auto visible = map.visible_voxels(cand, view, cfg.max_range);
  REQUIRE(!unknown.empty());
  REQUIRE(!visible.empty());
  REQUIRE(sc.u_g == static_cast<double>(unknown.size()));
  // fresh stats: R = 0, so the deficit is one per visible voxel
  REQUIRE_THAT(sc.u_r, Catch::Matchers::WithinAbs(static_cast<double>(visible.size()),
                                                  1e-12));
  REQUIRE_THAT(sc.u_view,
               Catch::Matchers::WithinAbs(
                   cfg.lambda1 * sc.u_g + sc.u_r - cfg.lambda2 * sc.u_path, 1e-12));
}

TEST_CASE("unreachable candidates are flagged, not scored") {
  WorldMap map = scenario_map(false, false);
  // occupied wall at x in [1.4, 1.6) splits the box into two pockets
  for (int y = 0; y < 16; ++y) {
    for (int z = 0; z < 16; ++z) {
      map.occupancy().mark_occupied({7, y, z});
    }
  }
  PlannerConfig cfg;
  cfg.mode = PlannerConfig::Mode::Panoramic;
  CandidateScore sc = score_candidate(map, &pano_with_fov(), {0.5, 1.5, 1.5},
                                      {2.5, 1.5, 1.5}, Vec3::UnitX(), cfg);
  REQUIRE_FALSE(sc.reachable);
  REQUIRE(sc.u_view == 0.0);
}

TEST_CASE("panoramic direction matches a direct cone aggregation") {
  WorldMap map = scenario_map(true, true);
  PlannerConfig cfg;
  const Lattice& pano = pano_with_fov();
  Vec3 pos{1.1, 1.5, 1.5};
  PanoDirection pd = panoramic_direction(map, pano, pos, cfg);

  // rebuild the weighted point set, then aggregate with an explicit cone test
  // over binned directions instead of the precomputed FoV sets
  ViewSpec view = ViewSpec::panoramic(pano);
  std::vector<std::pair<Vec3, double>> points;
  double cell = map.occupancy().cell_size();
  for (const GridIndex& c : map.visible_unknown_cells(pos, view, cfg.max_range)) {
    points.emplace_back((index_center(c, cell) - pos).normalized(), cfg.lambda1);
  }
  for (const VisibleVoxel& v : map.visible_voxels(pos, view, cfg.max_range)) {
    double r = renderability(map.stats().at(v.id), map.lattice(), v.dir, v.depth).r;
    points.emplace_back(v.dir, 1.0 - r);
  }
  REQUIRE(!points.empty());
  double thresh = std::cos(pano.fov_half_angle);
  std::vector<double> oracle(pano.n_bins, 0.0);
  for (const auto& [dir, w] : points) {
    const Vec3& binned = pano.centers[pano.nearest_bin(dir)];
    for (int k = 0; k < pano.n_bins; ++k) {
      if (binned.dot(pano.centers[k]) >= thresh) oracle[k] += w;
    }
  }
  for (int k = 0; k < pano.n_bins; ++k) {
    REQUIRE_THAT(pd.scores[k], Catch::Matchers::WithinAbs(oracle[k], 1e-9));
  }
  // argmax with lowest-index tie break
  int best = 0;
  for (int k = 1; k < pano.n_bins; ++k)
    if (oracle[k] > oracle[best]) best = k;
  REQUIRE(pd.bin == best);
  REQUIRE(pd.axis == pano.centers[best]);
}

TEST_CASE("a lone utility point ties all covering bins to the lowest index") {
  WorldMap map = scenario_map(true, false);
  PlannerConfig cfg;
  const Lattice& pano = pano_with_fov();
  // close enough that the surface cell spans several ray bins
  Vec3 pos{1.9, 1.5, 1.5};
  PanoDirection pd = panoramic_direction(map, pano, pos, cfg);
  double top = *std::max_element(pd.scores.begin(), pd.scores.end());
  for (int k = 0; k < pd.bin; ++k) REQUIRE(pd.scores[k] < top);
  REQUIRE(pd.scores[pd.bin] == top);
}

TEST_CASE("a saturated pose has no panoramic direction") {
  WorldMap map = scenario_map(false, false);  // all free, nothing to see
  PlannerConfig cfg;
  REQUIRE_THROWS_AS(panoramic_direction(map, pano_with_fov(), {1.5, 1.5, 1.5}, cfg),
                    saturated_pose_error);
}

TEST_CASE("panoramic direction needs FoV sets") {
  WorldMap map = scenario_map(true, false);
  Lattice bare = build_lattice_from_resolution(deg2rad(10.0));  // no fov_sets
  PlannerConfig cfg;
  REQUIRE_THROWS_AS(panoramic_direction(map, bare, {1.5, 1.5, 1.5}, cfg),
                    std::invalid_argument);
}

TEST_CASE("candidate sampling is deterministic and stays on free cells") {
  WorldMap map = scenario_map(true, false);
  PlannerConfig cfg;
  cfg.candidate_count = 30;
  cfg.candidate_radius = 1.0;
  Vec3 current{1.5, 1.5, 1.5};

  std::mt19937_64 a(7), b(7);
  auto s1 = sample_candidates(map, current, cfg, a);
  auto s2 = sample_candidates(map, current, cfg, b);
  REQUIRE(s1.size() == static_cast<size_t>(cfg.candidate_count));
  REQUIRE(s1 == s2);
  for (const Vec3& p : s1) {
    REQUIRE(map.occupancy().state_at(p) == CellState::Free);
    REQUIRE((p - current).norm() <= cfg.candidate_radius + 1e-12);
    REQUIRE(p.isApprox(index_center(map.occupancy().cell_of(p),
                                    map.occupancy().cell_size()),
                       1e-12));
  }
}

TEST_CASE("sampling stalls without free cells and collapses to a single one") {
  WorldMap map({Vec3::Zero(), Vec3::Constant(3.2)}, 0.05, 0.2, lattice64(), 10.0);
  PlannerConfig cfg;
  std::mt19937_64 rng(5);
  REQUIRE_THROWS_AS(sample_candidates(map, {1.5, 1.5, 1.5}, cfg, rng),
                    planner_stall_error);

  GridIndex only{3, 3, 3};
  map.occupancy().mark_free(only);
  Vec3 center = index_center(only, map.occupancy().cell_size());
  auto s = sample_candidates(map, {1.5, 1.5, 1.5}, cfg, rng);  // radius fallback
  for (const Vec3& p : s) REQUIRE(p == center);
}

TEST_CASE("nbv selection picks the reachable utility argmax") {
  WorldMap map = scenario_map(true, true);
  PlannerConfig cfg;
  cfg.mode = PlannerConfig::Mode::Panoramic;
  cfg.candidate_count = 10;
  cfg.candidate_radius = 1.5;
  Vec3 current{0.5, 0.5, 0.5};

  std::mt19937_64 a(11), b(11);
  NbvDecision d1 = select_nbv(map, &pano_with_fov(), current, cfg, a);
  NbvDecision d2 = select_nbv(map, &pano_with_fov(), current, cfg, b);
  REQUIRE(d1.chosen.position == d2.chosen.position);
  REQUIRE(d1.chosen.direction == d2.chosen.direction);
  REQUIRE(d1.candidates.size() == d2.candidates.size());

  double best = -std::numeric_limits<double>::infinity();
  for (const CandidateScore& c : d1.candidates) {
    if (c.reachable) best = std::max(best, c.u_view);
  }
  REQUIRE(d1.chosen.u_view == best);
  REQUIRE(d1.chosen.reachable);

  // independent rescore of the winner agrees (direction is irrelevant in
  // panoramic mode)
  CandidateScore re = score_candidate(map, &pano_with_fov(), current,
                                      d1.chosen.position, Vec3::UnitX(), cfg);
  REQUIRE_THAT(re.u_view, Catch::Matchers::WithinAbs(d1.chosen.u_view, 1e-9));
}

TEST_CASE("a walled-off agent either stalls or stays put") {
  WorldMap map = scenario_map(true, true);
  GridIndex agent = map.occupancy().cell_of({1.5, 1.5, 1.5});
  const int32_t off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                             {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (auto& o : off) {
    map.occupancy().mark_occupied({agent.x + o[0], agent.y + o[1], agent.z + o[2]});
  }
  PlannerConfig cfg;
  cfg.mode = PlannerConfig::Mode::Panoramic;
  cfg.candidate_count = 8;
  cfg.candidate_radius = 1.0;
  std::mt19937_64 rng(3);
  // the only reachable cell is the agent's own; any other draw is unreachable
  bool ok = false;
  try {
    NbvDecision d = select_nbv(map, &pano_with_fov(), {1.5, 1.5, 1.5}, cfg, rng);
    ok = d.chosen.reachable && d.chosen.u_path == 0.0 &&
         map.occupancy().cell_of(d.chosen.position) == agent;
  } catch (const planner_stall_error&) {
    ok = true;
  }
  REQUIRE(ok);
}
