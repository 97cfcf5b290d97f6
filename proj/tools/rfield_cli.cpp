// Command-line driver: run episodes, score poses against a map snapshot,
// evaluate renderability-vs-error correlation, benchmark query latency, and
// inspect lattices. All outputs are CSV/JSON stamped with a config hash.

#include "rfield/config.hpp"
#include "rfield/planner.hpp"
#include "rfield/simulator.hpp"
#include "rfield/snapshot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfield;

namespace {

std::string resolve_output_dir(const std::string& configured) {
  if (const char* env = std::getenv("RFIELD_OUTPUT_DIR")) return env;
  return configured;
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  json j;
  is >> j;
  return j;
}

struct LoadedConfig {
  RunConfig cfg;
  std::string hash;
};

LoadedConfig load(const std::string& path) {
  json j = read_json(path);
  return {parse_config(j), config_hash(j)};
}

int cmd_run(const std::string& config_path) {
  auto [cfg, hash] = load(config_path);
  Scene scene = build_scene(cfg.scene_preset, cfg.scene_seed);
  Lattice voxel_lattice = build_lattice(cfg.voxel_lattice_bins);
  Lattice pano_lattice = build_lattice_from_resolution(cfg.pano_theta_res);
  build_fov_sets(pano_lattice, cfg.planner.fov_half_angle);
  WorldMap map(scene.bounds, cfg.episode.voxel_size, cfg.episode.cell_size,
               voxel_lattice, cfg.episode.max_range);
  EpisodeResult res =
      run_episode(scene, voxel_lattice, &pano_lattice, cfg.planner, cfg.episode, &map);

  fs::path out(resolve_output_dir(cfg.output_dir));
  fs::create_directories(out);

  std::ofstream traj(out / "trajectory.csv");
  traj << "# config_hash=" << hash << "\n";
  traj << "step,x,y,z,dx,dy,dz,u_g,u_r,u_path,u_view\n";
  for (size_t i = 0; i < res.trajectory.size(); ++i) {
    const TestPose& p = res.trajectory[i];
    const CandidateScore* sc = nullptr;
    if (i > 0 && i - 1 < res.steps.size()) sc = &res.steps[i - 1].decision.chosen;
    traj << i << ',' << p.position.x() << ',' << p.position.y() << ','
         << p.position.z() << ',' << p.axis.x() << ',' << p.axis.y() << ','
         << p.axis.z() << ',' << (sc ? sc->u_g : 0.0) << ',' << (sc ? sc->u_r : 0.0)
         << ',' << (sc ? sc->u_path : 0.0) << ',' << (sc ? sc->u_view : 0.0) << "\n";
  }

  std::ofstream log(out / "planner_log.jsonl");
  for (const StepLog& s : res.steps) {
    json rec;
    rec["step"] = s.step;
    rec["plan_seconds"] = s.plan_seconds;
    rec["chosen"] = {{"position", {s.decision.chosen.position.x(),
                                   s.decision.chosen.position.y(),
                                   s.decision.chosen.position.z()}},
                     {"direction", {s.decision.chosen.direction.x(),
                                    s.decision.chosen.direction.y(),
                                    s.decision.chosen.direction.z()}},
                     {"u_view", s.decision.chosen.u_view}};
    json cands = json::array();
    for (const CandidateScore& c : s.decision.candidates) {
      cands.push_back({{"position", {c.position.x(), c.position.y(), c.position.z()}},
                       {"u_g", c.u_g},
                       {"u_r", c.u_r},
                       {"u_path", c.u_path},
                       {"u_view", c.u_view},
                       {"reachable", c.reachable}});
    }
    rec["candidates"] = std::move(cands);
    log << rec.dump() << "\n";
  }

  save_snapshot(map, (out / "map.snapshot").string());

  json metrics;
  metrics["config_hash"] = hash;
  metrics["frames_captured"] = res.frames_captured;
  metrics["stalled"] = res.stalled;
  metrics["coverage_fraction"] = res.coverage_fraction;
  metrics["mean_surface_r"] = res.mean_surface_r;
  metrics["mean_plan_seconds"] = res.mean_plan_seconds;
  std::ofstream(out / "metrics.json") << metrics.dump(2) << "\n";
  std::cout << "episode complete: " << res.frames_captured << " frames, coverage "
            << res.coverage_fraction << ", outputs in " << out << "\n";
  return 0;
}

int cmd_score(const std::string& config_path, const std::string& snapshot_path,
              const std::string& poses_path, const std::string& out_path) {
  auto [cfg, hash] = load(config_path);
  Lattice voxel_lattice = build_lattice(cfg.voxel_lattice_bins);
  Lattice pano_lattice = build_lattice_from_resolution(cfg.pano_theta_res);
  build_fov_sets(pano_lattice, cfg.planner.fov_half_angle);
  WorldMap map = load_snapshot(snapshot_path, voxel_lattice);

  std::ifstream poses(poses_path);
  if (!poses) throw std::invalid_argument("cannot open " + poses_path);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    out = &file;
  }
  *out << "# config_hash=" << hash << "\n";
  *out << "pose_id,u_g,u_r,u_path,mean_r\n";
  std::string line;
  bool have_origin = false;
  Vec3 origin = Vec3::Zero();
  while (std::getline(poses, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("id,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<double> vals;
    std::string id;
    std::getline(ls, id, ',');
    while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 6) throw std::invalid_argument("poses: expected id,x,y,z,dx,dy,dz");
    Vec3 pos{vals[0], vals[1], vals[2]};
    Vec3 dir = Vec3{vals[3], vals[4], vals[5]}.normalized();
    if (!have_origin) {
      origin = pos;
      have_origin = true;
    }
    CandidateScore sc = score_candidate(map, &pano_lattice, origin, pos, dir,
                                        cfg.planner);
    ViewSpec view = candidate_view(cfg.planner, &pano_lattice, dir);
    auto visible = map.visible_voxels(pos, view, cfg.planner.max_range);
    double mean_r = 0.0;
    if (!visible.empty()) {
      std::vector<GridIndex> ids;
      ids.reserve(visible.size());
      for (const auto& v : visible) ids.push_back(v.id);
      auto rs = batch_renderability(map.stats(), voxel_lattice, ids, pos,
                                    map.voxel_size());
      for (double r : rs) mean_r += r;
      mean_r /= rs.size();
    }
    *out << id << ',' << sc.u_g << ',' << sc.u_r << ','
         << (sc.reachable ? std::to_string(sc.u_path) : std::string("unreachable"))
         << ',' << mean_r << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& snapshot_path,
             const std::string& out_dir) {
  auto [cfg, hash] = load(config_path);
  Scene scene = build_scene(cfg.scene_preset, cfg.scene_seed);
  Lattice voxel_lattice = build_lattice(cfg.voxel_lattice_bins);
  WorldMap map = load_snapshot(snapshot_path, voxel_lattice);
  auto grid = make_test_grid(scene, cfg.eval_spacing);
  CameraIntrinsics intr = CameraIntrinsics::from_fov(cfg.eval_width, cfg.eval_height,
                                                     cfg.episode.fov, cfg.episode.fov);
  EvalResult res =
      eval_novel_views(scene, map, grid, intr, cfg.eval_width, cfg.eval_height);

  fs::path out(out_dir.empty() ? resolve_output_dir(cfg.output_dir) : out_dir);
  fs::create_directories(out);
  std::ofstream csv(out / "per_view.csv");
  csv << "# config_hash=" << hash << "\n";
  csv << "view,x,y,z,dx,dy,dz,mean_r,mean_deficit,mse,psnr\n";
  for (size_t i = 0; i < res.views.size(); ++i) {
    const auto& v = res.views[i];
    const auto& p = grid[i];
    csv << i << ',' << p.position.x() << ',' << p.position.y() << ','
        << p.position.z() << ',' << p.axis.x() << ',' << p.axis.y() << ','
        << p.axis.z() << ',' << v.mean_r << ',' << v.mean_deficit << ',' << v.mse
        << ',' << v.psnr << "\n";
  }
  json rep;
  rep["config_hash"] = hash;
  rep["views"] = res.views.size();
  rep["spearman_deficit_mse"] = res.spearman_deficit_mse;
  rep["pearson_deficit_mse"] = res.pearson_deficit_mse;
  std::ofstream(out / "correlation.json") << rep.dump(2) << "\n";
  std::cout << rep.dump(2) << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& out_path) {
  auto [cfg, hash] = load(config_path);
  Lattice lattice = build_lattice(cfg.voxel_lattice_bins);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    out = &file;
  }
  *out << "# config_hash=" << hash << " workers=1\n";
  *out << "metric,size,value\n";

  using clock = std::chrono::steady_clock;
  std::mt19937_64 rng(7);

  // (a) batch query wall time vs voxel count
  for (size_t count : {1000ul, 10000ul, 100000ul}) {
    StatsMap stats;
    std::vector<GridIndex> ids;
    std::uniform_int_distribution<int32_t> coord(0, 120);
    std::uniform_real_distribution<double> col(0.0, 1.0);
    while (stats.size() < count) {
      GridIndex id{coord(rng), coord(rng), coord(rng)};
      auto [it, fresh] = stats.try_emplace(id, VoxelStats(lattice.n_bins));
      if (!fresh) continue;
      int obs = 1 + static_cast<int>(rng() % 6);
      for (int i = 0; i < obs; ++i) {
        it->second.update(lattice, random_unit(rng), Vec3(col(rng), col(rng), col(rng)),
                          1.0 + col(rng) * 4.0);
      }
      ids.push_back(id);
    }
    Vec3 cam{-1.0, -1.0, -1.0};
    auto t0 = clock::now();
    auto rs = batch_renderability(stats, lattice, ids, cam, 0.05);
    double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    *out << "batch_query_ms," << count << ',' << ms << "\n";
    if (rs.size() != count) return 2;
  }

  // (b) per-frame update+query time vs keyframe count
  Scene scene = build_scene("box_room", 1);
  CameraIntrinsics intr = CameraIntrinsics::from_fov(128, 128, deg2rad(60.0),
                                                     deg2rad(60.0));
  for (int keyframes : {10, 50, 100, 200, 500}) {
    WorldMap map(scene.bounds, 0.05, 0.20, lattice, 10.0);
    std::mt19937_64 krng(123);
    auto frame_pose = [&](int i) {
      double ang = 2.0 * kPi * i / 24.0;
      Vec3 pos{2.0 + 0.8 * std::cos(ang), 2.0 + 0.8 * std::sin(ang),
               1.0 + 0.3 * std::sin(ang * 3.0)};
      Vec3 dir{std::cos(ang * 1.7), std::sin(ang * 1.7), 0.2 * std::cos(ang)};
      return make_pose(pos, dir.normalized());
    };
    for (int i = 0; i < keyframes; ++i) {
      map.ingest_frame(render_rgbd(scene, frame_pose(i), intr, 128, 128).frame);
    }
    std::vector<GridIndex> ids;
    for (const auto& [id, _] : map.stats()) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    if (ids.size() > 20000) ids.resize(20000);
    auto t0 = clock::now();
    map.ingest_frame(render_rgbd(scene, frame_pose(keyframes), intr, 128, 128).frame);
    batch_renderability(map.stats(), lattice, ids, Vec3{2.0, 2.0, 1.0}, 0.05);
    double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    *out << "update_query_ms," << keyframes << ',' << ms << "\n";
  }

  // (c) per-voxel state size, constant in observation count
  *out << "voxel_record_bytes," << lattice.n_bins << ','
       << voxel_record_size(static_cast<uint32_t>(lattice.n_bins)) << "\n";
  return 0;
}

int cmd_lattice_info(int n_bins, double theta_res_deg, double fov_half_angle_deg) {
  Lattice lat = theta_res_deg > 0.0
                    ? build_lattice_from_resolution(deg2rad(theta_res_deg))
                    : build_lattice(n_bins);
  build_fov_sets(lat, deg2rad(fov_half_angle_deg));
  size_t mn = lat.fov_sets[0].size(), mx = mn, total = 0;
  for (const auto& s : lat.fov_sets) {
    mn = std::min(mn, s.size());
    mx = std::max(mx, s.size());
    total += s.size();
  }
  std::cout << "n_bins: " << lat.n_bins << "\n"
            << "bin_radius_deg: " << lat.bin_radius * 180.0 / kPi << "\n"
            << "compact_mask: " << (lat.compact_mask() ? "yes" : "no") << "\n"
            << "fov_half_angle_deg: " << fov_half_angle_deg << "\n"
            << "fov_set_size_min: " << mn << "\n"
            << "fov_set_size_mean: " << static_cast<double>(total) / lat.n_bins << "\n"
            << "fov_set_size_max: " << mx << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"renderability-field view planning toolkit"};
  app.require_subcommand(1);

  std::string config_path, snapshot_path, poses_path, out_path;
  int n_bins = 64;
  double theta_res_deg = 0.0, fov_half_deg = 39.2;

  auto* run = app.add_subcommand("run", "run a planning episode from a config file");
  run->add_option("config", config_path, "run config JSON")->required();

  auto* score = app.add_subcommand("score", "score poses against a map snapshot");
  score->add_option("--config", config_path)->required();
  score->add_option("--snapshot", snapshot_path)->required();
  score->add_option("--poses", poses_path, "CSV: id,x,y,z,dx,dy,dz")->required();
  score->add_option("--out", out_path, "output CSV (default stdout)");

  auto* eval = app.add_subcommand("eval", "novel-view correlation evaluation");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--snapshot", snapshot_path)->required();
  eval->add_option("--out", out_path, "output directory");

  auto* bench = app.add_subcommand("bench", "latency and state-size report");
  bench->add_option("--config", config_path)->required();
  bench->add_option("--out", out_path, "output CSV (default stdout)");

  auto* info = app.add_subcommand("lattice-info", "print lattice statistics");
  info->add_option("--n-bins", n_bins);
  info->add_option("--theta-res-deg", theta_res_deg);
  info->add_option("--fov-half-angle-deg", fov_half_deg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (score->parsed()) return cmd_score(config_path, snapshot_path, poses_path, out_path);
    if (eval->parsed()) return cmd_eval(config_path, snapshot_path, out_path);
    if (bench->parsed()) return cmd_bench(config_path, out_path);
    if (info->parsed()) return cmd_lattice_info(n_bins, theta_res_deg, fov_half_deg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
