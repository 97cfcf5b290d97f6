#pragma once

#include "rfield/planner.hpp"
#include "rfield/simulator.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace rfield {

/// Everything one run needs; loaded from a JSON file, unknown keys rejected.
struct RunConfig {
  std::string scene_preset = "box_room";
  uint64_t scene_seed = 0;

  int voxel_lattice_bins = 64;
  double pano_theta_res = deg2rad(10.0);

  PlannerConfig planner;
  EpisodeConfig episode;

  Vec3 eval_spacing{1.0, 1.0, 0.75};
  int eval_width = 64;
  int eval_height = 64;

  std::string output_dir = "out";
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " +
                                  section);
    }
  }
}

inline Vec3 parse_vec3(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument("config: expected a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig cfg;
  detail::check_keys(j, {"scene", "lattice", "map", "planner", "camera", "budget",
                         "eval", "seed", "output_dir"},
                     "top level");
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    detail::check_keys(s, {"preset", "seed"}, "scene");
    cfg.scene_preset = s.value("preset", cfg.scene_preset);
    cfg.scene_seed = s.value("seed", cfg.scene_seed);
  }
  if (j.contains("lattice")) {
    const auto& s = j.at("lattice");
    detail::check_keys(s, {"n_bins", "pano_theta_res_deg"}, "lattice");
    cfg.voxel_lattice_bins = s.value("n_bins", cfg.voxel_lattice_bins);
    if (s.contains("pano_theta_res_deg")) {
      cfg.pano_theta_res = deg2rad(s.at("pano_theta_res_deg").get<double>());
    }
  }
  if (j.contains("map")) {
    const auto& s = j.at("map");
    detail::check_keys(s, {"voxel_size", "cell_size", "max_range"}, "map");
    cfg.episode.voxel_size = s.value("voxel_size", cfg.episode.voxel_size);
    cfg.episode.cell_size = s.value("cell_size", cfg.episode.cell_size);
    cfg.episode.max_range = s.value("max_range", cfg.episode.max_range);
    cfg.planner.max_range = cfg.episode.max_range;
  }
  if (j.contains("planner")) {
    const auto& s = j.at("planner");
    detail::check_keys(s,
                       {"lambda1", "lambda2", "candidate_count", "candidate_radius",
                        "mode", "fov_half_angle_deg", "frustum_half_angle_deg",
                        "probe_res", "dirs_per_candidate", "policy"},
                       "planner");
    cfg.planner.lambda1 = s.value("lambda1", cfg.planner.lambda1);
    cfg.planner.lambda2 = s.value("lambda2", cfg.planner.lambda2);
    cfg.planner.candidate_count = s.value("candidate_count", cfg.planner.candidate_count);
    cfg.planner.candidate_radius =
        s.value("candidate_radius", cfg.planner.candidate_radius);
    if (s.contains("mode")) {
      std::string m = s.at("mode").get<std::string>();
      if (m == "pinhole") {
        cfg.planner.mode = PlannerConfig::Mode::Pinhole;
      } else if (m == "panoramic") {
        cfg.planner.mode = PlannerConfig::Mode::Panoramic;
      } else {
        throw std::invalid_argument("config: planner.mode must be pinhole|panoramic");
      }
    }
    if (s.contains("fov_half_angle_deg")) {
      cfg.planner.fov_half_angle = deg2rad(s.at("fov_half_angle_deg").get<double>());
    }
    if (s.contains("frustum_half_angle_deg")) {
      cfg.planner.frustum_half_angle =
          deg2rad(s.at("frustum_half_angle_deg").get<double>());
    }
    cfg.planner.probe_res = s.value("probe_res", cfg.planner.probe_res);
    cfg.planner.dirs_per_candidate =
        s.value("dirs_per_candidate", cfg.planner.dirs_per_candidate);
    if (s.contains("policy")) {
      std::string p = s.at("policy").get<std::string>();
      if (p == "renderability") {
        cfg.episode.policy = EpisodeConfig::Policy::Renderability;
      } else if (p == "random") {
        cfg.episode.policy = EpisodeConfig::Policy::Random;
      } else {
        throw std::invalid_argument("config: planner.policy must be renderability|random");
      }
    }
  }
  if (j.contains("camera")) {
    const auto& s = j.at("camera");
    detail::check_keys(s, {"width", "height", "fov_deg", "start_position",
                           "start_direction"},
                       "camera");
    cfg.episode.render_width = s.value("width", cfg.episode.render_width);
    cfg.episode.render_height = s.value("height", cfg.episode.render_height);
    if (s.contains("fov_deg")) cfg.episode.fov = deg2rad(s.at("fov_deg").get<double>());
    if (s.contains("start_position")) {
      cfg.episode.start_position = detail::parse_vec3(s.at("start_position"));
    }
    if (s.contains("start_direction")) {
      cfg.episode.start_direction = detail::parse_vec3(s.at("start_direction"));
    }
  }
  if (j.contains("budget")) {
    const auto& s = j.at("budget");
    detail::check_keys(s, {"max_views", "max_seconds", "capture_every_cells"}, "budget");
    cfg.episode.max_views = s.value("max_views", cfg.episode.max_views);
    cfg.episode.max_seconds = s.value("max_seconds", cfg.episode.max_seconds);
    cfg.episode.capture_every_cells =
        s.value("capture_every_cells", cfg.episode.capture_every_cells);
  }
  if (j.contains("eval")) {
    const auto& s = j.at("eval");
    detail::check_keys(s, {"spacing", "width", "height"}, "eval");
    if (s.contains("spacing")) cfg.eval_spacing = detail::parse_vec3(s.at("spacing"));
    cfg.eval_width = s.value("width", cfg.eval_width);
    cfg.eval_height = s.value("height", cfg.eval_height);
  }
  if (j.contains("seed")) {
    cfg.episode.seed = j.at("seed").get<uint64_t>();
    cfg.planner.rng_seed = cfg.episode.seed;
  }
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (cfg.episode.max_views < 1) {
    throw std::invalid_argument("config: budget.max_views must be >= 1");
  }
  if (cfg.planner.candidate_count < 1) {
    throw std::invalid_argument("config: planner.candidate_count must be >= 1");
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  is >> j;
  return parse_config(j);
}

/// FNV-1a over the canonical JSON dump; stamped into outputs for traceability.
inline std::string config_hash(const nlohmann::json& j) {
  std::string dump = j.dump();
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rfield
