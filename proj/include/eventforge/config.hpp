#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/distill.hpp"
#include "eventforge/event_sim.hpp"
#include "eventforge/io.hpp"
#include "eventforge/trajectory.hpp"
#include "eventforge/voxel_render.hpp"

namespace eventforge {

// Flat key=value file with [section] headers, '#'/';' comments. Every entry
// remembers its line for error messages.
class ConfigFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static ConfigFile parse_string(const std::string& text,
                                 const std::string& name) {
    ConfigFile cfg;
    cfg.name_ = name;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']' || trimmed.size() < 3)
          cfg.fail(line_no, "malformed section header");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        cfg.section_lines_[section] = line_no;
        continue;
      }
      const size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        cfg.fail(line_no, "expected key=value or [section]");
      const std::string key = trim(trimmed.substr(0, eq));
      if (key.empty()) cfg.fail(line_no, "empty key");
      if (section.empty()) cfg.fail(line_no, "key before any [section]");
      auto& slot = cfg.sections_[section][key];
      if (slot.line != 0)
        cfg.fail(line_no, "duplicate key '" + key + "' (first at line " +
                              std::to_string(slot.line) + ")");
      slot = Entry{trim(trimmed.substr(eq + 1)), line_no};
    }
    return cfg;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    ConfigFile cfg = parse_string(ss.str(), path);
    cfg.dir_ = std::filesystem::path(path).parent_path().string();
    return cfg;
  }

  const std::string& name() const { return name_; }
  const std::string& dir() const { return dir_; }

  bool has_section(const std::string& section) const {
    return sections_.count(section) > 0;
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
  }

  const std::string& get(const std::string& section,
                         const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end())
      throw DataError(name_ + ": missing section [" + section + "]");
    const auto e = s->second.find(key);
    if (e == s->second.end())
      throw DataError(name_ + ": missing key '" + key + "' in [" + section +
                      "]");
    return e->second.value;
  }

  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    return parse_one<double>(section, key);
  }
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
  }
  int64_t get_int(const std::string& section, const std::string& key) const {
    return parse_one<int64_t>(section, key);
  }
  int64_t get_int_or(const std::string& section, const std::string& key,
                     int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
  }
  uint64_t get_uint(const std::string& section, const std::string& key) const {
    if (get(section, key).find('-') != std::string::npos)
      fail_at(section, key, "expected a non-negative number");
    return parse_one<uint64_t>(section, key);
  }
  uint64_t get_uint_or(const std::string& section, const std::string& key,
                       uint64_t fallback) const {
    return has(section, key) ? get_uint(section, key) : fallback;
  }

  bool get_bool_or(const std::string& section, const std::string& key,
                   bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get(section, key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail_at(section, key, "expected true/false");
  }

  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key) const {
    std::istringstream ss(get(section, key));
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    std::string rest;
    if (ss.clear(), ss >> rest)
      fail_at(section, key, "expected a list of numbers");
    if (out.empty()) fail_at(section, key, "expected a list of numbers");
    return out;
  }

  int line_of(const std::string& section, const std::string& key) const {
    return sections_.at(section).at(key).line;
  }

  [[noreturn]] void fail_at(const std::string& section, const std::string& key,
                            const std::string& what) const {
    if (has(section, key))
      fail(line_of(section, key), "key '" + key + "': " + what);
    throw DataError(name_ + ": [" + section + "] key '" + key + "': " + what);
  }

  [[noreturn]] void fail(int line, const std::string& what) const {
    throw DataError(name_ + ":" + std::to_string(line) + ": " + what);
  }

  // Rejects sections/keys outside the given schema.
  void check_schema(
      const std::map<std::string, std::set<std::string>>& schema) const {
    for (const auto& [section, entries] : sections_) {
      const auto s = schema.find(section);
      if (s == schema.end())
        fail(section_lines_.at(section), "unknown section [" + section + "]");
      for (const auto& [key, entry] : entries)
        if (!s->second.count(key))
          fail(entry.line,
               "unknown key '" + key + "' in section [" + section + "]");
    }
  }

  std::string resolve_path(const std::string& rel) const {
    if (rel.empty() || rel.front() == '/' || dir_.empty()) return rel;
    return (std::filesystem::path(dir_) / rel).string();
  }

 private:
  static std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
  }

  template <typename T>
  T parse_one(const std::string& section, const std::string& key) const {
    std::istringstream ss(get(section, key));
    T v{};
    std::string rest;
    if (!(ss >> v) || (ss >> rest)) fail_at(section, key, "expected a number");
    return v;
  }

  std::string name_, dir_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::map<std::string, int> section_lines_;
};

struct FactoryConfig {
  // [scene]
  std::string scene_file;  // SVXL; exclusive with scene_kind parameters
  std::string scene_kind = "wall";
  TestSceneParams scene_params;
  uint64_t scene_seed = 0;

  // [trajectory]
  Trajectory trajectory;

  // [rig]
  CameraModel camera;
  std::vector<double> baselines;

  // [events] (sim.seed is derived per sample at generation time)
  SimOptions sim;

  // [output]
  std::string out_dir = "out";
  int samples = 0;  // required, via config or --samples
  uint64_t seed = 0;
  int workers = 1;

  // [repr]
  uint64_t tencode_count = 0;  // required where used; no silent default
  int voxel_bins = 5;

  // [confidence]
  double mu = 0.75;

  SparseVoxelScene build_scene() const {
    if (!scene_file.empty()) return read_svxl(scene_file);
    return make_test_scene(test_scene_kind_from_string(scene_kind),
                           scene_params, scene_seed);
  }

  static FactoryConfig load(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
  }

  static FactoryConfig from_config(const ConfigFile& cfg);
};

namespace detail {

inline Pose parse_pose_values(const std::vector<double>& v) {
  if (v.size() != 12) throw DataError("pose: expected 12 values");
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[r * 4 + c];
    p.translation(r) = v[r * 4 + 3];
  }
  return p;
}

inline std::vector<Vec3> parse_vec3_list(const std::vector<double>& v) {
  if (v.size() % 3 != 0) throw DataError("expected triples of numbers");
  std::vector<Vec3> out;
  for (size_t i = 0; i + 2 < v.size(); i += 3)
    out.emplace_back(v[i], v[i + 1], v[i + 2]);
  return out;
}

}  // namespace detail

// [trajectory] section forms:
//   kind=local    base=<12 floats, optional> axis=<3 floats>
//   kind=global   poses_file=<path> subset_stride=<int> orientation=...
//                 alpha_path=<bool> alpha=<float>
//   kind=spline   explicit knots/coefficients (round-trip form)
inline Trajectory trajectory_from_config(const ConfigFile& cfg) {
  const std::string section = "trajectory";
  const std::string kind = cfg.get(section, "kind");
  if (kind == "local") {
    Pose base;
    if (cfg.has(section, "base"))
      base = detail::parse_pose_values(cfg.get_doubles(section, "base"));
    if (!base.is_rotation())
      cfg.fail_at(section, "base", "not a rotation matrix");
    const std::vector<double> axis = cfg.get_doubles(section, "axis");
    if (axis.size() != 3) cfg.fail_at(section, "axis", "expected 3 values");
    return local_trajectory(base, Vec3(axis[0], axis[1], axis[2]));
  }

  auto parse_orientation = [&]() {
    const std::string o = cfg.get_or(section, "orientation", "from_splines");
    if (o == "from_splines") return Trajectory::Orientation::kFromSplines;
    if (o == "motion_aligned") return Trajectory::Orientation::kMotionAligned;
    cfg.fail_at(section, "orientation",
                "expected from_splines or motion_aligned");
  };

  if (kind == "global") {
    const std::string poses_path =
        cfg.resolve_path(cfg.get(section, "poses_file"));
    if (!std::filesystem::exists(poses_path))
      cfg.fail_at(section, "poses_file", "file not found: " + poses_path);
    std::vector<Pose> poses = read_poses(poses_path);
    const int stride =
        static_cast<int>(cfg.get_int(section, "subset_stride"));
    if (cfg.get_bool_or(section, "alpha_path", false)) {
      const double alpha = cfg.get_double_or(section, "alpha", 0.0);
      const AlphaShapePath path = alpha_shape_path(poses, alpha);
      std::vector<Pose> loop;
      for (int idx : path.indices) loop.push_back(poses[idx]);
      loop.push_back(loop.front());  // close the walk
      poses = std::move(loop);
    }
    return fit_global_trajectory(poses, stride, parse_orientation());
  }

  if (kind == "spline") {
    Trajectory traj;
    traj.kind = Trajectory::Kind::kGlobal;
    traj.orientation = parse_orientation();
    const std::vector<double> clamp = cfg.get_doubles(section, "z_clamp");
    if (clamp.size() != 2)
      cfg.fail_at(section, "z_clamp", "expected 2 values");
    traj.z_lo = clamp[0];
    traj.z_hi = clamp[1];
    auto load_spline = [&](const std::string& prefix) {
      return SplineFit::from_coefficients(
          cfg.get_doubles(section, prefix + "_knots"),
          detail::parse_vec3_list(cfg.get_doubles(section, prefix + "_ctrl")));
    };
    traj.t_spline = load_spline("t");
    traj.r_spline = load_spline("r");
    traj.l_spline = load_spline("l");
    return traj;
  }

  cfg.fail_at(section, "kind", "expected local, global, or spline");
}

inline CameraModel camera_from_config(const ConfigFile& cfg,
                                      const std::string& section) {
  CameraModel cam;
  cam.fx = cfg.get_double(section, "fx");
  cam.fy = cfg.get_double(section, "fy");
  cam.cx = cfg.get_double(section, "cx");
  cam.cy = cfg.get_double(section, "cy");
  cam.width = static_cast<int>(cfg.get_int(section, "width"));
  cam.height = static_cast<int>(cfg.get_int(section, "height"));
  if (!cam.valid())
    throw DataError(cfg.name() + ": [" + section + "]: invalid camera model");
  return cam;
}

inline const std::map<std::string, std::set<std::string>>&
factory_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"scene",
       {"file", "kind", "seed", "extent", "depth", "step", "grid", "alpha",
        "color_jitter", "count", "size_min", "size_max"}},
      {"trajectory",
       {"kind", "base", "axis", "poses_file", "subset_stride", "orientation",
        "alpha_path", "alpha", "z_clamp", "t_knots", "t_ctrl", "r_knots",
        "r_ctrl", "l_knots", "l_ctrl"}},
      {"rig", {"fx", "fy", "cx", "cy", "width", "height", "baselines"}},
      {"events",
       {"dtau", "t_span_us", "threshold_min", "threshold_max", "cap_left",
        "cap_right", "max_subdivision"}},
      {"output", {"dir", "samples", "seed", "workers"}},
      {"repr", {"tencode_count", "voxel_bins"}},
      {"confidence", {"mu", "invert_size_term"}},
  };
  return schema;
}

inline FactoryConfig FactoryConfig::from_config(const ConfigFile& cfg) {
  cfg.check_schema(factory_schema());
  FactoryConfig out;

  if (cfg.has("scene", "file")) {
    out.scene_file = cfg.resolve_path(cfg.get("scene", "file"));
    if (!std::filesystem::exists(out.scene_file))
      cfg.fail_at("scene", "file", "file not found: " + out.scene_file);
  } else {
    out.scene_kind = cfg.get_or("scene", "kind", "wall");
    test_scene_kind_from_string(out.scene_kind);  // validates
  }
  TestSceneParams& sp = out.scene_params;
  sp.extent = cfg.get_double_or("scene", "extent", sp.extent);
  sp.depth = cfg.get_double_or("scene", "depth", sp.depth);
  sp.step = cfg.get_double_or("scene", "step", sp.step);
  sp.grid = static_cast<int>(cfg.get_int_or("scene", "grid", sp.grid));
  sp.alpha = cfg.get_double_or("scene", "alpha", sp.alpha);
  sp.color_jitter = cfg.get_double_or("scene", "color_jitter", sp.color_jitter);
  sp.count = static_cast<int>(cfg.get_int_or("scene", "count", sp.count));
  sp.size_min = cfg.get_double_or("scene", "size_min", sp.size_min);
  sp.size_max = cfg.get_double_or("scene", "size_max", sp.size_max);
  out.scene_seed = cfg.get_uint_or("scene", "seed", 0);

  out.trajectory = trajectory_from_config(cfg);

  out.camera = camera_from_config(cfg, "rig");
  out.baselines = cfg.get_doubles("rig", "baselines");
  for (double b : out.baselines)
    if (!(b > 0.0)) cfg.fail_at("rig", "baselines", "baselines must be > 0");

  out.sim.dtau = cfg.get_double("events", "dtau");
  if (!(out.sim.dtau > 0.0 && out.sim.dtau <= 1.0))
    cfg.fail_at("events", "dtau", "must be in (0,1]");
  out.sim.t_span_us = cfg.get_uint("events", "t_span_us");
  out.sim.threshold_lo =
      cfg.get_double_or("events", "threshold_min", out.sim.threshold_lo);
  out.sim.threshold_hi =
      cfg.get_double_or("events", "threshold_max", out.sim.threshold_hi);
  if (!(out.sim.threshold_lo > 0.0 &&
        out.sim.threshold_hi >= out.sim.threshold_lo))
    cfg.fail_at("events", "threshold_min", "bad threshold range");
  out.sim.cap_left = cfg.get_uint_or("events", "cap_left", out.sim.cap_left);
  out.sim.cap_right =
      cfg.get_uint_or("events", "cap_right", out.sim.cap_right);
  if (out.sim.cap_left == 0 || out.sim.cap_right == 0)
    cfg.fail_at("events", "cap_left", "event caps must be positive");
  out.sim.max_subdivision = static_cast<int>(
      cfg.get_int_or("events", "max_subdivision", out.sim.max_subdivision));

  out.out_dir = cfg.get_or("output", "dir", out.out_dir);
  out.samples = static_cast<int>(cfg.get_int_or("output", "samples", 0));
  out.seed = cfg.get_uint_or("output", "seed", 0);
  out.workers = static_cast<int>(cfg.get_int_or("output", "workers", 1));
  if (out.workers < 1) cfg.fail_at("output", "workers", "must be >= 1");

  out.tencode_count = cfg.get_uint_or("repr", "tencode_count", 0);
  out.voxel_bins =
      static_cast<int>(cfg.get_int_or("repr", "voxel_bins", out.voxel_bins));
  if (out.voxel_bins < 1) cfg.fail_at("repr", "voxel_bins", "must be >= 1");

  out.mu = cfg.get_double_or("confidence", "mu", out.mu);
  out.sim.render.invert_size_term =
      cfg.get_bool_or("confidence", "invert_size_term", false);
  return out;
}

inline const std::map<std::string, std::set<std::string>>& rig_pair_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"rgb_camera",
       {"fx", "fy", "cx", "cy", "width", "height", "baseline"}},
      {"event_camera",
       {"fx", "fy", "cx", "cy", "width", "height", "baseline"}},
      {"extrinsic", {"pose"}},
      {"distill", {"z_min", "z_max"}},
  };
  return schema;
}

inline RigPair rig_pair_from_config(const ConfigFile& cfg) {
  cfg.check_schema(rig_pair_schema());
  RigPair rigs;
  rigs.rgb.camera = camera_from_config(cfg, "rgb_camera");
  rigs.rgb.baseline = cfg.get_double("rgb_camera", "baseline");
  rigs.event.camera = camera_from_config(cfg, "event_camera");
  rigs.event.baseline = cfg.get_double("event_camera", "baseline");
  if (cfg.has("extrinsic", "pose"))
    rigs.extrinsic =
        detail::parse_pose_values(cfg.get_doubles("extrinsic", "pose"));
  if (!rigs.valid())
    throw DataError(cfg.name() + ": invalid rig pair");
  return rigs;
}

inline DistillOptions distill_options_from_config(const ConfigFile& cfg) {
  DistillOptions opt;
  opt.z_min = cfg.get_double_or("distill", "z_min", opt.z_min);
  opt.z_max = cfg.get_double_or("distill", "z_max", opt.z_max);
  if (!(opt.z_min > 0.0 && opt.z_max > opt.z_min))
    throw DataError(cfg.name() + ": [distill]: bad depth clip range");
  return opt;
}

}  // namespace eventforge
