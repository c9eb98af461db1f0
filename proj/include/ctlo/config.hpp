#pragma once

#include <Eigen/Geometry>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctlo/solver.hpp"
#include "ctlo/types.hpp"

namespace ctlo {

/// Raised on malformed input files (config, point streams, trajectories).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OdometryMode { kContinuous, kDeskewedDiscrete };

struct OdometryConfig {
  int segments = 4;
  double dt = 0.03;
  double sigma_r = 0.1;
  double sigma_v = 0.05;
  double voxel_size = 0.4;
  double max_range = 100.0;
  double init_duration = 0.3;
  double huber_threshold = 0.3;
  OdometryMode mode = OdometryMode::kContinuous;
  int scans_per_window = 4;      // deskewed-discrete window length
  int segment_point_cap = 4096;  // uniform downsampling budget per segment
  double planarity_max = 0.1;
  int min_correspondences = 50;
  bool smoothness_frozen = false;
  std::vector<Pose> extrinsics{Pose::identity()};

  void validate() const {
    if (segments < 1) throw DataError("config: segments must be >= 1");
    if (dt <= 0 || sigma_r <= 0 || sigma_v <= 0 || voxel_size <= 0 ||
        max_range <= 0 || init_duration <= 0)
      throw DataError("config: durations, sigmas and sizes must be positive");
    if (scans_per_window < 2) throw DataError("config: scans_per_window must be >= 2");
    if (extrinsics.empty()) throw DataError("config: at least one extrinsic required");
  }

  SolverConfig solver() const {
    SolverConfig s;
    s.sigma_r = sigma_r;
    s.sigma_v = sigma_v;
    s.huber_threshold = huber_threshold;
    s.min_correspondences = min_correspondences;
    s.smoothness_frozen = smoothness_frozen;
    return s;
  }

  SensorRig rig() const { return SensorRig{extrinsics}; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline Pose parse_extrinsic(const std::string& value, int line_no) {
  std::istringstream iss(value);
  double tx, ty, tz, qx, qy, qz, qw;
  if (!(iss >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
    throw DataError("config line " + std::to_string(line_no) +
                    ": extrinsic needs 7 numbers (tx ty tz qx qy qz qw)");
  Eigen::Quaterniond q(qw, qx, qy, qz);
  if (std::abs(q.norm() - 1.0) > 1e-3)
    throw DataError("config line " + std::to_string(line_no) +
                    ": extrinsic quaternion not normalized");
  q.normalize();
  Pose T;
  T.R = q.toRotationMatrix();
  T.t = Vec3(tx, ty, tz);
  return T;
}

}  // namespace detail

/// Flat `key = value` config parser (`#` starts a comment). Per-sensor
/// extrinsics use keys extrinsic0, extrinsic1, ... with 7 numbers
/// tx ty tz qx qy qz qw.
inline OdometryConfig parse_config(std::istream& is) {
  OdometryConfig cfg;
  std::vector<std::pair<int, Pose>> extrinsics;
  std::string line;
  int line_no = 0;

  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));

    auto as_double = [&] {
      try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw DataError("config line " + std::to_string(line_no) + ": bad number '" + value + "'");
      }
    };
    auto as_int = [&] { return static_cast<int>(as_double()); };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw DataError("config line " + std::to_string(line_no) + ": bad bool '" + value + "'");
    };

    if (key == "segments") cfg.segments = as_int();
    else if (key == "dt") cfg.dt = as_double();
    else if (key == "sigma_r") cfg.sigma_r = as_double();
    else if (key == "sigma_v") cfg.sigma_v = as_double();
    else if (key == "voxel_size") cfg.voxel_size = as_double();
    else if (key == "max_range") cfg.max_range = as_double();
    else if (key == "init_duration") cfg.init_duration = as_double();
    else if (key == "huber_threshold") cfg.huber_threshold = as_double();
    else if (key == "scans_per_window") cfg.scans_per_window = as_int();
    else if (key == "segment_point_cap") cfg.segment_point_cap = as_int();
    else if (key == "planarity_max") cfg.planarity_max = as_double();
    else if (key == "min_correspondences") cfg.min_correspondences = as_int();
    else if (key == "smoothness_frozen") cfg.smoothness_frozen = as_bool();
    else if (key == "mode") {
      if (value == "continuous") cfg.mode = OdometryMode::kContinuous;
      else if (value == "deskewed") cfg.mode = OdometryMode::kDeskewedDiscrete;
      else throw DataError("config line " + std::to_string(line_no) +
                           ": mode must be continuous or deskewed");
    } else if (key.rfind("extrinsic", 0) == 0) {
      int idx = 0;
      try {
        idx = std::stoi(key.substr(9));
      } catch (const std::exception&) {
        throw DataError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
      }
      extrinsics.emplace_back(idx, detail::parse_extrinsic(value, line_no));
    } else {
      throw DataError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }

  if (!extrinsics.empty()) {
    int max_idx = 0;
    for (const auto& [idx, T] : extrinsics) max_idx = std::max(max_idx, idx);
    cfg.extrinsics.assign(max_idx + 1, Pose::identity());
    std::vector<bool> seen(max_idx + 1, false);
    for (const auto& [idx, T] : extrinsics) {
      cfg.extrinsics[idx] = T;
      seen[idx] = true;
    }
    for (int i = 0; i <= max_idx; ++i)
      if (!seen[i]) throw DataError("config: extrinsic" + std::to_string(i) + " missing");
  }
  cfg.validate();
  return cfg;
}

inline OdometryConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("config: cannot open " + path);
  return parse_config(f);
}

}  // namespace ctlo
