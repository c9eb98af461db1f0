#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ctlo/sim/motion.hpp"
#include "ctlo/sim/scene.hpp"
#include "ctlo/types.hpp"

namespace ctlo::sim {

/// Spinning-LiDAR emission model: channels ladder through the vertical field
/// of view while the azimuth sweeps continuously at rev_per_s. Per-point
/// timestamps are strictly increasing within a sweep except in snapshot mode,
/// where a whole sweep shares its start time (pre-deskewed data).
struct ScanPattern {
  int channels = 16;
  double fov_up_deg = 15.0;
  double fov_down_deg = -15.0;
  double rev_per_s = 10.0;
  double points_per_s = 20000.0;
  double max_range = 80.0;
  uint8_t sensor = 0;
  Pose extrinsic;  // sensor-to-body

  Vec3 direction(size_t i) const {
    const double az = 2.0 * M_PI * rev_per_s * (static_cast<double>(i) / points_per_s);
    const int c = static_cast<int>(i) % channels;
    const double el_deg =
        channels == 1 ? 0.5 * (fov_up_deg + fov_down_deg)
                      : fov_down_deg + (fov_up_deg - fov_down_deg) * c / (channels - 1);
    const double el = el_deg * M_PI / 180.0;
    return Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
  }
};

struct SimOptions {
  double duration = 30.0;
  double sigma = 0.01;  // additive Gaussian range noise, meters
  uint64_t seed = 1;
  bool snapshot = false;  // emit pre-deskewed sweeps (one pose, one timestamp)
  double truth_sample_dt = 0.01;

  // Visibility censoring: between [t0, t1) only `plane_id` returns points.
  struct Visibility {
    double t0 = 0.0;
    double t1 = 0.0;
    int plane_id = -1;
  };
  std::optional<Visibility> visibility;
};

struct SimResult {
  std::vector<Measurement> points;  // sorted by timestamp, stable per sensor
  std::vector<StampedPose> truth;   // body poses sampled at truth_sample_dt
};

inline SimResult simulate(const Scene& scene, const GroundTruth& truth,
                          std::span<const ScanPattern> patterns,
                          const SimOptions& opt) {
  SimResult out;

  for (const ScanPattern& pat : patterns) {
    std::mt19937_64 rng(opt.seed * 1000003u + pat.sensor);
    std::normal_distribution<double> noise(0.0, opt.sigma);
    const size_t count = static_cast<size_t>(opt.duration * pat.points_per_s);
    const double sweep_dt = 1.0 / pat.rev_per_s;

    for (size_t i = 0; i < count; ++i) {
      const double t_emit = static_cast<double>(i) / pat.points_per_s;
      const double t = opt.snapshot ? std::floor(t_emit / sweep_dt) * sweep_dt : t_emit;
      const Pose sensor_pose = truth.pose(t) * pat.extrinsic;
      const Vec3 dir_s = pat.direction(i);
      const Vec3 dir_w = sensor_pose.R * dir_s;
      const auto hit = scene.raycast(sensor_pose.t, dir_w, pat.max_range);
      if (!hit) continue;
      if (opt.visibility && t >= opt.visibility->t0 && t < opt.visibility->t1 &&
          hit->plane_id != opt.visibility->plane_id)
        continue;
      const double range = hit->distance + (opt.sigma > 0 ? noise(rng) : 0.0);
      out.points.push_back(Measurement{dir_s * range, t, pat.sensor});
    }
  }

  std::stable_sort(out.points.begin(), out.points.end(),
                   [](const Measurement& a, const Measurement& b) { return a.t < b.t; });

  const size_t samples = static_cast<size_t>(opt.duration / opt.truth_sample_dt) + 1;
  out.truth.reserve(samples);
  for (size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * opt.truth_sample_dt;
    out.truth.push_back(StampedPose{t, truth.pose(t)});
  }
  return out;
}

}  // namespace ctlo::sim
