#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ctlo/config.hpp"
#include "ctlo/sim/simulator.hpp"

namespace ctlo::sim {

/// A named end-to-end scenario: scene, analytic ground truth, sensor rig and
/// simulation options, plus the odometry configuration the scenario is meant
/// to be run with.
struct Preset {
  std::string name;
  Scene scene;
  GroundTruth truth;
  std::vector<ScanPattern> patterns;
  SimOptions options;
  OdometryConfig config;
};

inline Pose roll90_extrinsic() {
  // Vertical mount: rotate 90 degrees about x, so the scan ring sweeps the
  // body x-z plane and sees floor and ceiling.
  Pose T;
  T.R = so3::exp(Vec3(M_PI / 2.0, 0.0, 0.0));
  return T;
}

inline Preset make_preset(const std::string& name, uint64_t seed = 1) {
  Preset p;
  p.name = name;
  p.options.seed = seed;

  if (name == "handheld" || name == "handheld_snapshot") {
    p.scene = make_box(Vec3(-2.5, 0.0, 0.5), Vec3(12.0, 12.0, 4.0));
    p.truth = handheld_truth();
    ScanPattern pat;
    pat.channels = 16;
    pat.fov_up_deg = 15.0;
    pat.fov_down_deg = -15.0;
    pat.rev_per_s = 10.0;
    pat.points_per_s = 20000.0;
    pat.max_range = 60.0;
    p.patterns = {pat};
    p.options.duration = 30.0;
    p.options.sigma = 0.01;
    p.options.snapshot = (name == "handheld_snapshot");
    p.config.segments = 4;
    p.config.dt = 0.03;
    p.config.voxel_size = 0.4;
    if (p.options.snapshot) p.config.mode = OdometryMode::kDeskewedDiscrete;
  } else if (name == "constant_velocity") {
    p.scene = make_box(Vec3(4.0, 0.0, 0.5), Vec3(20.0, 12.0, 4.0));
    p.truth = constant_velocity_truth(Vec3(0.8, 0.1, 0.0), Vec3(0.0, 0.0, 0.05));
    ScanPattern pat;
    pat.max_range = 60.0;
    p.patterns = {pat};
    p.options.duration = 10.0;
    p.options.sigma = 0.01;
    p.config.segments = 4;
    p.config.dt = 0.03;
    p.config.voxel_size = 0.4;
  } else if (name == "spin") {
    p.scene = make_box(Vec3(0.0, 0.0, 0.0), Vec3(10.0, 10.0, 2.0));
    p.truth = spin_truth(15.0);
    ScanPattern pat;
    pat.channels = 16;
    pat.rev_per_s = 10.0;
    pat.points_per_s = 20000.0;
    pat.max_range = 40.0;
    p.patterns = {pat};
    p.options.duration = 10.0;
    p.options.sigma = 0.01;
    p.config.segments = 4;
    p.config.dt = 0.01;
    p.config.voxel_size = 0.2;
  } else if (name == "corridor") {
    // Manhattan-style corridor: vertical walls everywhere the horizontal
    // sensor can reach; floor and ceiling lie outside its narrow fan but
    // inside the vertical sensor's ring.
    Scene s;
    s.add(Plane::make(Vec3(55.0, 3.0, 0.0), -Vec3::UnitY(), Vec3::UnitX(), 65.0, 3.0));
    s.add(Plane::make(Vec3(55.0, -3.0, 0.0), Vec3::UnitY(), Vec3::UnitX(), 65.0, 3.0));
    s.add(Plane::make(Vec3(-5.0, 0.0, 0.0), Vec3::UnitX(), Vec3::UnitY(), 3.0, 3.0));
    s.add(Plane::make(Vec3(55.0, 0.0, -3.0), Vec3::UnitZ(), Vec3::UnitX(), 65.0, 3.0));
    s.add(Plane::make(Vec3(55.0, 0.0, 3.0), -Vec3::UnitZ(), Vec3::UnitX(), 65.0, 3.0));
    // Transverse wall panels (doorway reveals) for along-corridor constraint.
    for (int i = 0; i < 6; ++i) {
      const double x = 6.0 + 8.0 * i;
      s.add(Plane::make(Vec3(x, 2.6, 0.0), Vec3::UnitX(), Vec3::UnitY(), 0.4, 3.0));
      s.add(Plane::make(Vec3(x + 4.0, -2.6, 0.0), Vec3::UnitX(), Vec3::UnitY(), 0.4, 3.0));
    }
    p.scene = s;
    p.truth = corridor_truth(1.0);
    ScanPattern horiz;
    horiz.channels = 8;
    horiz.fov_up_deg = 2.0;
    horiz.fov_down_deg = -2.0;
    horiz.rev_per_s = 10.0;
    horiz.points_per_s = 20000.0;
    horiz.max_range = 40.0;
    horiz.sensor = 0;
    ScanPattern vert = horiz;
    vert.sensor = 1;
    vert.points_per_s = 10000.0;
    vert.extrinsic = roll90_extrinsic();
    p.patterns = {horiz, vert};
    p.options.duration = 30.0;
    p.options.sigma = 0.01;
    p.config.segments = 4;
    p.config.dt = 0.03;
    p.config.voxel_size = 0.4;
    p.config.extrinsics = {Pose::identity(), roll90_extrinsic()};
  } else if (name == "blackout") {
    p.scene = make_box(Vec3(4.0, 0.0, 0.0), Vec3(16.0, 10.0, 3.0));
    p.truth = blackout_truth(1.5);
    ScanPattern pat;
    pat.max_range = 60.0;
    p.patterns = {pat};
    p.options.duration = 6.0;
    p.options.sigma = 0.01;
    // Plane 5 of make_box is the floor; only it stays visible for 0.2 s.
    p.options.visibility = SimOptions::Visibility{3.0, 3.2, 5};
    p.config.segments = 4;
    p.config.dt = 0.03;
    p.config.voxel_size = 0.4;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return p;
}

inline std::vector<std::string> preset_names() {
  return {"handheld", "handheld_snapshot", "constant_velocity",
          "spin",     "corridor",          "blackout"};
}

}  // namespace ctlo::sim
