#pragma once

#include <cstdint>
#include <vector>

#include "ctlo/lie.hpp"

namespace ctlo {

/// One LiDAR return: sensor-frame point, absolute timestamp, sensor index.
struct Measurement {
  Vec3 p = Vec3::Zero();
  double t = 0.0;
  uint8_t sensor = 0;
};

/// Fixed extrinsic calibration of each LiDAR relative to the rig reference
/// frame (the first LiDAR, typically identity). Never optimized.
struct SensorRig {
  std::vector<Pose> extrinsics{Pose::identity()};

  int count() const { return static_cast<int>(extrinsics.size()); }
  const Pose& extrinsic(int j) const { return extrinsics.at(static_cast<size_t>(j)); }
};

struct StampedPose {
  double t = 0.0;
  Pose pose;
};

}  // namespace ctlo
