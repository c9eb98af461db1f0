#pragma once

#include <Eigen/Geometry>

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ctlo/config.hpp"
#include "ctlo/types.hpp"

namespace ctlo::io {

/// TUM trajectory line: t tx ty tz qx qy qz qw.
inline void write_tum(const std::string& path, std::span<const StampedPose> poses) {
  std::ofstream os(path);
  if (!os) throw DataError("tum writer: cannot open " + path);
  os << std::setprecision(12);
  for (const auto& sp : poses) {
    Eigen::Quaterniond q(sp.pose.R);
    q.normalize();
    os << sp.t << ' ' << sp.pose.t.x() << ' ' << sp.pose.t.y() << ' '
       << sp.pose.t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
       << q.w() << '\n';
  }
}

inline std::vector<StampedPose> read_tum(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("tum reader: cannot open " + path);
  std::vector<StampedPose> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream iss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(iss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw DataError(path + ": malformed TUM line " + std::to_string(line_no));
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-3)
      throw DataError(path + ": unnormalized quaternion at line " + std::to_string(line_no));
    q.normalize();
    StampedPose sp;
    sp.t = t;
    sp.pose.R = q.toRotationMatrix();
    sp.pose.t = Vec3(tx, ty, tz);
    out.push_back(sp);
  }
  return out;
}

}  // namespace ctlo::io
