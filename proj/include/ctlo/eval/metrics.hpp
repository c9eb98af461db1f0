#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ctlo/config.hpp"
#include "ctlo/types.hpp"

namespace ctlo::eval {

inline constexpr double kAssocTolerance = 0.01;  // seconds

/// Nearest-timestamp association between two trajectories.
inline std::vector<std::pair<StampedPose, StampedPose>> associate_poses(
    std::span<const StampedPose> est, std::span<const StampedPose> ref,
    double tol = kAssocTolerance) {
  std::vector<std::pair<StampedPose, StampedPose>> out;
  size_t j = 0;
  for (const auto& e : est) {
    while (j + 1 < ref.size() &&
           std::abs(ref[j + 1].t - e.t) <= std::abs(ref[j].t - e.t))
      ++j;
    if (j < ref.size() && std::abs(ref[j].t - e.t) <= tol) out.emplace_back(e, ref[j]);
  }
  return out;
}

/// Closed-form rigid alignment (no scale) mapping est translations onto ref.
inline Pose align_rigid(std::span<const std::pair<StampedPose, StampedPose>> pairs) {
  const int n = static_cast<int>(pairs.size());
  Vec3 ce = Vec3::Zero(), cr = Vec3::Zero();
  for (const auto& [e, r] : pairs) {
    ce += e.pose.t;
    cr += r.pose.t;
  }
  ce /= n;
  cr /= n;
  Mat3 W = Mat3::Zero();
  for (const auto& [e, r] : pairs) W += (r.pose.t - cr) * (e.pose.t - ce).transpose();
  Eigen::JacobiSVD<Mat3> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1.0;
  Pose T;
  T.R = svd.matrixU() * S * svd.matrixV().transpose();
  T.t = cr - T.R * ce;
  return T;
}

struct AteResult {
  double rmse = 0.0;
  double mean = 0.0;
  double max = 0.0;
  int matches = 0;
  Pose alignment;
};

/// Absolute trajectory error: rigid SE(3) alignment on matched translations,
/// then translational statistics. Needs at least three matched pairs.
inline AteResult compute_ate(std::span<const StampedPose> est,
                             std::span<const StampedPose> ref,
                             double tol = kAssocTolerance) {
  const auto pairs = associate_poses(est, ref, tol);
  if (pairs.size() < 3) throw DataError("ate: insufficient trajectory overlap");
  AteResult out;
  out.matches = static_cast<int>(pairs.size());
  out.alignment = align_rigid(pairs);
  double sq = 0.0;
  for (const auto& [e, r] : pairs) {
    const double d = (r.pose.t - out.alignment * e.pose.t).norm();
    sq += d * d;
    out.mean += d;
    out.max = std::max(out.max, d);
  }
  out.rmse = std::sqrt(sq / pairs.size());
  out.mean /= pairs.size();
  return out;
}

/// Per-axis RMSE without alignment (both trajectories share the world frame
/// by construction: odometry starts at identity). Used for observability
/// comparisons along a specific axis.
inline double axis_rmse(std::span<const StampedPose> est,
                        std::span<const StampedPose> ref, int axis,
                        double tol = kAssocTolerance) {
  const auto pairs = associate_poses(est, ref, tol);
  if (pairs.size() < 3) throw DataError("axis_rmse: insufficient trajectory overlap");
  double sq = 0.0;
  for (const auto& [e, r] : pairs) {
    const double d = r.pose.t(axis) - e.pose.t(axis);
    sq += d * d;
  }
  return std::sqrt(sq / pairs.size());
}

inline std::vector<double> default_rte_lengths() {
  return {10, 20, 30, 40, 50, 60, 70, 80};
}

/// KITTI-style relative translational error, percent drift averaged over all
/// evaluable (start, length) pairs. Invariant to rigid transforms of either
/// trajectory. Segment lengths default to the desk-scale ladder 10..80 m.
inline double compute_rte(std::span<const StampedPose> est,
                          std::span<const StampedPose> ref,
                          std::vector<double> lengths = default_rte_lengths(),
                          double tol = kAssocTolerance) {
  const auto pairs = associate_poses(est, ref, tol);
  if (pairs.size() < 3) throw DataError("rte: insufficient trajectory overlap");

  std::vector<double> dist(pairs.size(), 0.0);
  for (size_t i = 1; i < pairs.size(); ++i)
    dist[i] = dist[i - 1] + (pairs[i].second.pose.t - pairs[i - 1].second.pose.t).norm();

  double err_sum = 0.0;
  size_t count = 0;
  for (double len : lengths) {
    size_t j = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      if (j < i) j = i;
      while (j + 1 < pairs.size() && dist[j] - dist[i] < len) ++j;
      if (dist[j] - dist[i] < len) break;
      const double actual = dist[j] - dist[i];
      const Pose rel_ref = pairs[i].second.pose.inverse() * pairs[j].second.pose;
      const Pose rel_est = pairs[i].first.pose.inverse() * pairs[j].first.pose;
      const Pose err = rel_ref.inverse() * rel_est;
      err_sum += err.t.norm() / actual;
      ++count;
    }
  }
  if (count == 0) throw DataError("rte: trajectory shorter than every segment length");
  return 100.0 * err_sum / static_cast<double>(count);
}

}  // namespace ctlo::eval
