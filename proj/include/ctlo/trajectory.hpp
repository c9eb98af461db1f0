#pragma once

#include <stdexcept>
#include <vector>

#include "ctlo/lie.hpp"

namespace ctlo {

/// Piecewise-linear continuous-time trajectory over [t0, t0 + K*dt) with K
/// equidistant segments and K+1 control poses. Segment k (1-based) covers
/// [t_{k-1}, t_k); within it the pose is the geodesic interpolation
/// T_{k-1} * Exp(alpha * Log(T_{k-1}^-1 T_k)).
///
/// The final knot time t_K is not queryable here: it belongs to the next
/// window after the slide.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Pose> controls;  // K+1 poses

  Trajectory() = default;
  Trajectory(double start, double segment_dt, std::vector<Pose> knots)
      : t0(start), dt(segment_dt), controls(std::move(knots)) {
    if (controls.size() < 2) throw std::invalid_argument("trajectory: needs >= 2 control poses");
    if (dt <= 0.0) throw std::invalid_argument("trajectory: dt must be positive");
  }

  static Trajectory stationary(double start, double segment_dt, int segments,
                               const Pose& pose = Pose::identity()) {
    return Trajectory(start, segment_dt,
                      std::vector<Pose>(static_cast<size_t>(segments) + 1, pose));
  }

  int segments() const { return static_cast<int>(controls.size()) - 1; }
  double end_time() const { return t0 + segments() * dt; }
  double knot_time(int k) const { return t0 + k * dt; }

  /// 1-based segment index for a timestamp in [t0, end).
  int segment_index(double t) const {
    check_in_window(t);
    int k = static_cast<int>(std::floor((t - t0) / dt));
    if (k < 0) k = 0;
    if (k >= segments()) k = segments() - 1;
    return k + 1;
  }

  Pose pose_at(double t) const {
    const int k = segment_index(t);
    const Pose& prev = controls[k - 1];
    double alpha = (t - (t0 + (k - 1) * dt)) / dt;
    if (alpha <= 0.0) return prev;
    if (alpha > 1.0) alpha = 1.0;
    return prev * exp(alpha * ominus(controls[k], prev));
  }

  /// tau_k = T_k (-) T_{k-1}; divide by dt for the generalized velocity.
  Twist segment_twist(int k) const {
    if (k < 1 || k > segments())
      throw std::out_of_range("trajectory: segment index out of range");
    return ominus(controls[k], controls[k - 1]);
  }

  /// Slides the window by one segment: drops T_0, shifts t0 by dt and appends
  /// `predicted` as the new final control.
  Trajectory advanced(const Pose& predicted) const {
    std::vector<Pose> next(controls.begin() + 1, controls.end());
    next.push_back(predicted);
    return Trajectory(t0 + dt, dt, std::move(next));
  }

 private:
  void check_in_window(double t) const {
    if (!(t >= t0 && t < end_time()))
      throw std::out_of_range("trajectory: query time outside [t0, tK)");
  }
};

}  // namespace ctlo
