#pragma once

#include <cmath>
#include <functional>

#include "ctlo/lie.hpp"

namespace ctlo::sim {

/// Integral of a C1 smoothstep ramp: zero before t_on, unit rate after
/// t_on + ramp. Motion curves built on warped time hold still through the
/// stationary initialization span and ease into motion without velocity
/// jumps.
inline double warped_time(double t, double t_on, double ramp) {
  if (t <= t_on) return 0.0;
  const double x = (t - t_on) / ramp;
  if (x >= 1.0) return (t - t_on) - 0.5 * ramp;
  const double x3 = x * x * x;
  return ramp * (x3 - 0.5 * x3 * x);
}

/// d/dt of warped_time: the smoothstep itself, in [0, 1].
inline double warp_rate(double t, double t_on, double ramp) {
  if (t <= t_on) return 0.0;
  const double x = (t - t_on) / ramp;
  if (x >= 1.0) return 1.0;
  return x * x * (3.0 - 2.0 * x);
}

/// Analytic ground-truth motion: closed-form world position and a rotation
/// about a fixed axis with a closed-form angle. Starts at identity (the world
/// frame is the starting pose) and is C1 in time.
struct GroundTruth {
  std::function<Vec3(double)> position;    // world, p(0) = 0
  std::function<Vec3(double)> velocity;    // dp/dt, world
  Vec3 rot_axis = Vec3::UnitZ();           // unit
  std::function<double(double)> angle;     // radians, angle(0) = 0
  std::function<double(double)> angle_rate;

  Pose pose(double t) const {
    Pose T;
    T.R = so3::exp(rot_axis * angle(t));
    T.t = position(t);
    return T;
  }

  /// Body twist (rho, theta): body-frame linear velocity and angular rate.
  Twist body_twist(double t) const {
    const Pose T = pose(t);
    Twist w;
    w.head<3>() = T.R.transpose() * velocity(t);
    w.tail<3>() = rot_axis * angle_rate(t);
    return w;
  }
};

inline GroundTruth stationary_truth() {
  GroundTruth g;
  g.position = [](double) { return Vec3::Zero(); };
  g.velocity = [](double) { return Vec3::Zero(); };
  g.angle = [](double) { return 0.0; };
  g.angle_rate = [](double) { return 0.0; };
  return g;
}

/// Straight-line translation with optional fixed-axis rotation, eased in
/// after the stationary initialization span.
inline GroundTruth constant_velocity_truth(const Vec3& v, const Vec3& omega,
                                           double t_on = 0.3, double ramp = 0.4) {
  GroundTruth g;
  g.position = [=](double t) { return v * warped_time(t, t_on, ramp); };
  g.velocity = [=](double t) { return v * warp_rate(t, t_on, ramp); };
  const double w = omega.norm();
  g.rot_axis = w > 0 ? Vec3(omega / w) : Vec3::UnitZ();
  g.angle = [=](double t) { return w * warped_time(t, t_on, ramp); };
  g.angle_rate = [=](double t) { return w * warp_rate(t, t_on, ramp); };
  return g;
}

/// Handheld loop: a slow circle with vertical bobbing and an oscillating
/// rotation about a tilted axis. Peak speed ~1.2 m/s, peak rate ~0.7 rad/s.
inline GroundTruth handheld_truth(double t_on = 0.3, double ramp = 0.5) {
  GroundTruth g;
  const double r = 2.5;        // circle radius
  const double circ = 0.25;    // circle rate rad/s
  const double bob_a = 0.3, bob_w = 1.5;
  g.position = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    const double beta = circ * w;
    return Vec3(r * std::cos(beta) - r, r * std::sin(beta), bob_a * std::sin(bob_w * w));
  };
  g.velocity = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    const double dw = warp_rate(t, t_on, ramp);
    const double beta = circ * w;
    return Vec3(-r * circ * std::sin(beta) * dw, r * circ * std::cos(beta) * dw,
                bob_a * bob_w * std::cos(bob_w * w) * dw);
  };
  g.rot_axis = Vec3(0.25, 0.15, 0.96).normalized();
  const double wig_a = 0.35, wig_w = 1.3;
  g.angle = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    return circ * w + wig_a * std::sin(wig_w * w);
  };
  g.angle_rate = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    const double dw = warp_rate(t, t_on, ramp);
    return (circ + wig_a * wig_w * std::cos(wig_w * w)) * dw;
  };
  return g;
}

/// Aggressive yaw spin reaching omega_max after the ramp, with a small
/// positional wobble.
inline GroundTruth spin_truth(double omega_max, double t_on = 0.3, double ramp = 0.7) {
  GroundTruth g;
  const double wob_a = 0.05, wob_w = 2.0;
  g.position = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    return Vec3(wob_a * std::sin(wob_w * w), 0.0, 0.5 * wob_a * std::sin(0.7 * wob_w * w));
  };
  g.velocity = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    const double dw = warp_rate(t, t_on, ramp);
    return Vec3(wob_a * wob_w * std::cos(wob_w * w) * dw, 0.0,
                0.5 * wob_a * 0.7 * wob_w * std::cos(0.7 * wob_w * w) * dw);
  };
  g.rot_axis = Vec3::UnitZ();
  g.angle = [=](double t) { return omega_max * warped_time(t, t_on, ramp); };
  g.angle_rate = [=](double t) { return omega_max * warp_rate(t, t_on, ramp); };
  return g;
}

/// Corridor walk along +x with a slow vertical sinusoid (the component a
/// z-blind sensor cannot see).
inline GroundTruth corridor_truth(double speed = 1.0, double t_on = 0.3,
                                  double ramp = 0.5) {
  GroundTruth g;
  const double z_a = 0.4, z_w = 0.5;
  g.position = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    return Vec3(speed * w, 0.0, z_a * std::sin(z_w * w));
  };
  g.velocity = [=](double t) {
    const double w = warped_time(t, t_on, ramp);
    const double dw = warp_rate(t, t_on, ramp);
    return Vec3(speed * dw, 0.0, z_a * z_w * std::cos(z_w * w) * dw);
  };
  g.rot_axis = Vec3::UnitZ();
  g.angle = [](double) { return 0.0; };
  g.angle_rate = [](double) { return 0.0; };
  return g;
}

/// Brisk translation with a yaw wobble, used around the visibility-blackout
/// scenario.
inline GroundTruth blackout_truth(double speed = 1.5, double t_on = 0.3,
                                  double ramp = 0.5) {
  GroundTruth g;
  g.position = [=](double t) { return Vec3(speed * warped_time(t, t_on, ramp), 0.0, 0.0); };
  g.velocity = [=](double t) { return Vec3(speed * warp_rate(t, t_on, ramp), 0.0, 0.0); };
  g.rot_axis = Vec3::UnitZ();
  const double a = 0.6, w = 1.4;
  g.angle = [=](double t) { return a * std::sin(w * warped_time(t, t_on, ramp)); };
  g.angle_rate = [=](double t) {
    return a * w * std::cos(w * warped_time(t, t_on, ramp)) * warp_rate(t, t_on, ramp);
  };
  return g;
}

}  // namespace ctlo::sim
