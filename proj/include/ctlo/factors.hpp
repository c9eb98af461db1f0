#pragma once

#include <stdexcept>
#include <vector>

#include "ctlo/lie.hpp"
#include "ctlo/types.hpp"
#include "ctlo/voxel_map.hpp"

namespace ctlo {

/// Point-to-plane residual of one measurement against the continuous-time
/// pose interpolated at the measurement's own timestamp.
///
/// residual = n^T (phi_k(t) * T_BL * p - q), with phi_k(t) = T_prev (+)
/// (alpha * (T_next (-) T_prev)). In deskewed-discrete mode alpha is pinned
/// to 0 or 1, which attaches the point to a single control pose.
struct GeometricFactor {
  Measurement meas;
  Vec3 p_body = Vec3::Zero();  // extrinsic applied once, at association
  PlaneFit plane;
  int segment = 1;             // 1-based
  double alpha = 0.0;          // (t - t_{k-1}) / dt
  double weight = 100.0;       // 1 / sigma_r^2
};

struct GeometricEval {
  double residual = 0.0;
  Eigen::Matrix<double, 1, 6> J_prev = Eigen::Matrix<double, 1, 6>::Zero();
  Eigen::Matrix<double, 1, 6> J_next = Eigen::Matrix<double, 1, 6>::Zero();
};

/// Per-segment quantities shared by every factor in the segment; recomputed
/// from the current control values at each solver iteration.
struct SegmentContext {
  Twist tau = Twist::Zero();
  Mat6 Jl_inv = Mat6::Identity();
  Mat6 Jr_inv = Mat6::Identity();

  SegmentContext() = default;
  SegmentContext(const Pose& prev, const Pose& next) {
    tau = ominus(next, prev);
    Jl_inv = left_jacobian_inv(tau);
    Jr_inv = right_jacobian_inv(tau);
  }
};

inline GeometricEval geometric_eval(const GeometricFactor& f, const Pose& T_prev,
                                    const SegmentContext& ctx) {
  const double a = f.alpha;
  const Pose pose_t = T_prev * exp(a * ctx.tau);

  GeometricEval out;
  out.residual = f.plane.normal.dot(pose_t * f.p_body - f.plane.point);

  Eigen::Matrix<double, 1, 6> de_dphi;
  de_dphi.head<3>() = f.plane.normal.transpose() * pose_t.R;
  de_dphi.tail<3>() = -de_dphi.head<3>() * skew(f.p_body);

  // d phi / d T_prev = (1-a) Jr((a-1) tau) Jl^-1(tau)
  // d phi / d T_next =     a Jr(a tau)     Jr^-1(tau)
  if (a < 1.0)
    out.J_prev = (1.0 - a) * (de_dphi * right_jacobian((a - 1.0) * ctx.tau)) * ctx.Jl_inv;
  if (a > 0.0)
    out.J_next = a * (de_dphi * right_jacobian(a * ctx.tau)) * ctx.Jr_inv;
  return out;
}

inline GeometricEval geometric_eval(const GeometricFactor& f, const Pose& T_prev,
                                    const Pose& T_next) {
  return geometric_eval(f, T_prev, SegmentContext(T_prev, T_next));
}

/// Residual only (used by the energy sweeps).
inline double geometric_residual(const GeometricFactor& f, const Pose& T_prev,
                                 const Twist& tau) {
  const Pose pose_t = T_prev * exp(f.alpha * tau);
  return f.plane.normal.dot(pose_t * f.p_body - f.plane.point);
}

/// Smoothness residual between consecutive segment twists,
/// e_v = (T_k (-) T_{k-1}) - (T_{k-1} (-) T_{k-2}).
///
/// The factor bridging into the previous window freezes the earlier twist as
/// a pseudo-velocity measurement; factors wholly inside the window couple
/// three live control poses (the frozen variant is selectable per config).
struct KinematicFactor {
  int segment = 1;             // k of the later twist tau_k
  bool frozen = true;          // true: previous twist is the fixed pseudo-twist
  Twist pseudo_twist = Twist::Zero();
  double weight = 400.0;       // 1 / sigma_v^2, applied per component
};

struct KinematicEval {
  Vec6 residual = Vec6::Zero();
  Mat6 J_a = Mat6::Zero();  // d e / d T_{k-2} (live variant only)
  Mat6 J_b = Mat6::Zero();  // d e / d T_{k-1}
  Mat6 J_c = Mat6::Zero();  // d e / d T_k
};

inline KinematicEval kinematic_eval_frozen(const Twist& pseudo, const Pose& T_prev,
                                           const Pose& T_next) {
  const Twist tau = ominus(T_next, T_prev);
  KinematicEval out;
  out.residual = tau - pseudo;
  out.J_b = -left_jacobian_inv(tau);
  out.J_c = right_jacobian_inv(tau);
  return out;
}

inline KinematicEval kinematic_eval_live(const Pose& T_a, const Pose& T_b,
                                         const Pose& T_c) {
  const Twist tau_prev = ominus(T_b, T_a);
  const Twist tau = ominus(T_c, T_b);
  KinematicEval out;
  out.residual = tau - tau_prev;
  out.J_a = left_jacobian_inv(tau_prev);
  out.J_b = -left_jacobian_inv(tau) - right_jacobian_inv(tau_prev);
  out.J_c = right_jacobian_inv(tau);
  return out;
}

inline KinematicEval kinematic_eval(const KinematicFactor& f, const Pose& T_a,
                                    const Pose& T_b, const Pose& T_c) {
  return f.frozen ? kinematic_eval_frozen(f.pseudo_twist, T_b, T_c)
                  : kinematic_eval_live(T_a, T_b, T_c);
}

/// Quadratic energy carried across sliding windows,
/// E = 1/2 delta^T H delta + b^T delta with delta = s (-) s_bar stacked over
/// the retained poses. The Jacobian of delta is evaluated at the frozen
/// linearization point (first-estimate policy), so the Hessian contribution
/// is the constant H while the residual side tracks the current values.
struct MarginalizationPrior {
  MatX H;
  VecX b;
  std::vector<Pose> lin_points;

  bool empty() const { return lin_points.empty(); }
  int dim() const { return static_cast<int>(lin_points.size()) * 6; }

  static MarginalizationPrior single(const Mat6& H6, const Vec6& b6, const Pose& lin) {
    MarginalizationPrior p;
    p.H = H6;
    p.b = b6;
    p.lin_points = {lin};
    return p;
  }
};

struct PriorEval {
  double energy = 0.0;
  VecX delta;     // stacked current (-) lin_point
  VecX gradient;  // H * delta + b
};

inline PriorEval prior_eval(const MarginalizationPrior& prior,
                            std::span<const Pose> current) {
  if (static_cast<int>(current.size()) != static_cast<int>(prior.lin_points.size()))
    throw std::invalid_argument("prior_eval: pose count mismatch");
  if (prior.H.rows() != prior.dim() || prior.b.size() != prior.dim())
    throw std::invalid_argument("prior_eval: dimension mismatch");

  PriorEval out;
  out.delta.resize(prior.dim());
  for (size_t i = 0; i < current.size(); ++i)
    out.delta.segment<6>(static_cast<int>(i) * 6) =
        ominus(current[i], prior.lin_points[i]);
  out.energy = 0.5 * out.delta.dot(prior.H * out.delta) + prior.b.dot(out.delta);
  out.gradient = prior.H * out.delta + prior.b;
  return out;
}

/// Huber loss on a scalar residual: returns {loss value, IRLS weight}.
inline std::pair<double, double> huber(double r, double threshold) {
  const double a = std::abs(r);
  if (threshold <= 0.0 || a <= threshold) return {0.5 * r * r, 1.0};
  return {threshold * (a - 0.5 * threshold), threshold / a};
}

}  // namespace ctlo
