#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

namespace ctlo {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

/// Tangent vector of SE(3), ordered translation-first: (rho, theta).
/// rho is the translational part in meters, theta the rotational part in
/// radians. head<3>() == rho, tail<3>() == theta, everywhere in this library.
using Twist = Vec6;

// Below this angle the closed forms switch to their Taylor expansions.
inline constexpr double kTaylorAngle = 1e-4;
// Rotation angles at or beyond this are rejected by log(): the principal
// branch is not unique at pi.
inline constexpr double kMaxLogAngle = M_PI - 1e-9;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

namespace so3 {

inline Mat3 exp(const Vec3& theta) {
  const double th = theta.norm();
  const Mat3 tx = skew(theta);
  double a, b;  // sin(th)/th, (1-cos(th))/th^2
  if (th < kTaylorAngle) {
    const double th2 = th * th;
    a = 1.0 - th2 / 6.0;
    b = 0.5 - th2 / 24.0;
  } else {
    a = std::sin(th) / th;
    const double s = std::sin(0.5 * th);
    b = 2.0 * s * s / (th * th);
  }
  return Mat3::Identity() + a * tx + b * tx * tx;
}

/// Principal logarithm. Throws std::domain_error when the angle reaches pi,
/// where the branch is not unique.
inline Vec3 log(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  const double sign = q.w() < 0.0 ? -1.0 : 1.0;
  const double vn = q.vec().norm();
  const double w = std::abs(q.w());
  const double angle = 2.0 * std::atan2(vn, w);
  if (angle >= kMaxLogAngle)
    throw std::domain_error("so3::log: rotation angle at pi, branch not unique");
  if (vn < 1e-12) return 2.0 * sign * q.vec();
  return (sign * angle / vn) * q.vec();
}

inline Mat3 left_jacobian(const Vec3& theta) {
  const double th = theta.norm();
  const Mat3 tx = skew(theta);
  double b, c;  // (1-cos)/th^2, (th-sin)/th^3
  if (th < kTaylorAngle) {
    const double th2 = th * th;
    b = 0.5 - th2 / 24.0;
    c = 1.0 / 6.0 - th2 / 120.0;
  } else {
    const double s = std::sin(0.5 * th);
    b = 2.0 * s * s / (th * th);
    c = (th - std::sin(th)) / (th * th * th);
  }
  return Mat3::Identity() + b * tx + c * tx * tx;
}

inline Mat3 left_jacobian_inv(const Vec3& theta) {
  const double th = theta.norm();
  if (th >= kMaxLogAngle)
    throw std::domain_error("so3::left_jacobian_inv: angle at pi");
  const Mat3 tx = skew(theta);
  double c;  // 1/th^2 - (1+cos)/(2 th sin)
  if (th < kTaylorAngle) {
    c = 1.0 / 12.0 + th * th / 720.0;
  } else {
    c = 1.0 / (th * th) -
        (1.0 + std::cos(th)) / (2.0 * th * std::sin(th));
  }
  return Mat3::Identity() - 0.5 * tx + c * tx * tx;
}

}  // namespace so3

/// Rigid transform on SE(3). Composition, inverse and point action follow the
/// usual homogeneous-matrix conventions; the rotation block is kept
/// orthonormal by renormalize() after solver updates.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Pose inverse() const {
    Pose out;
    out.R = R.transpose();
    out.t = -(out.R * t);
    return out;
  }

  Pose operator*(const Pose& o) const {
    Pose out;
    out.R = R * o.R;
    out.t = R * o.t + t;
    return out;
  }

  Vec3 operator*(const Vec3& p) const { return R * p + t; }

  double rotation_angle() const {
    Eigen::Quaterniond q(R);
    return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
  }

  /// Projects R onto the nearest orthonormal matrix (Frobenius sense).
  void renormalize() {
    Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0.0) {
      Mat3 flip = Mat3::Identity();
      flip(2, 2) = -1.0;
      R = svd.matrixU() * flip * svd.matrixV().transpose();
    }
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }
};

inline Vec3 act(const Pose& T, const Vec3& p) { return T * p; }

inline Pose exp(const Twist& tau) {
  const Vec3 rho = tau.head<3>();
  const Vec3 theta = tau.tail<3>();
  Pose out;
  out.R = so3::exp(theta);
  out.t = so3::left_jacobian(theta) * rho;
  return out;
}

inline Twist log(const Pose& T) {
  const Vec3 theta = so3::log(T.R);
  Twist tau;
  tau.tail<3>() = theta;
  tau.head<3>() = so3::left_jacobian_inv(theta) * T.t;
  return tau;
}

inline Pose oplus(const Pose& T, const Twist& tau) { return T * exp(tau); }

/// ominus(a, b) = a (-) b = Log(b^-1 * a).
inline Twist ominus(const Pose& a, const Pose& b) {
  return log(b.inverse() * a);
}

namespace detail {

// Coupling block of the SE(3) left Jacobian (the Q matrix). Coefficients are
// the standard series (th - sin)/th^3, (th^2 + 2cos - 2)/(2 th^4),
// (2th - 3sin + th cos)/(2 th^5).
inline Mat3 se3_q_matrix(const Vec3& rho, const Vec3& theta) {
  const double th = theta.norm();
  const Mat3 rx = skew(rho);
  const Mat3 tx = skew(theta);
  double c1, c2, c3;
  if (th < kTaylorAngle) {
    const double th2 = th * th;
    c1 = 1.0 / 6.0 - th2 / 120.0;
    c2 = 1.0 / 24.0 - th2 / 720.0;
    c3 = 1.0 / 120.0 - th2 / 2520.0;
  } else {
    const double th2 = th * th;
    const double th4 = th2 * th2;
    const double s = std::sin(th);
    const double c = std::cos(th);
    c1 = (th - s) / (th2 * th);
    c2 = (th2 + 2.0 * c - 2.0) / (2.0 * th4);
    c3 = (2.0 * th - 3.0 * s + th * c) / (2.0 * th4 * th);
  }
  const Mat3 txrx = tx * rx;
  const Mat3 rxtx = rx * tx;
  const Mat3 txrxtx = txrx * tx;
  return 0.5 * rx + c1 * (txrx + rxtx + txrxtx) +
         c2 * (tx * txrx + rxtx * tx - 3.0 * txrxtx) +
         c3 * (txrxtx * tx + tx * txrxtx);
}

}  // namespace detail

/// Full coupled 6x6 left Jacobian of SE(3) for the (rho, theta) ordering.
inline Mat6 left_jacobian(const Twist& tau) {
  const Vec3 rho = tau.head<3>();
  const Vec3 theta = tau.tail<3>();
  const Mat3 j = so3::left_jacobian(theta);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.topRightCorner<3, 3>() = detail::se3_q_matrix(rho, theta);
  return out;
}

inline Mat6 left_jacobian_inv(const Twist& tau) {
  const Vec3 rho = tau.head<3>();
  const Vec3 theta = tau.tail<3>();
  const Mat3 ji = so3::left_jacobian_inv(theta);
  const Mat3 q = detail::se3_q_matrix(rho, theta);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = ji;
  out.bottomRightCorner<3, 3>() = ji;
  out.topRightCorner<3, 3>() = -ji * q * ji;
  return out;
}

inline Mat6 right_jacobian(const Twist& tau) { return left_jacobian(-tau); }

inline Mat6 right_jacobian_inv(const Twist& tau) {
  return left_jacobian_inv(-tau);
}

struct Se3Jacobians {
  Mat6 Jr;
  Mat6 Jl;
  Mat6 Jr_inv;
  Mat6 Jl_inv;
};

inline Se3Jacobians jacobians(const Twist& tau) {
  if (tau.tail<3>().norm() >= kMaxLogAngle)
    throw std::domain_error("jacobians: rotation angle at pi");
  return Se3Jacobians{right_jacobian(tau), left_jacobian(tau),
                      right_jacobian_inv(tau), left_jacobian_inv(tau)};
}

}  // namespace ctlo
