#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "ctlo/lie.hpp"

namespace ctlo::sim {

/// Bounded plane patch: point + normal with a finite extent spanned by two
/// in-plane axes. Scenes are planar-only so that point-to-plane registration
/// is exact on them and estimator error is isolated from scene-model error.
struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 u_axis = Vec3::UnitX();
  Vec3 v_axis = Vec3::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;
  int id = 0;

  static Plane make(const Vec3& point, const Vec3& normal, const Vec3& u_axis,
                    double half_u, double half_v, int id = 0) {
    Plane p;
    p.point = point;
    p.normal = normal.normalized();
    p.u_axis = (u_axis - u_axis.dot(p.normal) * p.normal).normalized();
    p.v_axis = p.normal.cross(p.u_axis);
    p.half_u = half_u;
    p.half_v = half_v;
    p.id = id;
    return p;
  }
};

struct RayHit {
  double distance = 0.0;
  int plane_id = -1;
};

struct Scene {
  std::vector<Plane> planes;

  /// Nearest positive ray-plane intersection within plane extents.
  /// `direction` must be unit-norm.
  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& direction,
                                double max_range =
                                    std::numeric_limits<double>::infinity()) const {
    std::optional<RayHit> best;
    for (const Plane& pl : planes) {
      const double denom = direction.dot(pl.normal);
      if (std::abs(denom) < 1e-12) continue;
      const double d = (pl.point - origin).dot(pl.normal) / denom;
      if (d <= 1e-9 || d > max_range) continue;
      if (best && d >= best->distance) continue;
      const Vec3 hit = origin + d * direction - pl.point;
      if (std::abs(hit.dot(pl.u_axis)) > pl.half_u) continue;
      if (std::abs(hit.dot(pl.v_axis)) > pl.half_v) continue;
      best = RayHit{d, pl.id};
    }
    return best;
  }

  /// Distance from p to the closest plane patch that contains its projection;
  /// infinity when no patch does. Used by membership oracles.
  double plane_distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Plane& pl : planes) {
      const Vec3 d = p - pl.point;
      if (std::abs(d.dot(pl.u_axis)) > pl.half_u + 1e-6) continue;
      if (std::abs(d.dot(pl.v_axis)) > pl.half_v + 1e-6) continue;
      best = std::min(best, std::abs(d.dot(pl.normal)));
    }
    return best;
  }

  int add(const Plane& p) {
    Plane q = p;
    q.id = static_cast<int>(planes.size());
    planes.push_back(q);
    return q.id;
  }
};

/// Axis-aligned box room: six inward-facing wall patches.
inline Scene make_box(const Vec3& center, const Vec3& size) {
  Scene s;
  const Vec3 h = 0.5 * size;
  s.add(Plane::make(center + Vec3(h.x(), 0, 0), -Vec3::UnitX(), Vec3::UnitY(), h.y(), h.z()));
  s.add(Plane::make(center - Vec3(h.x(), 0, 0), Vec3::UnitX(), Vec3::UnitY(), h.y(), h.z()));
  s.add(Plane::make(center + Vec3(0, h.y(), 0), -Vec3::UnitY(), Vec3::UnitX(), h.x(), h.z()));
  s.add(Plane::make(center - Vec3(0, h.y(), 0), Vec3::UnitY(), Vec3::UnitX(), h.x(), h.z()));
  s.add(Plane::make(center + Vec3(0, 0, h.z()), -Vec3::UnitZ(), Vec3::UnitX(), h.x(), h.y()));
  s.add(Plane::make(center - Vec3(0, 0, h.z()), Vec3::UnitZ(), Vec3::UnitX(), h.x(), h.y()));
  return s;
}

}  // namespace ctlo::sim
