#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "ctlo/lie.hpp"

namespace ctlo {

struct VoxelKey {
  int64_t x = 0;
  int64_t y = 0;
  int64_t z = 0;

  bool operator==(const VoxelKey&) const = default;
};

inline VoxelKey voxel_key(const Vec3& p, double voxel_size) {
  return VoxelKey{static_cast<int64_t>(std::floor(p.x() / voxel_size)),
                  static_cast<int64_t>(std::floor(p.y() / voxel_size)),
                  static_cast<int64_t>(std::floor(p.z() / voxel_size))};
}

struct VoxelKeyHash {
  size_t operator()(const VoxelKey& k) const {
    // Spatial hash with large primes; query correctness never depends on it.
    const uint64_t h = static_cast<uint64_t>(k.x) * 73856093u ^
                       static_cast<uint64_t>(k.y) * 19349669u ^
                       static_cast<uint64_t>(k.z) * 83492791u;
    return static_cast<size_t>(h);
  }
};

/// Local plane fit around a query point. `point` is the nearest map neighbor,
/// `planarity` the smallest/middle eigenvalue ratio of the neighborhood
/// covariance (0 = perfect plane).
struct PlaneFit {
  Vec3 normal = Vec3::UnitZ();
  Vec3 point = Vec3::Zero();
  double planarity = 0.0;
};

/// World-frame point map on a spatial hash. Each voxel stores up to
/// `kCellCapacity` points; once full, later points are discarded so the
/// oldest geometry is preserved (a FIFO policy would churn instead).
///
/// Concurrency contract: reads (nearest_neighbors / fit_plane) may run from
/// many threads against a frozen map; insert/cull are single-threaded between
/// optimization rounds.
class VoxelMap {
 public:
  static constexpr int kCellCapacity = 20;

  explicit VoxelMap(double voxel_size, double max_range = 100.0,
                    double planarity_max = 0.1)
      : voxel_size_(voxel_size),
        max_range_(max_range),
        planarity_max_(planarity_max) {}

  double voxel_size() const { return voxel_size_; }
  double max_range() const { return max_range_; }
  size_t voxel_count() const { return cells_.size(); }

  size_t point_count() const {
    size_t n = 0;
    for (const auto& [key, cell] : cells_) n += cell.count;
    return n;
  }

  /// Appends world-frame points to their cells; full cells discard the point.
  /// Returns the number actually stored.
  size_t insert(std::span<const Vec3> points) {
    size_t stored = 0;
    for (const Vec3& p : points) {
      Cell& cell = cells_[voxel_key(p, voxel_size_)];
      if (cell.count >= kCellCapacity) continue;
      cell.points[cell.count++] = p;
      ++stored;
    }
    return stored;
  }

  size_t insert(const std::vector<Vec3>& points) {
    return insert(std::span<const Vec3>(points));
  }

  /// Up to n closest points gathered from the query voxel and its six
  /// face-adjacent neighbors, sorted by distance. Returns fewer (possibly
  /// zero) when candidates are scarce.
  std::vector<Vec3> nearest_neighbors(const Vec3& p, int n) const {
    std::array<std::pair<double, const Vec3*>, kMaxCandidates> cand;
    const int found = gather(p, cand);
    const int take = std::min(found, n);
    std::partial_sort(cand.begin(), cand.begin() + take, cand.begin() + found,
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Vec3> out;
    out.reserve(take);
    for (int i = 0; i < take; ++i) out.push_back(*cand[i].second);
    return out;
  }

  /// PCA plane through the five nearest neighbors of p. Returns nullopt when
  /// fewer than five neighbors exist or the neighborhood is not planar
  /// (smallest/middle eigenvalue ratio above the threshold).
  std::optional<PlaneFit> fit_plane(const Vec3& p) const {
    std::array<std::pair<double, const Vec3*>, kMaxCandidates> cand;
    const int found = gather(p, cand);
    if (found < kPlanePoints) return std::nullopt;
    std::partial_sort(cand.begin(), cand.begin() + kPlanePoints,
                      cand.begin() + found,
                      [](const auto& a, const auto& b) { return a.first < b.first; });

    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < kPlanePoints; ++i) mean += *cand[i].second;
    mean /= kPlanePoints;
    Mat3 cov = Mat3::Zero();
    for (int i = 0; i < kPlanePoints; ++i) {
      const Vec3 d = *cand[i].second - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig;
    eig.computeDirect(cov);
    const Vec3 evals = eig.eigenvalues();  // ascending
    if (evals(1) <= 0.0) return std::nullopt;
    const double planarity = evals(0) / evals(1);
    if (planarity > planarity_max_) return std::nullopt;

    PlaneFit fit;
    fit.normal = eig.eigenvectors().col(0).normalized();
    fit.point = *cand[0].second;
    fit.planarity = planarity;
    return fit;
  }

  /// Removes every voxel whose center lies farther than max_range from
  /// `center`; returns the number of voxels removed.
  size_t cull(const Vec3& center) {
    cull_center_ = center;
    size_t removed = 0;
    for (auto it = cells_.begin(); it != cells_.end();) {
      if ((voxel_center(it->first) - center).norm() > max_range_) {
        it = cells_.erase(it);
        ++removed;
      } else {
        ++it;
      }
    }
    return removed;
  }

  Vec3 voxel_center(const VoxelKey& k) const {
    return Vec3((k.x + 0.5) * voxel_size_, (k.y + 0.5) * voxel_size_,
                (k.z + 0.5) * voxel_size_);
  }

  const Vec3& cull_center() const { return cull_center_; }

  /// Debug dump of all stored points as ASCII PLY.
  void write_ply(std::ostream& os) const {
    os << "ply\nformat ascii 1.0\nelement vertex " << point_count()
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& [key, cell] : cells_)
      for (int i = 0; i < cell.count; ++i)
        os << cell.points[i].x() << " " << cell.points[i].y() << " "
           << cell.points[i].z() << "\n";
  }

 private:
  static constexpr int kPlanePoints = 5;
  static constexpr int kMaxCandidates = 7 * kCellCapacity;

  struct Cell {
    std::array<Vec3, kCellCapacity> points;
    int count = 0;
  };

  // Candidates from the query voxel plus its 6 face neighbors.
  int gather(const Vec3& p,
             std::array<std::pair<double, const Vec3*>, kMaxCandidates>& out) const {
    static constexpr std::array<std::array<int, 3>, 7> kOffsets = {
        {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    const VoxelKey base = voxel_key(p, voxel_size_);
    int n = 0;
    for (const auto& off : kOffsets) {
      const auto it = cells_.find(VoxelKey{base.x + off[0], base.y + off[1], base.z + off[2]});
      if (it == cells_.end()) continue;
      for (int i = 0; i < it->second.count; ++i) {
        const Vec3& q = it->second.points[i];
        out[n++] = {(q - p).squaredNorm(), &q};
      }
    }
    return n;
  }

  double voxel_size_;
  double max_range_;
  double planarity_max_;
  Vec3 cull_center_ = Vec3::Zero();
  std::unordered_map<VoxelKey, Cell, VoxelKeyHash> cells_;
};

}  // namespace ctlo
