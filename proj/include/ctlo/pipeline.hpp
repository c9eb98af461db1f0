#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <random>
#include <unordered_map>
#include <vector>

#include "ctlo/config.hpp"
#include "ctlo/solver.hpp"

namespace ctlo {

/// 1-based segment index for a timestamp relative to a window start.
inline int ingest_segment(double t, double t0, double dt) {
  return static_cast<int>(std::floor((t - t0) / dt)) + 1;
}

struct WindowStatus {
  double t0 = 0.0;
  bool converged = false;
  bool retried = false;
  bool diverged = false;
  bool degenerate = false;  // a segment fell below min_correspondences
  int correspondences = 0;
  double energy = 0.0;
};

/// End-to-end odometry: ingest timestamped points from one or more LiDARs,
/// maintain the sliding window, drive the solver, update the map and emit
/// finalized knot poses.
///
/// The first init_duration seconds are assumed stationary and only seed the
/// map; the first window starts immediately afterwards. Emitted poses are
/// final: they never change once the window containing them is marginalized.
class Odometry {
 public:
  explicit Odometry(OdometryConfig cfg)
      : cfg_(std::move(cfg)),
        solver_(cfg_.solver()),
        rig_(cfg_.rig()),
        map_(cfg_.voxel_size, cfg_.max_range, cfg_.planarity_max) {
    cfg_.validate();
  }

  /// Feeds one measurement. Timestamps must be non-decreasing per sensor;
  /// cross-sensor interleave is fine. Measurements from sensors without an
  /// extrinsic are counted and ignored.
  void push(const Measurement& m) {
    if (m.sensor >= rig_.count()) {
      ++ignored_sensor_;
      return;
    }
    last_data_t_ = std::max(last_data_t_, m.t);
    last_seen_[m.sensor] = m.t;

    if (!initialized_) {
      if (init_points_.empty()) begin_t_ = m.t;
      if (m.t < begin_t_ + cfg_.init_duration) {
        init_points_.push_back(m);
        return;
      }
      do_initialize();
      // fall through: m belongs to the running phase
    }

    if (cfg_.mode == OdometryMode::kDeskewedDiscrete) {
      push_deskewed(m);
    } else {
      pending_.push_back(m);
      while (window_ready()) process_window();
    }
  }

  void push(std::span<const Measurement> batch) {
    for (const Measurement& m : batch) push(m);
  }

  /// Flushes buffered data, processes the partial tail and finalizes the
  /// remaining knots. Throws DataError when the stream held no points.
  void finish() {
    if (finished_) return;
    if (!initialized_) {
      if (init_points_.empty()) throw DataError("odometry: empty input stream");
      do_initialize();
    }
    if (cfg_.mode == OdometryMode::kDeskewedDiscrete) {
      if (!scan_points_.empty()) {
        handle_scan(scan_t_, std::move(scan_points_));
        scan_points_.clear();
      }
      for (const Scan& s : scans_) emit_knot(s.t, s.pose);
    } else {
      while (!pending_.empty()) {
        const bool any_usable =
            std::any_of(pending_.begin(), pending_.end(),
                        [&](const Measurement& m) { return m.t >= traj_.t0; });
        if (!any_usable) {
          dropped_ += pending_.size();
          pending_.clear();
          break;
        }
        process_window();
      }
      if (have_converged_) {
        for (int k = 1; k <= last_converged_.segments(); ++k) {
          const double tk = last_converged_.knot_time(k);
          if (tk > last_data_t_ + last_converged_.dt) break;
          emit_knot(tk, last_converged_.controls[k]);
        }
      }
    }
    finished_ = true;
  }

  const OdometryConfig& config() const { return cfg_; }
  const std::vector<StampedPose>& knots() const { return knots_; }
  const std::vector<WindowStatus>& windows() const { return windows_; }
  const VoxelMap& map() const { return map_; }
  bool diverged() const { return diverged_; }
  size_t dropped() const { return dropped_; }
  size_t ignored_sensor_measurements() const { return ignored_sensor_; }
  size_t init_points_stored() const { return init_stored_; }
  bool initialized() const { return initialized_; }

  void set_diagnostics(std::ostream* os) { diagnostics_ = os; }

  /// Interpolated pose over the finalized knots. The last knot time itself is
  /// queryable here (it is the closed end of the processed span).
  Pose query_pose(double t) const {
    if (knots_.size() < 2) {
      if (knots_.size() == 1 && t == knots_[0].t) return knots_[0].pose;
      throw std::out_of_range("odometry: query outside processed span");
    }
    if (t == knots_.back().t) return knots_.back().pose;
    return export_trajectory().pose_at(t);
  }

  /// The finalized knots as a uniform piecewise-linear trajectory.
  Trajectory export_trajectory() const {
    if (knots_.size() < 2)
      throw std::out_of_range("odometry: fewer than two finalized knots");
    std::vector<Pose> poses;
    poses.reserve(knots_.size());
    for (const auto& k : knots_) poses.push_back(k.pose);
    const double dt =
        (knots_.back().t - knots_.front().t) / static_cast<double>(knots_.size() - 1);
    return Trajectory(knots_.front().t, dt, std::move(poses));
  }

 private:
  struct Scan {
    double t = 0.0;
    std::vector<Measurement> points;
    Pose pose;
  };

  void do_initialize() {
    std::vector<Vec3> pts;
    pts.reserve(init_points_.size());
    for (const Measurement& m : init_points_)
      pts.push_back(rig_.extrinsic(m.sensor) * m.p);
    init_stored_ = map_.insert(pts);
    init_points_.clear();
    init_points_.shrink_to_fit();
    traj_ = Trajectory::stationary(begin_t_ + cfg_.init_duration, cfg_.dt, cfg_.segments);
    pseudo_twists_.assign(cfg_.segments, Twist::Zero());
    initialized_ = true;
  }

  bool window_ready() const {
    if (last_seen_.empty()) return false;
    double min_t = std::numeric_limits<double>::max();
    for (const auto& [sensor, t] : last_seen_) min_t = std::min(min_t, t);
    return min_t >= traj_.end_time();
  }

  static void downsample_cap(std::vector<Measurement>& v, size_t cap, uint64_t seed) {
    if (cap == 0 || v.size() <= cap) return;
    std::mt19937_64 rng(seed);
    std::vector<Measurement> out(v.begin(), v.begin() + cap);
    for (size_t i = cap; i < v.size(); ++i) {
      const size_t j = std::uniform_int_distribution<size_t>(0, i)(rng);
      if (j < cap) out[j] = v[i];
    }
    v = std::move(out);
  }

  void process_window() {
    const int K = traj_.segments();
    const double t0 = traj_.t0;
    const double end = traj_.end_time();

    // Bin [t0, end) into segments. The window overlaps the next one in all
    // but its first segment, so only points of the segment about to be
    // marginalized (t < t0 + dt) leave the buffer here.
    std::vector<std::vector<Measurement>> full(K);
    std::deque<Measurement> keep;
    for (const Measurement& m : pending_) {
      if (m.t < t0) {
        ++dropped_;
        continue;
      }
      if (m.t < end) {
        const int k = std::clamp(ingest_segment(m.t, t0, traj_.dt), 1, K);
        full[k - 1].push_back(m);
      }
      if (m.t >= t0 + traj_.dt) keep.push_back(m);
    }
    pending_.swap(keep);

    WindowState st;
    st.traj = traj_;
    st.prior = prior_;
    st.pseudo_twists = pseudo_twists_;
    st.segment_points = full;
    for (int k = 0; k < K; ++k)
      downsample_cap(st.segment_points[k],
                     static_cast<size_t>(cfg_.segment_point_cap),
                     0x9e3779b9u * (windows_.size() + 1) + k);

    finalize_window(st, full[0]);
  }

  /// Optimize, record status, marginalize, update map and slide.
  void finalize_window(WindowState& st, const std::vector<Measurement>& oldest_points) {
    const Trajectory initial = st.traj;
    OptimizeReport rep = optimize(st, map_, rig_, solver_, diagnostics_);

    WindowStatus status;
    status.t0 = st.traj.t0;
    status.retried = rep.failed;
    if (rep.failed) {
      st.traj = initial;
      SolverConfig retry = solver_;
      retry.lambda_init *= 2.0;
      rep = optimize(st, map_, rig_, retry, diagnostics_);
    }
    if (rep.failed) {
      st.traj = initial;  // keep the constant-velocity prediction
      diverged_ = true;
      associate(st, map_, rig_, solver_);
      build_kinematic_factors(st, solver_);
    }
    status.diverged = rep.failed;
    status.converged = rep.converged && !rep.failed;
    status.correspondences = rep.correspondences;
    status.energy = rep.final_energy;

    std::vector<int> seg_count(st.segments(), 0);
    for (const GeometricFactor& f : st.geometric) ++seg_count[f.segment - 1];
    for (int k = 0; k < st.segments(); ++k)
      if (seg_count[k] < solver_.min_correspondences) status.degenerate = true;
    windows_.push_back(status);

    pseudo_twists_.clear();
    for (int k = 1; k <= st.segments(); ++k)
      pseudo_twists_.push_back(st.traj.segment_twist(k));

    prior_ = marginalize(st, solver_);
    emit_knot(st.traj.t0, st.traj.controls[0]);

    std::vector<Vec3> world_pts;
    world_pts.reserve(oldest_points.size());
    for (const Measurement& m : oldest_points)
      world_pts.push_back(st.traj.pose_at(m.t) * (rig_.extrinsic(m.sensor) * m.p));
    map_.insert(world_pts);

    const Vec3 center = st.traj.controls.back().t;
    if ((center - map_.cull_center()).norm() > 1.0) map_.cull(center);

    const size_t n = st.traj.controls.size();
    Pose predicted =
        st.traj.controls[n - 1] *
        exp(ominus(st.traj.controls[n - 1], st.traj.controls[n - 2]));
    predicted.renormalize();

    last_converged_ = st.traj;
    have_converged_ = true;
    traj_ = st.traj.advanced(predicted);
  }

  // --- deskewed-discrete mode -------------------------------------------

  void push_deskewed(const Measurement& m) {
    if (scan_points_.empty()) {
      scan_t_ = m.t;
      scan_points_.push_back(m);
      return;
    }
    if (m.t == scan_t_) {
      scan_points_.push_back(m);
      return;
    }
    std::vector<Measurement> pts;
    pts.swap(scan_points_);
    const double t = scan_t_;
    scan_t_ = m.t;
    scan_points_.push_back(m);
    handle_scan(t, std::move(pts));
  }

  void handle_scan(double t, std::vector<Measurement> pts) {
    downsample_cap(pts, static_cast<size_t>(cfg_.segment_point_cap),
                   0x9e3779b9u * (knots_.size() + scans_.size() + 1));
    Scan scan;
    scan.t = t;
    scan.points = std::move(pts);
    if (scans_.empty()) {
      scan.pose = Pose::identity();
    } else if (scans_.size() == 1) {
      scan.pose = scans_.back().pose;
    } else {
      const Pose& a = scans_[scans_.size() - 2].pose;
      const Pose& b = scans_.back().pose;
      scan.pose = b * exp(ominus(b, a));
      scan.pose.renormalize();
    }
    scans_.push_back(std::move(scan));
    if (scans_.size() < 2) return;

    // One control pose per scan; each scan's points bind to its own knot
    // (alpha lands on 0 or 1), smoothness couples consecutive scan poses.
    const int K = static_cast<int>(scans_.size()) - 1;
    const double dt = (scans_.back().t - scans_.front().t) / K;
    std::vector<Pose> poses;
    for (const Scan& s : scans_) poses.push_back(s.pose);

    WindowState st;
    st.traj = Trajectory(scans_.front().t, dt, std::move(poses));
    st.prior = prior_;
    st.pseudo_twists = pseudo_twists_;
    st.segment_points.resize(K);
    for (size_t i = 0; i < scans_.size(); ++i) {
      const int seg = std::clamp(static_cast<int>(i), 1, K);
      auto& bin = st.segment_points[seg - 1];
      bin.insert(bin.end(), scans_[i].points.begin(), scans_[i].points.end());
    }

    finalize_scan_window(st);
  }

  void finalize_scan_window(WindowState& st) {
    const Trajectory initial = st.traj;
    OptimizeReport rep = optimize(st, map_, rig_, solver_, diagnostics_);

    WindowStatus status;
    status.t0 = st.traj.t0;
    status.retried = rep.failed;
    if (rep.failed) {
      st.traj = initial;
      SolverConfig retry = solver_;
      retry.lambda_init *= 2.0;
      rep = optimize(st, map_, rig_, retry, diagnostics_);
    }
    if (rep.failed) {
      st.traj = initial;
      diverged_ = true;
      associate(st, map_, rig_, solver_);
      build_kinematic_factors(st, solver_);
    }
    status.diverged = rep.failed;
    status.converged = rep.converged && !rep.failed;
    status.correspondences = rep.correspondences;
    status.energy = rep.final_energy;
    windows_.push_back(status);

    for (size_t i = 0; i < scans_.size(); ++i) scans_[i].pose = st.traj.controls[i];

    if (static_cast<int>(scans_.size()) >= cfg_.scans_per_window) {
      // The window slides: segment k of the next window is segment k+1 here,
      // so this window's converged twists are exactly the next window's
      // frozen targets. While the window is still growing the targets keep
      // their initial (stationary) values instead.
      pseudo_twists_.clear();
      for (int k = 1; k <= st.segments(); ++k)
        pseudo_twists_.push_back(st.traj.segment_twist(k));

      prior_ = marginalize(st, solver_);
      const Scan& oldest = scans_.front();
      emit_knot(oldest.t, oldest.pose);
      std::vector<Vec3> world_pts;
      world_pts.reserve(oldest.points.size());
      for (const Measurement& m : oldest.points)
        world_pts.push_back(oldest.pose * (rig_.extrinsic(m.sensor) * m.p));
      map_.insert(world_pts);
      const Vec3 center = scans_.back().pose.t;
      if ((center - map_.cull_center()).norm() > 1.0) map_.cull(center);
      scans_.pop_front();
    }
  }

  void emit_knot(double t, const Pose& pose) {
    knots_.push_back(StampedPose{t, pose});
  }

  OdometryConfig cfg_;
  SolverConfig solver_;
  SensorRig rig_;
  VoxelMap map_;

  bool initialized_ = false;
  bool finished_ = false;
  bool diverged_ = false;
  double begin_t_ = 0.0;
  double last_data_t_ = std::numeric_limits<double>::lowest();
  std::vector<Measurement> init_points_;
  size_t init_stored_ = 0;
  size_t dropped_ = 0;
  size_t ignored_sensor_ = 0;
  std::unordered_map<int, double> last_seen_;

  Trajectory traj_;
  MarginalizationPrior prior_;
  std::vector<Twist> pseudo_twists_;
  std::deque<Measurement> pending_;
  Trajectory last_converged_;
  bool have_converged_ = false;

  double scan_t_ = 0.0;
  std::vector<Measurement> scan_points_;
  std::deque<Scan> scans_;

  std::vector<StampedPose> knots_;
  std::vector<WindowStatus> windows_;
  std::ostream* diagnostics_ = nullptr;
};

}  // namespace ctlo
