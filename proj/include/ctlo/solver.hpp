#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <ostream>
#include <vector>

#include "ctlo/factors.hpp"
#include "ctlo/trajectory.hpp"
#include "ctlo/types.hpp"
#include "ctlo/voxel_map.hpp"

namespace ctlo {

struct SolverConfig {
  double sigma_r = 0.1;
  double sigma_v = 0.05;
  double huber_threshold = 0.3;      // <= 0 disables the robust weight
  double max_corr_dist_factor = 2.0; // times voxel size
  int max_outer = 5;
  int max_inner = 10;
  double increment_tol = 1e-6;
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 3.0;
  double lambda_max = 1e8;
  int min_correspondences = 50;      // per segment, below this a warning is raised
  bool smoothness_frozen = false;    // freeze intra-window previous twists too

  double geometric_weight() const { return 1.0 / (sigma_r * sigma_r); }
  double kinematic_weight() const { return 1.0 / (sigma_v * sigma_v); }
};

/// Everything the sliding-window optimization owns: the trajectory, the
/// prior carried over from marginalization (attached to the first control
/// pose), the per-segment measurements and the factor sets built from them.
struct WindowState {
  Trajectory traj;
  MarginalizationPrior prior;
  std::vector<std::vector<Measurement>> segment_points;  // index k-1
  std::vector<Twist> pseudo_twists;  // converged twists of the previous window
  std::vector<GeometricFactor> geometric;
  std::vector<KinematicFactor> kinematic;

  int segments() const { return traj.segments(); }
};

struct NormalEquations {
  MatX H;
  VecX b;
  double energy = 0.0;  // robust total at the linearization point
  double e_reg = 0.0;
  double e_kine = 0.0;
  double e_marg = 0.0;
  std::vector<int> empty_segments;  // segments with zero valid correspondences
};

namespace detail {

inline std::vector<SegmentContext> segment_contexts(const Trajectory& traj) {
  std::vector<SegmentContext> ctx;
  ctx.reserve(traj.segments());
  for (int k = 1; k <= traj.segments(); ++k)
    ctx.emplace_back(traj.controls[k - 1], traj.controls[k]);
  return ctx;
}

}  // namespace detail

/// Rebuilds the geometric factor set against a frozen map using the current
/// trajectory estimate: interpolate each measurement's pose, fit a plane
/// around its nearest neighbors, and gate degenerate or distant matches.
inline void associate(WindowState& state, const VoxelMap& map, const SensorRig& rig,
                      const SolverConfig& cfg) {
  state.geometric.clear();
  const double max_dist = cfg.max_corr_dist_factor * map.voxel_size();
  const double max_dist2 = max_dist * max_dist;
  const double w = cfg.geometric_weight();
  const auto ctx = detail::segment_contexts(state.traj);

  for (int k = 1; k <= state.segments(); ++k) {
    const Pose& prev = state.traj.controls[k - 1];
    for (const Measurement& m : state.segment_points[k - 1]) {
      const double alpha = (m.t - state.traj.knot_time(k - 1)) / state.traj.dt;
      const Vec3 p_body = rig.extrinsic(m.sensor) * m.p;
      const Vec3 p_world = (prev * exp(alpha * ctx[k - 1].tau)) * p_body;
      const auto fit = map.fit_plane(p_world);
      if (!fit) continue;
      if ((p_world - fit->point).squaredNorm() > max_dist2) continue;
      GeometricFactor f;
      f.meas = m;
      f.p_body = p_body;
      f.plane = *fit;
      f.segment = k;
      f.alpha = alpha;
      f.weight = w;
      state.geometric.push_back(f);
    }
  }
}

/// One smoothness factor per segment. Segment 1 always measures against the
/// frozen pseudo-twist from the previous window; later segments couple live
/// pose triples unless the frozen variant is selected.
inline void build_kinematic_factors(WindowState& state, const SolverConfig& cfg) {
  state.kinematic.clear();
  const double w = cfg.kinematic_weight();
  for (int k = 1; k <= state.segments(); ++k) {
    KinematicFactor f;
    f.segment = k;
    f.weight = w;
    if (k == 1 || cfg.smoothness_frozen) {
      f.frozen = true;
      f.pseudo_twist = (k - 1 < static_cast<int>(state.pseudo_twists.size()))
                           ? state.pseudo_twists[k - 1]
                           : Twist::Zero();
    } else {
      f.frozen = false;
    }
    state.kinematic.push_back(f);
  }
}

/// Scatter-adds every factor and the prior into dense normal equations over
/// the stacked increment (6 per control pose). H is symmetric by
/// construction; b is the gradient, so the step solves H xi = -b.
inline NormalEquations assemble(const WindowState& state, const SolverConfig& cfg) {
  const int n = state.segments() + 1;
  NormalEquations eqs;
  eqs.H = MatX::Zero(6 * n, 6 * n);
  eqs.b = VecX::Zero(6 * n);

  const auto ctx = detail::segment_contexts(state.traj);
  std::vector<int> seg_count(state.segments(), 0);

  for (const GeometricFactor& f : state.geometric) {
    const int k = f.segment;
    const auto ev = geometric_eval(f, state.traj.controls[k - 1], ctx[k - 1]);
    const auto [loss, hw] = huber(ev.residual, cfg.huber_threshold);
    const double w = f.weight * hw;
    eqs.e_reg += f.weight * loss;
    ++seg_count[k - 1];

    const int a = 6 * (k - 1), b = 6 * k;
    eqs.H.block<6, 6>(a, a) += w * ev.J_prev.transpose() * ev.J_prev;
    eqs.H.block<6, 6>(b, b) += w * ev.J_next.transpose() * ev.J_next;
    const Mat6 off = w * ev.J_prev.transpose() * ev.J_next;
    eqs.H.block<6, 6>(a, b) += off;
    eqs.H.block<6, 6>(b, a) += off.transpose();
    eqs.b.segment<6>(a) += w * ev.residual * ev.J_prev.transpose();
    eqs.b.segment<6>(b) += w * ev.residual * ev.J_next.transpose();
  }

  for (const KinematicFactor& f : state.kinematic) {
    const int k = f.segment;
    const Pose& Tb = state.traj.controls[k - 1];
    const Pose& Tc = state.traj.controls[k];
    const Pose& Ta = state.traj.controls[k >= 2 ? k - 2 : 0];
    const auto ev = kinematic_eval(f, Ta, Tb, Tc);
    eqs.e_kine += 0.5 * f.weight * ev.residual.squaredNorm();

    const int ib = 6 * (k - 1), ic = 6 * k;
    auto add = [&](int ri, const Mat6& Ji, int ci, const Mat6& Jj) {
      eqs.H.block<6, 6>(ri, ci) += f.weight * Ji.transpose() * Jj;
    };
    add(ib, ev.J_b, ib, ev.J_b);
    add(ic, ev.J_c, ic, ev.J_c);
    add(ib, ev.J_b, ic, ev.J_c);
    add(ic, ev.J_c, ib, ev.J_b);
    eqs.b.segment<6>(ib) += f.weight * ev.J_b.transpose() * ev.residual;
    eqs.b.segment<6>(ic) += f.weight * ev.J_c.transpose() * ev.residual;
    if (!f.frozen) {
      const int ia = 6 * (k - 2);
      add(ia, ev.J_a, ia, ev.J_a);
      add(ia, ev.J_a, ib, ev.J_b);
      add(ib, ev.J_b, ia, ev.J_a);
      add(ia, ev.J_a, ic, ev.J_c);
      add(ic, ev.J_c, ia, ev.J_a);
      eqs.b.segment<6>(ia) += f.weight * ev.J_a.transpose() * ev.residual;
    }
  }

  if (!state.prior.empty()) {
    const int pd = state.prior.dim();
    const auto ev = prior_eval(
        state.prior, std::span<const Pose>(state.traj.controls.data(),
                                           state.prior.lin_points.size()));
    eqs.e_marg = ev.energy;
    eqs.H.topLeftCorner(pd, pd) += state.prior.H;
    eqs.b.head(pd) += ev.gradient;
  }

  for (int k = 1; k <= state.segments(); ++k)
    if (seg_count[k - 1] == 0) eqs.empty_segments.push_back(k);
  eqs.energy = eqs.e_reg + eqs.e_kine + eqs.e_marg;
  return eqs;
}

/// Robust total energy of the window at the given trajectory (residual-only
/// sweep; factors keep their stored associations).
inline double total_energy(const WindowState& state, const Trajectory& traj,
                           const SolverConfig& cfg) {
  double e = 0.0;
  std::vector<Twist> taus(traj.segments());
  for (int k = 1; k <= traj.segments(); ++k) taus[k - 1] = traj.segment_twist(k);

  for (const GeometricFactor& f : state.geometric) {
    const double r =
        geometric_residual(f, traj.controls[f.segment - 1], taus[f.segment - 1]);
    e += f.weight * huber(r, cfg.huber_threshold).first;
  }
  for (const KinematicFactor& f : state.kinematic) {
    const Twist prev =
        f.frozen ? f.pseudo_twist : taus[f.segment - 2];
    e += 0.5 * f.weight * (taus[f.segment - 1] - prev).squaredNorm();
  }
  if (!state.prior.empty())
    e += prior_eval(state.prior,
                    std::span<const Pose>(traj.controls.data(),
                                          state.prior.lin_points.size()))
             .energy;
  return e;
}

inline void apply_increment(Trajectory& traj, const VecX& xi) {
  for (size_t i = 0; i < traj.controls.size(); ++i) {
    traj.controls[i] = oplus(traj.controls[i], xi.segment<6>(6 * static_cast<int>(i)));
    traj.controls[i].renormalize();
  }
}

struct StepResult {
  bool accepted = false;
  bool converged = false;   // increment below tolerance
  bool failed = false;      // singular system after max damping
  double increment_norm = 0.0;
  double energy = 0.0;
};

/// Solves (H + lambda diag(H)) xi = -b over the informed dimensions and
/// applies the increment if the total energy decreases; otherwise raises
/// lambda and retries (bounded). Dimensions with no information at all
/// (zero diagonal) receive no update and stay at their predicted values.
inline StepResult step(const NormalEquations& eqs, WindowState& state,
                       double& lambda, const SolverConfig& cfg) {
  StepResult res;
  res.energy = eqs.energy;

  const VecX diag = eqs.H.diagonal();
  std::vector<int> active;
  active.reserve(diag.size());
  for (int i = 0; i < diag.size(); ++i)
    if (diag(i) > 1e-12) active.push_back(i);
  if (active.empty()) {
    res.converged = true;
    return res;
  }
  const int na = static_cast<int>(active.size());
  MatX Hr(na, na);
  VecX br(na);
  for (int i = 0; i < na; ++i) {
    br(i) = eqs.b(active[i]);
    for (int j = 0; j < na; ++j) Hr(i, j) = eqs.H(active[i], active[j]);
  }

  while (lambda <= cfg.lambda_max) {
    MatX damped = Hr;
    damped.diagonal() += lambda * Hr.diagonal();
    Eigen::LDLT<MatX> ldlt(damped);
    if (ldlt.info() != Eigen::Success) {
      lambda *= cfg.lambda_up;
      continue;
    }
    const VecX xi_r = ldlt.solve(-br);
    if (!xi_r.allFinite()) {
      lambda *= cfg.lambda_up;
      continue;
    }
    VecX xi = VecX::Zero(diag.size());
    for (int i = 0; i < na; ++i) xi(active[i]) = xi_r(i);
    res.increment_norm = xi.norm();
    if (res.increment_norm < cfg.increment_tol) {
      res.converged = true;
      return res;
    }

    Trajectory candidate = state.traj;
    double candidate_energy;
    try {
      apply_increment(candidate, xi);
      candidate_energy = total_energy(state, candidate, cfg);
    } catch (const std::domain_error&) {
      lambda *= cfg.lambda_up;  // step drove a segment rotation to pi
      continue;
    }
    if (std::isfinite(candidate_energy) && candidate_energy < eqs.energy) {
      state.traj = candidate;
      res.accepted = true;
      res.energy = candidate_energy;
      lambda = std::max(lambda / cfg.lambda_down, 1e-12);
      return res;
    }
    lambda *= cfg.lambda_up;
  }
  res.failed = true;
  return res;
}

struct OptimizeReport {
  bool converged = false;
  bool failed = false;
  bool degenerate_warning = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  int correspondences = 0;
  double final_energy = 0.0;
  double final_increment = 0.0;
  std::vector<int> empty_segments;
};

/// Outer loop re-associates correspondences against the frozen map, inner
/// loop runs damped Gauss-Newton steps until the increment norm drops below
/// tolerance or the iteration caps are reached.
inline OptimizeReport optimize(WindowState& state, const VoxelMap& map,
                               const SensorRig& rig, const SolverConfig& cfg,
                               std::ostream* diagnostics = nullptr) {
  OptimizeReport rep;
  double lambda = cfg.lambda_init;

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    ++rep.outer_iterations;
    associate(state, map, rig, cfg);
    build_kinematic_factors(state, cfg);

    bool inner_converged = false;
    for (int inner = 0; inner < cfg.max_inner; ++inner) {
      ++rep.inner_iterations;
      const NormalEquations eqs = assemble(state, cfg);
      if (outer == 0 && inner == 0) {
        rep.empty_segments = eqs.empty_segments;
        rep.correspondences = static_cast<int>(state.geometric.size());
      }
      const StepResult sr = step(eqs, state, lambda, cfg);
      rep.final_energy = sr.energy;
      rep.final_increment = sr.increment_norm;
      if (diagnostics)
        (*diagnostics) << outer << ',' << inner << ',' << eqs.e_reg << ','
                       << eqs.e_kine << ',' << eqs.e_marg << ','
                       << sr.increment_norm << ',' << lambda << '\n';
      if (sr.failed) {
        rep.failed = true;
        return rep;
      }
      if (sr.converged) {
        inner_converged = true;
        break;
      }
    }
    rep.correspondences = static_cast<int>(state.geometric.size());
    if (inner_converged && outer > 0) {
      rep.converged = true;
      break;
    }
    if (inner_converged && cfg.max_outer == 1) {
      rep.converged = true;
      break;
    }
  }
  if (!rep.failed && rep.final_increment < 10.0 * cfg.increment_tol)
    rep.converged = true;
  rep.degenerate_warning = !rep.empty_segments.empty();
  return rep;
}

struct SchurResult {
  MatX H;
  VecX b;
  bool regularized = false;
};

/// Eliminates the first `m` dimensions of the quadratic (H, b) by Schur
/// complement. A numerically singular eliminated block is regularized with
/// 1e-9 I and flagged.
inline SchurResult schur_complement(const MatX& H, const VecX& b, int m) {
  const int n = static_cast<int>(H.rows()) - m;
  MatX Hmm = H.topLeftCorner(m, m);
  const MatX Hmn = H.topRightCorner(m, n);
  const MatX Hnm = H.bottomLeftCorner(n, m);
  const MatX Hnn = H.bottomRightCorner(n, n);

  SchurResult out;
  Eigen::SelfAdjointEigenSolver<MatX> eig(Hmm);
  if (eig.eigenvalues().minCoeff() < 1e-12) {
    Hmm.diagonal().array() += 1e-9;
    out.regularized = true;
  }
  const Eigen::LDLT<MatX> ldlt(Hmm);
  out.H = Hnn - Hnm * ldlt.solve(Hmn);
  out.b = b.tail(n) - Hnm * ldlt.solve(b.head(m));
  return out;
}

/// Builds the joint quadratic over (T_0, T_1) from every energy term that
/// touches T_0 at the converged state -- segment-1 geometric factors, the
/// segment-1 smoothness factor and the incoming prior -- then
/// Schur-complements T_0 out. The returned prior is anchored at the converged
/// T_1 (its linearization point) and its b is never re-corrected afterwards.
inline MarginalizationPrior marginalize(const WindowState& state,
                                        const SolverConfig& cfg,
                                        bool* regularized = nullptr) {
  MatX H = MatX::Zero(12, 12);
  VecX b = VecX::Zero(12);

  const SegmentContext ctx(state.traj.controls[0], state.traj.controls[1]);
  for (const GeometricFactor& f : state.geometric) {
    if (f.segment != 1) continue;
    const auto ev = geometric_eval(f, state.traj.controls[0], ctx);
    const double w = f.weight * huber(ev.residual, cfg.huber_threshold).second;
    Eigen::Matrix<double, 1, 12> J;
    J << ev.J_prev, ev.J_next;
    H += w * J.transpose() * J;
    b += w * ev.residual * J.transpose();
  }

  for (const KinematicFactor& f : state.kinematic) {
    if (f.segment != 1) continue;
    const auto ev = kinematic_eval_frozen(f.pseudo_twist, state.traj.controls[0],
                                          state.traj.controls[1]);
    Eigen::Matrix<double, 6, 12> J;
    J << ev.J_b, ev.J_c;
    H += f.weight * J.transpose() * J;
    b += f.weight * J.transpose() * ev.residual;
  }

  if (!state.prior.empty()) {
    const int pd = state.prior.dim();
    const auto ev = prior_eval(
        state.prior, std::span<const Pose>(state.traj.controls.data(),
                                           state.prior.lin_points.size()));
    H.topLeftCorner(pd, pd) += state.prior.H;
    b.head(pd) += ev.gradient;
  }

  const SchurResult schur = schur_complement(H, b, 6);
  if (regularized) *regularized = schur.regularized;
  return MarginalizationPrior::single(schur.H, schur.b, state.traj.controls[1]);
}

}  // namespace ctlo
