#include "ctlo/solver.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

using namespace ctlo;
using testutil::random_pose;
using testutil::random_twist;

namespace {

WindowState make_state(int segments, std::mt19937_64& rng, double knot_step = 0.4) {
  std::vector<Pose> controls{random_pose(rng, 0.5)};
  for (int k = 0; k < segments; ++k)
    controls.push_back(oplus(controls.back(), random_twist(rng, knot_step, 0.3)));
  WindowState st;
  st.traj = Trajectory(0.0, 0.1, std::move(controls));
  st.segment_points.resize(segments);
  st.pseudo_twists.assign(segments, Twist::Zero());
  return st;
}

GeometricFactor random_factor(int segment, std::mt19937_64& rng, double weight) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> a01(0.05, 0.95);
  GeometricFactor f;
  f.p_body = 2.0 * Vec3(u(rng), u(rng), u(rng));
  f.plane.normal = Vec3(u(rng), u(rng), u(rng)).normalized();
  f.plane.point = 2.0 * Vec3(u(rng), u(rng), u(rng));
  f.segment = segment;
  f.alpha = a01(rng);
  f.weight = weight;
  return f;
}

}  // namespace

TEST(Assemble, EmptyWindowIsZero) {
  std::mt19937_64 rng(61);
  WindowState st = make_state(4, rng);
  SolverConfig cfg;
  const auto eqs = assemble(st, cfg);
  EXPECT_EQ(eqs.H.rows(), 30);
  EXPECT_NEAR(eqs.H.norm(), 0.0, 1e-15);
  EXPECT_NEAR(eqs.b.norm(), 0.0, 1e-15);
  EXPECT_EQ(eqs.empty_segments.size(), 4u);
}

TEST(Assemble, SingleFactorIsRankOne) {
  std::mt19937_64 rng(62);
  WindowState st = make_state(2, rng);
  SolverConfig cfg;
  cfg.huber_threshold = 0.0;
  st.geometric.push_back(random_factor(1, rng, cfg.geometric_weight()));
  const auto eqs = assemble(st, cfg);

  const MatX block = eqs.H.topLeftCorner(12, 12);
  Eigen::SelfAdjointEigenSolver<MatX> eig(block);
  int nonzero = 0;
  for (int i = 0; i < 12; ++i)
    if (eig.eigenvalues()(i) > 1e-9 * eig.eigenvalues().maxCoeff()) ++nonzero;
  EXPECT_EQ(nonzero, 1);
  EXPECT_NEAR(eqs.H.bottomRightCorner(6, 6).norm(), 0.0, 1e-15);
}

// H must equal the dense J^T W J built by explicitly stacking every factor
// Jacobian, and b the matching J^T W r.
TEST(Assemble, MatchesDenseStackedAssembly) {
  std::mt19937_64 rng(63);
  WindowState st = make_state(3, rng);
  SolverConfig cfg;
  cfg.huber_threshold = 0.0;
  for (int k = 1; k <= 3; ++k)
    for (int i = 0; i < 20; ++i)
      st.geometric.push_back(random_factor(k, rng, cfg.geometric_weight()));
  build_kinematic_factors(st, cfg);
  st.prior = MarginalizationPrior::single(Mat6::Identity() * 2.0,
                                          Vec6::Constant(0.1), st.traj.controls[0]);

  const auto eqs = assemble(st, cfg);

  const int dim = 24;
  const int rows = static_cast<int>(st.geometric.size()) + 6 * 3;
  MatX J = MatX::Zero(rows, dim);
  VecX r = VecX::Zero(rows);
  VecX w = VecX::Zero(rows);
  int row = 0;
  for (const auto& f : st.geometric) {
    const auto ev = geometric_eval(f, st.traj.controls[f.segment - 1],
                                   st.traj.controls[f.segment]);
    J.block<1, 6>(row, 6 * (f.segment - 1)) = ev.J_prev;
    J.block<1, 6>(row, 6 * f.segment) = ev.J_next;
    r(row) = ev.residual;
    w(row) = f.weight;
    ++row;
  }
  for (const auto& f : st.kinematic) {
    const int k = f.segment;
    const auto ev = kinematic_eval(f, st.traj.controls[k >= 2 ? k - 2 : 0],
                                   st.traj.controls[k - 1], st.traj.controls[k]);
    if (!f.frozen) J.block<6, 6>(row, 6 * (k - 2)) = ev.J_a;
    J.block<6, 6>(row, 6 * (k - 1)) = ev.J_b;
    J.block<6, 6>(row, 6 * k) = ev.J_c;
    r.segment<6>(row) = ev.residual;
    w.segment<6>(row).setConstant(f.weight);
    row += 6;
  }
  MatX H_dense = J.transpose() * w.asDiagonal() * J;
  VecX b_dense = J.transpose() * w.asDiagonal() * r;
  H_dense.topLeftCorner(6, 6) += st.prior.H;
  b_dense.head(6) += prior_eval(st.prior, std::span<const Pose>(st.traj.controls.data(), 1)).gradient;

  EXPECT_LT((eqs.H - H_dense).norm(), 1e-10 * std::max(1.0, H_dense.norm()));
  EXPECT_LT((eqs.b - b_dense).norm(), 1e-10 * std::max(1.0, b_dense.norm()));
  EXPECT_LT((eqs.H - eqs.H.transpose()).norm(), 1e-12);
}

TEST(Assemble, LinearOverFactorSubsets) {
  std::mt19937_64 rng(64);
  WindowState st = make_state(2, rng);
  SolverConfig cfg;
  cfg.huber_threshold = 0.0;
  std::vector<GeometricFactor> all;
  for (int i = 0; i < 30; ++i)
    all.push_back(random_factor(1 + (i % 2), rng, cfg.geometric_weight()));

  WindowState a = st, b = st, u = st;
  a.geometric.assign(all.begin(), all.begin() + 11);
  b.geometric.assign(all.begin() + 11, all.end());
  u.geometric = all;
  const auto ea = assemble(a, cfg), eb = assemble(b, cfg), eu = assemble(u, cfg);
  EXPECT_LT((eu.H - (ea.H + eb.H)).norm(), 1e-12 * std::max(1.0, eu.H.norm()));
  EXPECT_LT((eu.b - (ea.b + eb.b)).norm(), 1e-12 * std::max(1.0, eu.b.norm()));
}

TEST(Step, ZeroGradientIsNoOp) {
  std::mt19937_64 rng(65);
  WindowState st = make_state(2, rng);
  SolverConfig cfg;
  const Trajectory before = st.traj;
  const auto eqs = assemble(st, cfg);
  double lambda = cfg.lambda_init;
  const auto res = step(eqs, st, lambda, cfg);
  EXPECT_TRUE(res.converged);
  for (size_t i = 0; i < before.controls.size(); ++i)
    EXPECT_LT(ominus(st.traj.controls[i], before.controls[i]).norm(), 1e-15);
}

// Purely linear toy problem (points at the body origin observe translations
// only; a block-diagonal prior pins the rotations): one undamped Newton step
// must land on the dense-solve optimum.
TEST(Step, QuadraticToyReachesOptimumInOneStep) {
  std::mt19937_64 rng(66);
  WindowState st;
  st.traj = Trajectory::stationary(0.0, 0.1, 1);
  st.segment_points.resize(1);
  st.pseudo_twists.assign(1, Twist::Zero());

  SolverConfig cfg;
  cfg.huber_threshold = 0.0;
  cfg.lambda_init = 1e-14;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    GeometricFactor f;
    f.p_body = Vec3::Zero();
    f.plane.normal = Vec3(u(rng), u(rng), u(rng)).normalized();
    f.plane.point = 0.3 * Vec3(u(rng), u(rng), u(rng));
    f.segment = 1;
    f.alpha = (i % 2) ? 0.0 : 1.0;
    f.weight = cfg.geometric_weight();
    st.geometric.push_back(f);
  }
  Mat6 Hp = Mat6::Zero();
  Hp.topLeftCorner<3, 3>() = Mat3::Identity() * 1e-3;
  Hp.bottomRightCorner<3, 3>() = Mat3::Identity() * 10.0;
  st.prior = MarginalizationPrior::single(Hp, Vec6::Zero(), Pose::identity());

  const auto eqs = assemble(st, cfg);
  const VecX xi_expected = Eigen::LDLT<MatX>(eqs.H).solve(-eqs.b);
  double lambda = cfg.lambda_init;
  const auto res = step(eqs, st, lambda, cfg);
  ASSERT_TRUE(res.accepted);

  VecX xi_applied(12);
  xi_applied.segment<6>(0) = ominus(st.traj.controls[0], Pose::identity());
  xi_applied.segment<6>(6) = ominus(st.traj.controls[1], Pose::identity());
  EXPECT_LT((xi_applied - xi_expected).norm(), 1e-9);

  const auto eqs2 = assemble(st, cfg);
  double lambda2 = cfg.lambda_init;
  const auto res2 = step(eqs2, st, lambda2, cfg);
  EXPECT_TRUE(res2.converged);
}

TEST(Step, EnergyMonotonicOverIterations) {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 10; ++trial) {
    WindowState st = make_state(3, rng, 0.25);
    SolverConfig cfg;
    for (int k = 1; k <= 3; ++k)
      for (int i = 0; i < 30; ++i)
        st.geometric.push_back(random_factor(k, rng, cfg.geometric_weight()));
    build_kinematic_factors(st, cfg);

    double lambda = cfg.lambda_init;
    double prev_energy = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 10; ++it) {
      const auto eqs = assemble(st, cfg);
      EXPECT_LE(eqs.energy, prev_energy + 1e-9 * std::abs(prev_energy));
      prev_energy = eqs.energy;
      const auto res = step(eqs, st, lambda, cfg);
      if (res.converged || res.failed) break;
    }
  }
}

// Without a prior or map anchor a frozen-smoothness window keeps the global
// 6-dof gauge freedom; attaching a prior restores full rank.
TEST(Assemble, GaugeNullspaceDimensions) {
  std::mt19937_64 rng(68);
  WindowState st = make_state(4, rng, 0.2);
  SolverConfig cfg;
  cfg.smoothness_frozen = true;
  st.pseudo_twists.clear();
  for (int k = 1; k <= 4; ++k) st.pseudo_twists.push_back(random_twist(rng, 0.2));
  build_kinematic_factors(st, cfg);

  const auto eqs = assemble(st, cfg);
  Eigen::SelfAdjointEigenSolver<MatX> eig(eqs.H);
  const VecX ev = eig.eigenvalues();
  const double scale = ev.maxCoeff();
  for (int i = 0; i < 6; ++i) EXPECT_LT(ev(i), 1e-10 * scale);
  EXPECT_GT(ev(6), 1e-6 * scale);

  st.prior = MarginalizationPrior::single(Mat6::Identity(), Vec6::Zero(),
                                          st.traj.controls[0]);
  const auto eqs2 = assemble(st, cfg);
  Eigen::SelfAdjointEigenSolver<MatX> eig2(eqs2.H);
  EXPECT_GT(eig2.eigenvalues().minCoeff(), 1e-10 * scale);
}

TEST(Prior, HessianContributionConstantAcrossIterations) {
  std::mt19937_64 rng(69);
  WindowState st = make_state(2, rng);
  SolverConfig cfg;
  st.prior = MarginalizationPrior::single(Mat6::Identity() * 3.0,
                                          Vec6::Constant(0.2), st.traj.controls[0]);
  const MatX h1 = assemble(st, cfg).H;
  st.traj.controls[0] = oplus(st.traj.controls[0], random_twist(rng, 0.3));
  st.traj.controls[1] = oplus(st.traj.controls[1], random_twist(rng, 0.3));
  const MatX h2 = assemble(st, cfg).H;
  EXPECT_EQ((h1.topLeftCorner(6, 6) - h2.topLeftCorner(6, 6)).norm(), 0.0);
}

TEST(Marginalize, DecoupledSystemYieldsZeroPrior) {
  std::mt19937_64 rng(70);
  WindowState st = make_state(2, rng);
  SolverConfig cfg;
  st.prior = MarginalizationPrior::single(Mat6::Identity(), Vec6::Zero(),
                                          st.traj.controls[0]);
  // No factor joins T_0 to T_1 (no geometric factors, no kinematic factors).
  const auto out = marginalize(st, cfg);
  EXPECT_LT(out.H.norm(), 1e-12);
  EXPECT_LT(out.b.norm(), 1e-12);
}

TEST(Schur, MatchesDenseJointInversion) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    MatX A = MatX::Random(12, 12);
    MatX H = A * A.transpose() + 0.5 * MatX::Identity(12, 12);
    VecX b = VecX::Random(12);

    const auto schur = schur_complement(H, b, 6);
    EXPECT_FALSE(schur.regularized);

    // Marginal precision of the tail block from the dense joint covariance.
    const MatX cov = H.inverse();
    const MatX marg_precision = cov.bottomRightCorner(6, 6).inverse();
    EXPECT_LT((schur.H - marg_precision).norm(), 1e-9 * marg_precision.norm());

    // The reduced system's minimizer matches the joint minimizer's tail.
    const VecX mu = H.ldlt().solve(-b);
    const VecX mu_tail = schur.H.ldlt().solve(-schur.b);
    EXPECT_LT((mu_tail - mu.tail(6)).norm(), 1e-9 * std::max(1.0, mu.norm()));
  }
}

TEST(Schur, SingularBlockIsRegularizedAndFlagged) {
  MatX H = MatX::Zero(12, 12);
  H.bottomRightCorner(6, 6) = Mat6::Identity();
  VecX b = VecX::Zero(12);
  const auto schur = schur_complement(H, b, 6);
  EXPECT_TRUE(schur.regularized);
  EXPECT_TRUE(schur.H.allFinite());
}

// Sliding-window marginalization must reproduce the full-batch marginal on
// linear-Gaussian chains. Each slide absorbs the head state's unary factor,
// its pair factor and the carried prior into a Schur complement; every factor
// is therefore counted exactly once and the equivalence is exact.
TEST(Schur, SlidingWindowMatchesBatchOnLinearChains) {
  std::mt19937_64 rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_states = 8;  // chain of 6-dim states
    const int window = 4;    // final window covers the last 4 states
    const int dim = 6 * n_states;

    std::vector<MatX> unary_H(n_states);
    std::vector<VecX> unary_b(n_states);
    std::vector<MatX> pair_H(n_states - 1);
    std::vector<VecX> pair_b(n_states - 1);
    MatX H_batch = MatX::Zero(dim, dim);
    VecX b_batch = VecX::Zero(dim);
    for (int s = 0; s < n_states; ++s) {
      MatX A = MatX::Random(6, 6);
      unary_H[s] = A * A.transpose() + 0.1 * MatX::Identity(6, 6);
      unary_b[s] = 0.5 * VecX::Random(6);
      H_batch.block(6 * s, 6 * s, 6, 6) += unary_H[s];
      b_batch.segment(6 * s, 6) += unary_b[s];
    }
    for (int s = 0; s + 1 < n_states; ++s) {
      MatX A = MatX::Random(12, 12);
      pair_H[s] = A * A.transpose() + 0.1 * MatX::Identity(12, 12);
      pair_b[s] = 0.5 * VecX::Random(12);
      H_batch.block(6 * s, 6 * s, 12, 12) += pair_H[s];
      b_batch.segment(6 * s, 12) += pair_b[s];
    }
    const VecX mu_batch = H_batch.ldlt().solve(-b_batch);

    // Marginalize states 0 .. n-window-1 one by one.
    MatX H_prior = unary_H[0];
    VecX b_prior = unary_b[0];
    const int final_first = n_states - window;
    for (int s = 0; s < final_first; ++s) {
      MatX H = MatX::Zero(12, 12);
      VecX b = VecX::Zero(12);
      H.topLeftCorner(6, 6) += H_prior;
      b.head(6) += b_prior;
      H += pair_H[s];
      b += pair_b[s];
      const auto schur = schur_complement(H, b, 6);
      H_prior = schur.H + unary_H[s + 1];
      b_prior = schur.b + unary_b[s + 1];
    }

    // Final window: carried prior on the head plus everything not absorbed.
    MatX H = MatX::Zero(6 * window, 6 * window);
    VecX b = VecX::Zero(6 * window);
    H.topLeftCorner(6, 6) += H_prior;
    b.head(6) += b_prior;
    for (int s = final_first + 1; s < n_states; ++s) {
      H.block(6 * (s - final_first), 6 * (s - final_first), 6, 6) += unary_H[s];
      b.segment(6 * (s - final_first), 6) += unary_b[s];
    }
    for (int s = final_first; s + 1 < n_states; ++s) {
      H.block(6 * (s - final_first), 6 * (s - final_first), 12, 12) += pair_H[s];
      b.segment(6 * (s - final_first), 12) += pair_b[s];
    }
    const VecX mu_win = H.ldlt().solve(-b);
    EXPECT_LT((mu_win - mu_batch.tail(6 * window)).norm(),
              1e-7 * std::max(1.0, mu_batch.norm()));
  }
}

// Pose-level marginalize(): on an exactly linear problem (points at the body
// origin, knot-attached factors, block-diagonal priors), solving the new
// window with the Schur prior equals the T_1-marginal of the joint solve.
TEST(Marginalize, NewWindowMatchesJointSolve) {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  SolverConfig cfg;
  cfg.huber_threshold = 0.0;
  cfg.lambda_init = 1e-14;
  cfg.increment_tol = 1e-12;

  auto origin_factor = [&](int segment, double alpha) {
    GeometricFactor f;
    f.p_body = Vec3::Zero();
    f.plane.normal = Vec3(u(rng), u(rng), u(rng)).normalized();
    f.plane.point = 0.2 * Vec3(u(rng), u(rng), u(rng));
    f.segment = segment;
    f.alpha = alpha;
    f.weight = cfg.geometric_weight();
    return f;
  };
  auto rotation_pinned_prior = [&](int poses) {
    MatX H = MatX::Zero(6 * poses, 6 * poses);
    VecX b = VecX::Zero(6 * poses);
    for (int i = 0; i < poses; ++i) {
      MatX A = MatX::Random(3, 3);
      H.block(6 * i, 6 * i, 3, 3) = A * A.transpose() + MatX::Identity(3, 3);
      H.block(6 * i + 3, 6 * i + 3, 3, 3) = MatX::Identity(3, 3) * 5.0;
      b.segment(6 * i, 3) = 0.1 * VecX::Random(3);
    }
    // Couple the translation blocks of adjacent poses.
    for (int i = 0; i + 1 < poses; ++i) {
      const MatX C = 0.2 * MatX::Random(3, 3);
      H.block(6 * i, 6 * (i + 1), 3, 3) += C;
      H.block(6 * (i + 1), 6 * i, 3, 3) += C.transpose();
    }
    return std::make_pair(H, b);
  };

  // Old window over (T_0, T_1) with a coupled prior; new window over (T_1, T_2).
  WindowState old_win;
  old_win.traj = Trajectory::stationary(0.0, 0.1, 1);
  old_win.segment_points.resize(1);
  auto [Hp, bp] = rotation_pinned_prior(2);
  old_win.prior.H = Hp;
  old_win.prior.b = bp;
  old_win.prior.lin_points = {Pose::identity(), Pose::identity()};
  for (int i = 0; i < 12; ++i) old_win.geometric.push_back(origin_factor(1, i % 2 ? 0.0 : 1.0));

  std::vector<GeometricFactor> new_factors;
  for (int i = 0; i < 12; ++i) new_factors.push_back(origin_factor(1, i % 2 ? 0.0 : 1.0));

  auto solve_window = [&](WindowState& st, int iters) {
    double lambda = cfg.lambda_init;
    for (int i = 0; i < iters; ++i) {
      const auto eqs = assemble(st, cfg);
      const auto res = step(eqs, st, lambda, cfg);
      if (res.converged) break;
    }
  };

  // Route A: solve old, marginalize T_0, solve new with the prior.
  WindowState a_old = old_win;
  solve_window(a_old, 4);
  const MarginalizationPrior prior1 = marginalize(a_old, cfg);
  WindowState a_new;
  a_new.traj = Trajectory(0.1, 0.1, {a_old.traj.controls[1], a_old.traj.controls[1]});
  a_new.segment_points.resize(1);
  a_new.prior = prior1;
  a_new.geometric = new_factors;
  solve_window(a_new, 4);

  // Route B: dense joint solve over (T_0, T_1, T_2); everything is linear in
  // the translations so the tangent solution is exact.
  MatX H = MatX::Zero(18, 18);
  VecX b = VecX::Zero(18);
  H.topLeftCorner(12, 12) += Hp;
  b.head(12) += bp;
  auto add_factor = [&](const GeometricFactor& f, int base) {
    // alpha 0 attaches to the first pose of the pair, alpha 1 to the second.
    const int idx = base + (f.alpha > 0.5 ? 6 : 0);
    Eigen::Matrix<double, 1, 18> J = Eigen::Matrix<double, 1, 18>::Zero();
    J.segment<3>(idx) = f.plane.normal;
    const double r = f.plane.normal.dot(Vec3::Zero() - f.plane.point);
    H += f.weight * J.transpose() * J;
    b += f.weight * r * J.transpose();
  };
  for (const auto& f : old_win.geometric) add_factor(f, 0);
  for (const auto& f : new_factors) add_factor(f, 6);
  const VecX mu = H.ldlt().solve(-b);

  EXPECT_LT((a_new.traj.controls[0].t - mu.segment<3>(6)).norm(), 1e-7);
  EXPECT_LT((a_new.traj.controls[1].t - mu.segment<3>(12)).norm(), 1e-7);
}

// Doubling sigma_r rescales the energy but not the argmin of a purely
// geometric problem.
TEST(Optimize, SigmaScaleInvarianceOfArgmin) {
  std::mt19937_64 rng(74);
  SolverConfig cfg;
  cfg.huber_threshold = 0.0;
  cfg.lambda_init = 1e-10;
  cfg.increment_tol = 1e-10;

  WindowState st = make_state(1, rng, 0.3);
  for (int i = 0; i < 80; ++i) st.geometric.push_back(random_factor(1, rng, 1.0));

  auto run = [&](double sigma) {
    WindowState s = st;
    SolverConfig c = cfg;
    c.sigma_r = sigma;
    for (auto& f : s.geometric) f.weight = c.geometric_weight();
    double lambda = c.lambda_init;
    for (int i = 0; i < 30; ++i) {
      const auto eqs = assemble(s, c);
      const auto res = step(eqs, s, lambda, c);
      if (res.converged) break;
    }
    return s.traj;
  };

  const Trajectory t1 = run(0.1);
  const Trajectory t2 = run(0.2);
  for (size_t i = 0; i < t1.controls.size(); ++i)
    EXPECT_LT(ominus(t1.controls[i], t2.controls[i]).norm(), 1e-5);
}
