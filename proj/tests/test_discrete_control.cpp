#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "scotkit/adjoint_pmp.hpp"
#include "scotkit/discrete_control.hpp"
#include "scotkit/prob_tree.hpp"
#include "scotkit/rng.hpp"
#include "test_problems.hpp"

using namespace scotkit;

TEST_CASE("control set projection, violation and stationarity") {
  const ControlSet box = ControlSet::box(Eigen::VectorXd::Constant(1, -1.0),
                                         Eigen::VectorXd::Constant(1, 1.0));
  CHECK(box.project(Eigen::VectorXd::Constant(1, 3.0))(0) == 1.0);
  CHECK(box.violation(Eigen::VectorXd::Constant(1, 3.0)) == Catch::Approx(2.0));
  CHECK(box.violation(Eigen::VectorXd::Constant(1, 0.5)) == 0.0);

  // At the upper face only the inward component of -grad survives.
  const Eigen::VectorXd at = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(box.stationarity_residual(at, Eigen::VectorXd::Constant(1, -2.0)) ==
        Catch::Approx(0.0).margin(1e-15));
  CHECK(box.stationarity_residual(at, Eigen::VectorXd::Constant(1, 2.0)) ==
        Catch::Approx(2.0));

  const ControlSet ball = ControlSet::ball(Eigen::VectorXd::Zero(2), 1.0);
  Eigen::VectorXd far(2);
  far << 3.0, 4.0;
  CHECK(ball.project(far).norm() == Catch::Approx(1.0));
}

TEST_CASE("rollout reproduces a hand-computed path") {
  const ControlProblem p = testprob::lq_scalar();
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  std::vector<AdaptedProcess> u;
  for (int k = 0; k < 2; ++k) {
    AdaptedProcess uk = AdaptedProcess::zero(tree, k, 1);
    for (int j = 0; j < uk.count(); ++j) uk.value(j)(0) = 0.1 * (k + 1);
    u.push_back(uk);
  }
  const TrajectoryPair traj = rollout(p, tree, u);

  // x1 on the +1 branch: 0.9*1 + 0.1 + 0.2*1 = 1.2; on -1: 0.8.
  CHECK(traj.x[0].value(0)(0) == 1.0);
  CHECK(traj.x[1].value(0)(0) == Catch::Approx(1.2));
  CHECK(traj.x[1].value(1)(0) == Catch::Approx(0.8));
  // Child 0 of node 1 carries w = +1: 0.9*1.2 + 0.2 + 0.2*1.2 = 1.52.
  CHECK(traj.x[2].value(0)(0) == Catch::Approx(1.52));

  const std::vector<StageElement> res = residual_g(p, tree, traj.x, traj.u);
  REQUIRE(res.size() == 3);
  CHECK(res[0].stage0_value().norm() == Catch::Approx(0.0).margin(1e-14));
  for (int k = 1; k <= 2; ++k)
    CHECK(res[k].norm(tree) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("linearization matches a directional finite difference") {
  CounterRng rng(17);
  const ControlProblem p = testprob::random_smooth(3, 2, 1, 1, rng.fork(0));
  const ScenarioTree tree = build_tree(rademacher_noise(3, 1));
  const std::vector<AdaptedProcess> u =
      testprob::random_controls(p, tree, rng.fork(1));
  const TrajectoryPair traj = rollout(p, tree, u);

  std::vector<AdaptedProcess> z, v;
  CounterRng zr = rng.fork(2);
  for (int k = 0; k <= 3; ++k) {
    AdaptedProcess zk = AdaptedProcess::zero(tree, k, 2);
    for (int j = 0; j < zk.count(); ++j) zk.value(j) = zr.normal_vector(2);
    z.push_back(zk);
    if (k < 3) {
      AdaptedProcess vk = AdaptedProcess::zero(tree, k, 1);
      for (int j = 0; j < vk.count(); ++j) vk.value(j) = zr.normal_vector(1);
      v.push_back(vk);
    }
  }

  const std::vector<StageElement> lin = linearize_g(p, tree, traj.x, traj.u, z, v);

  const double tau = 1e-6;
  std::vector<AdaptedProcess> xp = traj.x, up = traj.u, xm = traj.x, um = traj.u;
  for (int k = 0; k <= 3; ++k) {
    AdaptedProcess dz = z[k];
    dz *= tau;
    xp[k] += dz;
    xm[k] -= dz;
  }
  for (int k = 0; k < 3; ++k) {
    AdaptedProcess dv = v[k];
    dv *= tau;
    up[k] += dv;
    um[k] -= dv;
  }
  const std::vector<StageElement> gp = residual_g(p, tree, xp, up);
  const std::vector<StageElement> gm = residual_g(p, tree, xm, um);

  for (int k = 0; k <= 3; ++k) {
    AdaptedProcess fd = gp[k].to_process(tree);
    fd -= gm[k].to_process(tree);
    fd *= 1.0 / (2.0 * tau);
    AdaptedProcess err = lin[k].to_process(tree);
    err -= fd;
    CHECK(l2_norm(tree, err) <= 1e-7);
  }
}

TEST_CASE("growth bound audit flags an out-of-bound slope") {
  ControlProblem p = testprob::lq_scalar();
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  CHECK(verify_growth_bounds(p, tree, 1.0, 32, 5).empty());
  p.bound_c1 = 1.0;  // true slope |a| + |b| = 1.9
  const std::vector<std::string> bad = verify_growth_bounds(p, tree, 1.0, 32, 5);
  CHECK_FALSE(bad.empty());
}

TEST_CASE("constants of the right inverse") {
  ControlProblem p = testprob::lq_scalar();
  p.bound_c1 = 2.0;
  p.horizon = 2;
  CHECK(cbar_constant(p) == Catch::Approx(9.0 * 5.0));
  CHECK(right_inverse_stage_bound(p) ==
        Catch::Approx(3.0 * std::pow(45.0, 3.0)));
  CHECK(dynamics_regularity_constant(p) ==
        Catch::Approx(3.0 * std::pow(45.0, 1.5)));
}

TEST_CASE("right inverse solves the linearized equation stagewise") {
  CounterRng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    CounterRng tr = rng.fork(trial);
    const int N = tr.uniform_int(2, 4);
    const int n = tr.uniform_int(1, 2);
    const int d = tr.uniform_int(1, 2);
    const ControlProblem p = testprob::random_smooth(N, n, 1, d, tr.fork(0));
    const ScenarioTree tree = build_tree(rademacher_noise(N, d));
    const std::vector<AdaptedProcess> u =
        testprob::random_controls(p, tree, tr.fork(1));
    const TrajectoryPair traj = rollout(p, tree, u);

    std::vector<StageElement> delta;
    delta.push_back(StageElement::stage0(tr.normal_vector(n)));
    for (int k = 1; k <= N; ++k) {
      StageDecomposition dec;
      dec.stage = k;
      for (int i = 0; i <= d; ++i) {
        AdaptedProcess c = AdaptedProcess::zero(tree, k - 1, n);
        for (int j = 0; j < c.count(); ++j) c.value(j) = tr.normal_vector(n);
        dec.components.push_back(std::move(c));
      }
      delta.push_back(StageElement::from_decomposition(tree, dec));
    }

    const std::vector<AdaptedProcess> z =
        solve_right_inverse(p, tree, traj.x, traj.u, delta);

    std::vector<AdaptedProcess> v;
    for (int k = 0; k < N; ++k)
      v.push_back(AdaptedProcess::zero(tree, k, 1));
    const std::vector<StageElement> lin =
        linearize_g(p, tree, traj.x, traj.u, z, v);

    double dsum = 0.0;
    for (int k = 0; k <= N; ++k) {
      const double dn = delta[k].norm(tree);
      dsum += dn * dn;
      AdaptedProcess err = lin[k].to_process(tree);
      err -= delta[k].to_process(tree);
      CHECK(l2_norm(tree, err) <= 1e-11);
    }
    const double bound = right_inverse_stage_bound(p) * dsum;
    for (int k = 1; k <= N; ++k) {
      const double zn = l2_norm(tree, z[k]);
      CHECK(zn * zn <= bound * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("regularity check accepts perturbed targets") {
  CounterRng rng(31);
  const ControlProblem p = testprob::random_smooth(3, 2, 1, 1, rng.fork(0));
  const ScenarioTree tree = build_tree(rademacher_noise(3, 1));
  const std::vector<AdaptedProcess> u =
      testprob::random_controls(p, tree, rng.fork(1));
  const TrajectoryPair traj = rollout(p, tree, u);

  for (int trial = 0; trial < 20; ++trial) {
    CounterRng tr = rng.fork(100 + trial);
    std::vector<StageElement> y;
    y.push_back(StageElement::stage0(0.1 * tr.normal_vector(2)));
    for (int k = 1; k <= 3; ++k) {
      StageDecomposition dec;
      dec.stage = k;
      for (int i = 0; i <= 1; ++i) {
        AdaptedProcess c = AdaptedProcess::zero(tree, k - 1, 2);
        for (int j = 0; j < c.count(); ++j)
          c.value(j) = 0.1 * tr.normal_vector(2);
        dec.components.push_back(std::move(c));
      }
      y.push_back(StageElement::from_decomposition(tree, dec));
    }
    const DynamicsRegularityReport rep =
        check_dynamics_regularity(p, tree, traj.x, traj.u, y);
    CHECK(rep.pass);
    CHECK(rep.alpha == Catch::Approx(dynamics_regularity_constant(p)));
  }
}

TEST_CASE("projection keeps iterates feasible under a tight box") {
  ControlProblem p = testprob::lq_scalar();
  p.control_set = ControlSet::box(Eigen::VectorXd::Constant(1, -0.05),
                                  Eigen::VectorXd::Constant(1, 0.05));
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  std::vector<AdaptedProcess> u0;
  for (int k = 0; k < 2; ++k)
    u0.push_back(AdaptedProcess::zero(tree, k, 1));

  SolveOptions opts;
  opts.tol = 1e-9;
  opts.max_iter = 500;
  const SolveResult res = solve_projected_gradient(p, tree, u0, opts);
  CHECK(res.converged);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < res.trajectory.u[k].count(); ++j)
      CHECK(std::abs(res.trajectory.u[k].value(j)(0)) <= 0.05 + 1e-12);
}

TEST_CASE("a flat objective stalls the line search at once") {
  ControlProblem p = testprob::lq_scalar();
  p.running_cost = [](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return 0.0;
  };
  p.running_cost_grad_x = [](int, const Eigen::VectorXd&,
                             const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(1).eval();
  };
  p.running_cost_grad_u = [](int, const Eigen::VectorXd&,
                             const Eigen::VectorXd& u) {
    return Eigen::VectorXd::Constant(1, 1.0).eval();  // constant pull
  };
  p.terminal_cost = [](const Eigen::VectorXd&) { return 0.0; };
  p.terminal_cost_grad = [](const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(1).eval();
  };
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  std::vector<AdaptedProcess> u0;
  for (int k = 0; k < 2; ++k)
    u0.push_back(AdaptedProcess::zero(tree, k, 1));

  SolveOptions opts;
  opts.tol = -1.0;  // unreachable, forces the stall path
  opts.max_iter = 10;
  try {
    solve_projected_gradient(p, tree, u0, opts);
    FAIL("expected a stall");
  } catch (const StallError& e) {
    CHECK(e.last_control.size() == 2);
  }
}
