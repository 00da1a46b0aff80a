#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "scotkit/adjoint_pmp.hpp"
#include "scotkit/catalog.hpp"
#include "scotkit/discrete_control.hpp"
#include "scotkit/prob_tree.hpp"
#include "scotkit/rng.hpp"
#include "test_problems.hpp"

using namespace scotkit;

namespace {

TrajectoryPair to_trajectory(const ScenarioTree& tree,
                             const oracles::DenseLqSolution& sol, int n, int m) {
  const int N = tree.horizon();
  TrajectoryPair traj;
  for (int k = 0; k <= N; ++k) {
    AdaptedProcess xk = AdaptedProcess::zero(tree, k, n);
    for (int j = 0; j < xk.count(); ++j) xk.value(j) = sol.x[tree.node_id(k, j)];
    traj.x.push_back(std::move(xk));
    if (k < N) {
      AdaptedProcess uk = AdaptedProcess::zero(tree, k, m);
      for (int j = 0; j < uk.count(); ++j)
        uk.value(j) = sol.u[tree.node_id(k, j)];
      traj.u.push_back(std::move(uk));
    }
  }
  return traj;
}

}  // namespace

TEST_CASE("backward pass equals the dense multiplier decomposition") {
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  const ControlProblem p = testprob::lq_scalar();
  const oracles::DenseLqData data = testprob::lq_scalar_data();
  const oracles::DenseLqSolution sol = oracles::solve_dense_lq(data, tree);
  const TrajectoryPair traj = to_trajectory(tree, sol, 1, 1);

  const AdjointPair adj = backward_adjoint(p, tree, traj.x, traj.u);

  for (int k = 0; k < 2; ++k) {
    const oracles::StageDecomposition dec =
        oracles::decompose_stage(tree, k, sol.lambda, 1);
    for (int j = 0; j < tree.stage_size(k); ++j) {
      CHECK((adj.p[k].value(j) - dec.p[j]).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((adj.q[k][0].value(j) - dec.q[0][j]).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
  CHECK((adj.lambda0 - sol.lambda[0]).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("stationarity holds at the dense optimum") {
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  const ControlProblem p = testprob::lq_scalar();
  const oracles::DenseLqSolution sol =
      oracles::solve_dense_lq(testprob::lq_scalar_data(), tree);
  const TrajectoryPair traj = to_trajectory(tree, sol, 1, 1);

  const KKTReport rep = kkt_residual(p, tree, traj.u);
  CHECK(rep.aggregate <= 1e-10);
  CHECK(rep.cost == Catch::Approx(sol.cost).margin(1e-12));
  CHECK_FALSE(rep.transversality.has_value());
}

TEST_CASE("reduced gradient matches scenario-enumeration differences") {
  CounterRng rng(19);
  const ControlProblem p = testprob::random_smooth(3, 2, 2, 1, rng.fork(0));
  const ScenarioTree tree = build_tree(rademacher_noise(3, 1));
  const std::vector<AdaptedProcess> u =
      testprob::random_controls(p, tree, rng.fork(1));

  const ReducedGradient rg = reduced_gradient(p, tree, u);
  CHECK(rg.cost == Catch::Approx(oracles::tree_cost(p, tree, u)).margin(1e-12));

  for (int s = 0; s < 6; ++s) {
    CounterRng dr = rng.fork(100 + s);
    std::vector<AdaptedProcess> v;
    double nsq = 0.0;
    for (int k = 0; k < 3; ++k) {
      AdaptedProcess vk = AdaptedProcess::zero(tree, k, 2);
      for (int j = 0; j < vk.count(); ++j) vk.value(j) = dr.normal_vector(2);
      const double nk = l2_norm(tree, vk);
      nsq += nk * nk;
      v.push_back(std::move(vk));
    }
    for (auto& vk : v) vk *= 1.0 / std::sqrt(nsq);

    double exact = 0.0;
    for (int k = 0; k < 3; ++k) exact += l2_inner(tree, rg.grad[k], v[k]);
    const double fd = oracles::fd_directional(p, tree, u, v, 1e-5);
    CHECK(std::abs(fd - exact) / std::max(1.0, std::abs(exact)) <= 1e-6);
  }
}

TEST_CASE("projected gradient reaches the dense optimum") {
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  const ControlProblem p = testprob::lq_scalar();
  std::vector<AdaptedProcess> u0;
  for (int k = 0; k < 2; ++k) u0.push_back(AdaptedProcess::zero(tree, k, 1));

  SolveOptions opts;
  opts.tol = 1e-10;
  opts.max_iter = 2000;
  const SolveResult res = solve_projected_gradient(p, tree, u0, opts);
  REQUIRE(res.converged);
  CHECK(res.kkt.aggregate <= 1e-10);
  CHECK_FALSE(res.log.empty());

  const oracles::DenseLqSolution sol =
      oracles::solve_dense_lq(testprob::lq_scalar_data(), tree);
  CHECK(res.kkt.cost == Catch::Approx(sol.cost).margin(1e-9));
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < tree.stage_size(k); ++j)
      CHECK((res.trajectory.u[k].value(j) - sol.u[tree.node_id(k, j)]).norm() <=
            1e-5);
}

TEST_CASE("box-constrained solve satisfies projected stationarity") {
  ControlProblem p = testprob::lq_scalar();
  p.control_set = ControlSet::box(Eigen::VectorXd::Constant(1, -0.05),
                                  Eigen::VectorXd::Constant(1, 0.05));
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  std::vector<AdaptedProcess> u0;
  for (int k = 0; k < 2; ++k) u0.push_back(AdaptedProcess::zero(tree, k, 1));

  SolveOptions opts;
  opts.tol = 1e-9;
  const SolveResult res = solve_projected_gradient(p, tree, u0, opts);
  REQUIRE(res.converged);

  // the unconstrained optimum sits below -0.05, so the lower face is active
  const ReducedGradient rg = reduced_gradient(p, tree, res.trajectory.u);
  CHECK(res.trajectory.u[0].value(0)(0) == Catch::Approx(-0.05));
  CHECK(rg.grad[0].value(0)(0) > 0.0);
  CHECK(res.kkt.aggregate <= 1e-9);
}

TEST_CASE("free initial state reports a transversality residual") {
  ControlProblem p = testprob::lq_scalar();
  p.initial_set = CatalogSet::box(Eigen::VectorXd::Constant(1, 0.5),
                                  Eigen::VectorXd::Constant(1, 2.0));
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  std::vector<AdaptedProcess> u0;
  for (int k = 0; k < 2; ++k) u0.push_back(AdaptedProcess::zero(tree, k, 1));
  const TrajectoryPair traj = rollout(p, tree, u0);

  const KKTReport rep = kkt_residual(p, tree, u0);
  REQUIRE(rep.transversality.has_value());
  // x0 = 1 is interior, so the normal cone is {0} and the residual is |lambda0|
  const AdjointPair adj = backward_adjoint(p, tree, traj.x, traj.u);
  CHECK(*rep.transversality == Catch::Approx(adj.lambda0.norm()).margin(1e-12));
  CHECK(*rep.transversality > 0.0);
}
