#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "scotkit/rng.hpp"
#include "scotkit/sde_bridge.hpp"

using namespace scotkit;

namespace {

std::vector<AdaptedProcess> zero_controls(const Bridge& br) {
  std::vector<AdaptedProcess> u;
  for (int k = 0; k < br.steps; ++k)
    u.push_back(AdaptedProcess::zero(br.tree, k, br.problem.control_dim));
  return u;
}

}  // namespace

TEST_CASE("Euler step maps the continuous coefficients onto the tree") {
  ScalarLq d;
  d.a = -0.5;
  d.b = 1.0;
  d.q = 1.0;
  d.r = 1.0;
  d.qf = 0.5;
  d.sigma0 = 0.3;
  const SdeProblem sp = make_scalar_lq(d);
  CHECK(sp.bound_c1 == 1.5);

  const Bridge br = discretize(sp, 4);
  CHECK(br.h == 0.25);
  CHECK(br.steps == 4);
  CHECK(br.tree.horizon() == 4);
  CHECK(br.tree.num_nodes() == 31);
  CHECK_FALSE(br.problem.uses_fd_derivatives());

  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.5);
  CHECK(br.problem.drift(0, x, u)(0) ==
        Catch::Approx(2.0 + 0.25 * (-0.5 * 2.0 + 0.5)).margin(1e-15));
  CHECK(br.problem.diffusion(0, x, u)(0, 0) ==
        Catch::Approx(0.5 * 0.3).margin(1e-15));
  CHECK(br.problem.running_cost(0, x, u) ==
        Catch::Approx(0.25 * (4.0 + 0.25)).margin(1e-15));
  CHECK(br.problem.terminal_cost(x) == Catch::Approx(2.0).margin(1e-15));
  CHECK(br.problem.bound_c1 ==
        Catch::Approx(std::max(1.0 + 2.0 * 0.25 * 1.5, 0.5 * 1.5)));
}

TEST_CASE("driftless unit-noise state has exact second moments") {
  ScalarLq d;
  d.a = 0.0;
  d.b = 1.0;
  d.sigma0 = 1.0;
  d.x0 = 0.0;
  const SdeProblem sp = make_scalar_lq(d);
  const Bridge br = discretize(sp, 4);
  const TrajectoryPair traj = rollout(br.problem, br.tree, zero_controls(br));

  for (int k = 0; k <= 4; ++k) {
    const double nk = l2_norm(br.tree, traj.x[k]);
    CHECK(nk * nk == Catch::Approx(k * br.h).margin(1e-14));
    CHECK(expectation(br.tree, traj.x[k]).norm() <= 1e-14);
  }
}

TEST_CASE("path second moments sit under the explicit growth constant") {
  ScalarLq d;
  d.a = 0.0;
  d.b = 1.0;
  d.sigma0 = 1.0;
  d.x0 = 0.0;
  const SdeProblem sp = make_scalar_lq(d);
  const Bridge br = discretize(sp, 4);
  const MomentBoundReport rep =
      verify_moment_bound(sp, br, zero_controls(br));

  CHECK(rep.pass);
  CHECK(rep.zero_state_terms == Catch::Approx(1.0).margin(1e-14));
  CHECK(rep.constant ==
        Catch::Approx(24.0 * std::exp(24.0)).epsilon(1e-12));
  CHECK(rep.constant == Catch::Approx(moment_bound_constant(1.0, 1.0, 1)));
  CHECK(rep.expected_max_sq > 0.0);
  CHECK(rep.expected_max_sq <= rep.bound);
}

TEST_CASE("adjoint second component is rescaled by the step size") {
  ScalarLq d;
  d.a = -0.5;
  d.sigma0 = 0.3;
  d.qf = 0.5;
  const Bridge br = discretize(make_scalar_lq(d), 4);

  CounterRng rng(5);
  std::vector<AdaptedProcess> u = zero_controls(br);
  for (auto& uk : u)
    for (int j = 0; j < uk.count(); ++j)
      uk.value(j) = 0.2 * rng.normal_vector(1);

  const WeakPmpReport rep = weak_pmp_check(br, u);
  CHECK(rep.h == br.h);
  CHECK(rep.convention.find("q_k / sqrt(h)") != std::string::npos);
  const double rh = std::sqrt(br.h);
  for (int k = 0; k < br.steps; ++k)
    for (int j = 0; j < rep.q_scaled[k][0].count(); ++j)
      CHECK(rep.q_scaled[k][0].value(j)(0) * rh ==
            Catch::Approx(rep.adjoint.q[k][0].value(j)(0)).margin(1e-14));
  CHECK(rep.kkt.aggregate >= 0.0);
}

TEST_CASE("time-integrated tree norm reduces to sqrt(T) for a unit signal") {
  const Bridge br = discretize(make_scalar_lq(ScalarLq{}), 8);
  std::vector<AdaptedProcess> v;
  for (int k = 0; k < br.steps; ++k) {
    AdaptedProcess vk = AdaptedProcess::zero(br.tree, k, 1);
    for (int j = 0; j < vk.count(); ++j) vk.value(j).setConstant(1.0);
    v.push_back(std::move(vk));
  }
  CHECK(bridge_l2_norm(br, v) == Catch::Approx(1.0).margin(1e-13));
}
