#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "scotkit/prob_tree.hpp"
#include "scotkit/rng.hpp"
#include "scotkit/stage_spaces.hpp"

using namespace scotkit;

namespace {

NoiseSpec three_point(int horizon) {
  const double s = std::sqrt(2.0);
  CoordinateSupport coord{{-s, 0.25}, {0.0, 0.5}, {s, 0.25}};
  NoiseSpec spec;
  spec.horizon = horizon;
  spec.dim = 1;
  spec.support = {coord};
  return spec;
}

StageDecomposition random_decomposition(const ScenarioTree& tree, int k,
                                        int dim, CounterRng rng) {
  StageDecomposition dec;
  dec.stage = k;
  for (int i = 0; i <= tree.noise_dim(); ++i) {
    AdaptedProcess c = AdaptedProcess::zero(tree, k - 1, dim);
    for (int j = 0; j < c.count(); ++j) c.value(j) = rng.normal_vector(dim);
    dec.components.push_back(std::move(c));
  }
  return dec;
}

}  // namespace

TEST_CASE("squared noise projects onto the constant with unit residual") {
  const ScenarioTree tree = build_tree(three_point(1));

  AdaptedProcess wsq = AdaptedProcess::zero(tree, 1, 1);
  for (int j = 0; j < wsq.count(); ++j) {
    const double w = tree.noise(tree.node_id(1, j))(0);
    wsq.value(j)(0) = w * w;
  }

  const ProjectionResult pr = project(tree, wsq);
  CHECK(pr.residual == Catch::Approx(1.0).margin(1e-14));
  CHECK(pr.decomposition.components[0].value(0)(0) == Catch::Approx(1.0));
  CHECK(pr.decomposition.components[1].value(0)(0) ==
        Catch::Approx(0.0).margin(1e-14));

  const MembershipReport in = membership(tree, wsq);
  CHECK_FALSE(in.member);

  const AdaptedProcess back = assemble(tree, pr.decomposition);
  const MembershipReport ok = membership(tree, back);
  CHECK(ok.member);
}

TEST_CASE("assemble then project recovers the coefficients") {
  CounterRng rng(321);
  for (int trial = 0; trial < 12; ++trial) {
    const int N = rng.uniform_int(1, 4);
    const int d = rng.uniform_int(1, 2);
    const int dim = rng.uniform_int(1, 2);
    const ScenarioTree tree = build_tree(rademacher_noise(N, d));
    const int k = rng.uniform_int(1, N);

    const StageDecomposition dec =
        random_decomposition(tree, k, dim, rng.fork(trial));
    const AdaptedProcess x = assemble(tree, dec);
    const ProjectionResult pr = project(tree, x);

    CHECK(pr.residual <= 1e-11);
    for (int i = 0; i <= d; ++i)
      for (int j = 0; j < dec.components[i].count(); ++j)
        CHECK((pr.decomposition.components[i].value(j) -
               dec.components[i].value(j))
                  .norm() <= 1e-11);
  }
}

TEST_CASE("projection is an isometry onto the stage space") {
  CounterRng rng(99);
  const ScenarioTree tree = build_tree(rademacher_noise(3, 2));
  for (int trial = 0; trial < 8; ++trial) {
    const int k = rng.uniform_int(1, 3);
    AdaptedProcess x = AdaptedProcess::zero(tree, k, 2);
    CounterRng r = rng.fork(trial);
    for (int j = 0; j < x.count(); ++j) x.value(j) = r.normal_vector(2);

    const ProjectionResult pr = project(tree, x);
    const AdaptedProcess proj = assemble(tree, pr.decomposition);

    // Pythagoras and the norm identity on X_k.
    const double nx = l2_norm(tree, x);
    const double np = l2_norm(tree, proj);
    CHECK(norm_Xk(tree, pr.decomposition) == Catch::Approx(np).margin(1e-12));
    CHECK(np * np + pr.residual * pr.residual ==
          Catch::Approx(nx * nx).margin(1e-11));

    AdaptedProcess diff = x;
    diff -= proj;
    CHECK(l2_norm(tree, diff) == Catch::Approx(pr.residual).margin(1e-12));
  }
}

TEST_CASE("stage elements round-trip through processes") {
  const ScenarioTree tree = build_tree(rademacher_noise(2, 1));
  CounterRng rng(7);

  const StageElement e0 = StageElement::stage0(Eigen::Vector2d(1.0, -2.0));
  CHECK(e0.norm(tree) == Catch::Approx(std::sqrt(5.0)));
  CHECK(e0.to_process(tree).value(0)(1) == -2.0);

  const StageDecomposition dec = random_decomposition(tree, 2, 2, rng);
  const StageElement e = StageElement::from_decomposition(tree, dec);
  const StageElement again = StageElement::from_process(tree, e.to_process(tree));
  CHECK(again.projection_residual() <= 1e-12);
  CHECK(again.norm(tree) == Catch::Approx(e.norm(tree)));
}
