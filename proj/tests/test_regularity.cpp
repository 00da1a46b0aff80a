#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "scotkit/catalog.hpp"
#include "scotkit/regularity_lab.hpp"
#include "scotkit/rng.hpp"

using namespace scotkit;

namespace {

ConstraintSystem wide_linear() {
  Eigen::MatrixXd A(2, 3);
  A << 1.0, 0.0, 0.5, 0.0, 1.0, -0.25;
  ConstraintSystem sys;
  sys.set_linear_map(A, Eigen::VectorXd::Zero(2));
  sys.C = CatalogSet::whole(3);
  sys.D = CatalogSet::point(Eigen::VectorXd::Zero(2));
  sys.x0 = Eigen::VectorXd::Zero(3);
  return sys;
}

}  // namespace

TEST_CASE("direction grids cover the axes") {
  CounterRng rng(1);
  const auto d1 = unit_directions(1, 10, rng.fork(0));
  REQUIRE(d1.size() == 2);
  CHECK(d1[0](0) == 1.0);
  CHECK(d1[1](0) == -1.0);

  const auto d2 = unit_directions(2, 64, rng.fork(1));
  REQUIRE(d2.size() == 64);
  CHECK((d2[16] - Eigen::Vector2d(0.0, 1.0)).norm() <= 1e-12);

  const auto d3 = unit_directions(3, 12, rng.fork(2));
  REQUIRE(d3.size() == 12);
  for (const auto& v : d3) CHECK(v.norm() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("tangent-circle geometry helpers agree with the catalog sets") {
  const ConstraintSystem sys = circles_system();
  for (const double rho : {0.1, 0.01, 0.001}) {
    const Eigen::Vector2d pt = circles_point_at(rho);
    CHECK(sys.C.contains(pt, 1e-12));
    CHECK(pt.norm() == Catch::Approx(rho).epsilon(1e-12));
    const double d = sys.D.distance(pt).dist;
    CHECK(d == Catch::Approx(circles_outer_distance(rho)).epsilon(1e-9));
  }
}

TEST_CASE("calmness ratio of the tangent circles scales like 4 over rho") {
  const ConstraintSystem sys = circles_system();
  CalmnessOptions opts;
  opts.radius = 0.1;
  opts.samples = 64;
  opts.seed = 3;
  const CalmnessReport rep = estimate_calmness(sys, opts);
  REQUIRE(rep.rungs.size() == 1);
  CHECK(rep.rungs[0].admitted > 0);
  CHECK(rep.rungs[0].solver_failures == 0);
  CHECK(rep.method == "declared-set");
  CHECK(rep.a_hat * opts.radius >= 3.6);
  CHECK(rep.a_hat * opts.radius <= 4.4);
  CHECK_FALSE(rep.diverging);
}

TEST_CASE("refinement ladder drives the circle ratio past the threshold") {
  CalmnessOptions opts;
  opts.radius = 0.1;
  opts.samples = 64;
  opts.seed = 3;
  opts.refinements = 40;
  const CalmnessReport rep = estimate_calmness(circles_system(), opts);
  CHECK(rep.diverging);
  CHECK(rep.a_hat > 1e6);
  CHECK(rep.rungs.size() >= 10);
  CHECK(rep.rungs.size() <= 25);
  CHECK(rep.rungs.back().ratio > 1e6);
}

TEST_CASE("diagonal truncation multipliers match the closed form") {
  const MultiplierResult r5 = compute_multiplier(brokate_system(5));
  REQUIRE(r5.found);
  CHECK(r5.method == "least-norm-lsq");
  CHECK(r5.norm == Catch::Approx(brokate_multiplier_norm(5)).epsilon(1e-12));
  CHECK(r5.y(0) == Catch::Approx(-1.0).margin(1e-10));
  CHECK(r5.y(4) == Catch::Approx(-3.2).margin(1e-10));

  double prev = compute_multiplier(brokate_system(2)).norm;
  for (int n = 3; n <= 8; ++n) {
    const double cur = compute_multiplier(brokate_system(n)).norm;
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK(brokate_multiplier_norm(15) > 1e3);
}

TEST_CASE("sampled regularity holds for a wide full-rank linear map") {
  const ConstraintSystem sys = wide_linear();
  RegularityOptions opts;
  opts.alpha = 1.0;  // 1 / sigma_min, exact for this matrix
  opts.base_samples = 30;
  opts.shift_samples = 5;
  opts.seed = 11;
  const RegularityReport rep = check_metric_regularity(sys, opts);
  CHECK(rep.pass);
  CHECK(rep.violations == 0);
  CHECK(rep.solver_failures == 0);
  CHECK(rep.admissible > 0);
  CHECK(rep.method == "affine-lsq");
  CHECK(rep.worst_ratio <= 1.0 + 1e-9);
}

TEST_CASE("an understated modulus is reported as violated") {
  RegularityOptions opts;
  opts.alpha = 0.2;
  opts.base_samples = 10;
  opts.shift_samples = 3;
  opts.seed = 11;
  const RegularityReport rep = check_metric_regularity(wide_linear(), opts);
  CHECK_FALSE(rep.pass);
  CHECK(rep.violations > 0);
}

TEST_CASE("calmness of the solution map transfers to the augmented distance") {
  TransferOptions opts;
  opts.a = 1.0;
  opts.K_g = std::sqrt(1.3125);
  opts.radius = 0.25;
  opts.samples = 200;
  opts.seed = 5;
  const TransferReport rep = check_calmness_transfer(wide_linear(), opts);
  CHECK(rep.checked > 0);
  CHECK(rep.pass);
  CHECK(rep.constant == Catch::Approx(1.0 + 1.0 * (1.0 + std::sqrt(1.3125))));
  CHECK(rep.worst_ratio <= rep.constant * (1.0 + 1e-6));
}

TEST_CASE("two-cone qualification fails at the half-circle origin") {
  const ConstraintSystem sys = circles_system(false);
  QualOptions opts;
  opts.alpha1 = sys.alpha1;
  opts.alpha2 = sys.alpha2;
  opts.seed = 9;
  const QualReport rep =
      check_qualification(sys, QualVariant::DoublePrime, opts);
  CHECK_FALSE(rep.satisfied);
  // max over unit w of min distance to the two difference branches,
  // attained at the 67.5 degree grid direction
  CHECK(rep.worst_residual ==
        Catch::Approx(std::sin(67.5 * 3.14159265358979323846 / 180.0))
            .margin(0.01));
  CHECK(rep.base_points >= 1);
}

TEST_CASE("two-cone qualification holds for the full circle") {
  const ConstraintSystem sys = circles_system(true);
  QualOptions opts;
  opts.alpha1 = sys.alpha1;
  opts.alpha2 = sys.alpha2;
  opts.seed = 9;
  const QualReport rep =
      check_qualification(sys, QualVariant::DoublePrime, opts);
  CHECK(rep.satisfied);
  CHECK(rep.worst_residual <= opts.tol);
}

TEST_CASE("product of convex factors keeps the component-wise tangent cone") {
  const CatalogSet box = CatalogSet::box(Eigen::Vector2d(-1.0, -1.0),
                                         Eigen::Vector2d(1.0, 1.0));
  const CatalogSet ball = CatalogSet::ball(Eigen::Vector2d::Zero(), 1.0);
  ProductConeOptions opts;
  opts.seed = 21;
  const ProductConeReport rep = check_product_cone(
      box, ball, Eigen::Vector2d(1.0, 0.3), Eigen::Vector2d(0.0, 1.0), opts);
  CHECK(rep.factor_convex);
  CHECK(rep.inclusion_ok);
  CHECK(rep.equality_ok);
  CHECK(rep.dini_reading_flagged);
  CHECK(rep.in_cone_checked > 0);
  CHECK(rep.out_cone_checked > 0);
  CHECK(rep.max_sum_bound_violation <= 1e-9);
}

TEST_CASE("feasible distance picks the structural fast paths") {
  SECTION("declared set") {
    const FeasibleDistanceResult fd =
        feasible_distance(circles_system(), Eigen::Vector2d(0.3, 0.4));
    CHECK(fd.converged);
    CHECK(fd.method == "declared-set");
    CHECK(fd.dist == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("identity map over the whole space") {
    ConstraintSystem sys;
    sys.set_identity_map(2);
    sys.C = CatalogSet::whole(2);
    sys.D = CatalogSet::ball(Eigen::Vector2d::Zero(), 1.0);
    sys.x0 = Eigen::Vector2d::Zero();
    const FeasibleDistanceResult fd =
        feasible_distance(sys, Eigen::Vector2d(3.0, 0.0));
    CHECK(fd.converged);
    CHECK(fd.method == "set-distance");
    CHECK(fd.dist == Catch::Approx(2.0).margin(1e-12));
  }
  SECTION("linear map onto an affine target") {
    Eigen::MatrixXd A(1, 2);
    A << 1.0, 1.0;
    ConstraintSystem sys;
    sys.set_linear_map(A, Eigen::VectorXd::Zero(1));
    sys.C = CatalogSet::whole(2);
    sys.D = CatalogSet::point(Eigen::VectorXd::Zero(1));
    sys.x0 = Eigen::Vector2d::Zero();
    const FeasibleDistanceResult fd =
        feasible_distance(sys, Eigen::Vector2d(1.0, 1.0));
    CHECK(fd.converged);
    CHECK(fd.method == "affine-lsq");
    CHECK(fd.dist == Catch::Approx(std::sqrt(2.0)).margin(1e-10));
    CHECK(fd.point.norm() <= 1e-10);
  }
  SECTION("general case falls back to multistart descent") {
    ConstraintSystem sys;
    sys.set_identity_map(2);
    sys.C = CatalogSet::box(Eigen::Vector2d(-1.0, -1.0),
                            Eigen::Vector2d(1.0, 1.0));
    sys.D = CatalogSet::ball(Eigen::Vector2d::Zero(), 1.0);
    sys.x0 = Eigen::Vector2d::Zero();
    const FeasibleDistanceResult fd =
        feasible_distance(sys, Eigen::Vector2d(2.0, 0.0));
    REQUIRE(fd.converged);
    CHECK(fd.method == "multistart-gn");
    CHECK(fd.dist >= 1.0 - 1e-9);
    CHECK(fd.dist <= 1.0 + 1e-4);
  }
}
