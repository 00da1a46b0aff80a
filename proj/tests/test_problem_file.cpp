#include <catch2/catch_amalgamated.hpp>
#include <cctype>
#include <string>

#include "scotkit/problem_file.hpp"

using namespace scotkit;

namespace {

std::string fixture(const std::string& name) {
  return std::string(FIXTURES_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("a linear-quadratic file loads with a stable digest") {
  const ProblemFile pf = load_problem(fixture("lq_small.json"));
  CHECK(pf.version == 1);
  CHECK(pf.kind == "discrete");
  CHECK(pf.family == "linear_quadratic");
  CHECK(pf.seed == 42);
  REQUIRE(pf.digest.size() == 16);
  for (const char c : pf.digest) CHECK(std::isxdigit(static_cast<unsigned char>(c)));
  CHECK(pf.digest == load_problem(fixture("lq_small.json")).digest);

  const DiscreteInstance inst = make_discrete(pf);
  CHECK(inst.tree.num_nodes() == 7);
  CHECK(inst.problem.horizon == 2);
  CHECK(inst.problem.state_dim == 1);
  CHECK_FALSE(inst.problem.uses_fd_derivatives());

  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  CHECK(inst.problem.drift(0, x, u)(0) == Catch::Approx(0.9).margin(1e-15));
  CHECK(inst.problem.diffusion(0, x, u)(0, 0) ==
        Catch::Approx(0.2).margin(1e-15));
}

TEST_CASE("control bounds from the file clip projections") {
  const DiscreteInstance inst =
      make_discrete(load_problem(fixture("lq_box.json")));
  REQUIRE(inst.problem.control_set.has_value());
  const Eigen::VectorXd big = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(inst.problem.control_set->project(big)(0) ==
        Catch::Approx(0.05).margin(1e-15));
}

TEST_CASE("the nonlinear family adds smooth terms on top of the linear part") {
  const DiscreteInstance inst =
      make_discrete(load_problem(fixture("nonlinear_small.json")));
  CHECK_FALSE(inst.problem.uses_fd_derivatives());

  Eigen::VectorXd x(2);
  x << 0.7, -0.4;
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.3);
  Eigen::MatrixXd A(2, 2);
  A << 0.8, 0.1, -0.05, 0.7;
  Eigen::MatrixXd B(2, 1);
  B << 0.5, 1.0;
  const Eigen::VectorXd linear = A * x + B * u;
  CHECK((inst.problem.drift(0, x, u) - linear).norm() > 1e-3);
}

TEST_CASE("sde files carry step counts and tolerance overrides") {
  const ProblemFile pf = load_problem(fixture("lq_sde.json"));
  REQUIRE(pf.tol.has_value());
  CHECK(*pf.tol == 1e-8);
  REQUIRE(pf.max_iter.has_value());
  CHECK(*pf.max_iter == 5000);

  const SdeInstance inst = make_sde(pf);
  CHECK(inst.steps == 8);
  CHECK(inst.problem.T == 1.0);
  CHECK(inst.problem.x0(0) == 1.0);
  CHECK(inst.problem.bound_c1 == 1.5);
}

TEST_CASE("regularity files reconstruct the catalog geometry") {
  SECTION("tangent circles") {
    const ProblemFile pf = load_problem(fixture("circles.json"));
    const ConstraintSystem sys = make_regularity(pf);
    CHECK(sys.alpha1 == 2.0);
    CHECK(sys.alpha2 == 2.0);
    CHECK(sys.K_g == 1.0);
    CHECK(sys.g_is_identity);
    CHECK(sys.C.contains(Eigen::Vector2d(0.0, 0.0), 1e-12));
    CHECK(sys.C.contains(Eigen::Vector2d(1.0, -1.0), 1e-12));
    CHECK_FALSE(sys.C.contains(Eigen::Vector2d(-1.0, -1.0), 1e-6));
    REQUIRE(sys.feasible_set.has_value());
    CHECK(sys.feasible_set->distance(Eigen::Vector2d(0.3, 0.4)).dist ==
          Catch::Approx(0.5));
    CHECK(pf.params.at("variant") == "double_prime");
    CHECK(pf.params.at("expect_satisfied") == false);
    CHECK(pf.params.at("expect_diverging") == true);
  }
  SECTION("wide linear map") {
    const ConstraintSystem sys =
        make_regularity(load_problem(fixture("regular_linear.json")));
    CHECK(sys.dim_x == 3);
    CHECK(sys.dim_y == 2);
    CHECK(sys.a == 1.0);
    CHECK(sys.alpha == 1.25);
    CHECK(sys.K_g == Catch::Approx(std::sqrt(1.3125)).margin(1e-12));
    CHECK(sys.K_f ==
          Catch::Approx(Eigen::Vector3d(1.0, 1.0, 0.25).norm()).margin(1e-12));
    REQUIRE(sys.f_grad);
    CHECK(sys.f(Eigen::Vector3d(1.0, 2.0, 4.0)) == Catch::Approx(4.0));
  }
  SECTION("box against ball") {
    const ConstraintSystem sys =
        make_regularity(load_problem(fixture("box_ball.json")));
    CHECK(sys.a == 2.0);
    CHECK(sys.C.contains(sys.x0, 1e-12));
    CHECK(sys.D.contains(sys.g(sys.x0), 1e-12));
  }
}

TEST_CASE("malformed files are rejected with field-level messages") {
  SECTION("noise law with wrong second moment") {
    const ProblemFile pf = load_problem(fixture("bad_noise.json"));
    CHECK_THROWS_MATCHES(
        make_discrete(pf), InputError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("noise coordinate 0")));
  }
  SECTION("matrix with the wrong shape") {
    const ProblemFile pf = load_problem(fixture("bad_shape.json"));
    CHECK_THROWS_MATCHES(make_discrete(pf), InputError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("'Q'")));
  }
  SECTION("missing file") {
    CHECK_THROWS_MATCHES(load_problem(fixture("does_not_exist.json")),
                         InputError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("cannot open")));
  }
  SECTION("unsupported version") {
    nlohmann::json j = {{"version", 2},
                        {"kind", "discrete"},
                        {"family", "linear_quadratic"}};
    CHECK_THROWS_MATCHES(parse_problem(j), InputError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("version")));
  }
  SECTION("unknown kind") {
    nlohmann::json j = {
        {"version", 1}, {"kind", "foo"}, {"family", "linear_quadratic"}};
    CHECK_THROWS_MATCHES(
        parse_problem(j), InputError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
            "expected discrete, sde or regularity")));
  }
  SECTION("kind routed to the wrong builder") {
    const ProblemFile pf = load_problem(fixture("lq_small.json"));
    CHECK_THROWS_AS(make_sde(pf), InputError);
    CHECK_THROWS_AS(make_regularity(pf), InputError);
  }
}
