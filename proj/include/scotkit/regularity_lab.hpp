#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "scotkit/catalog.hpp"
#include "scotkit/errors.hpp"
#include "scotkit/rng.hpp"

namespace scotkit {

// Feasibility system "find x in C with g(x) in D", plus an objective f for
// multiplier computations. Declared constants are inputs to the checks, never
// derived silently; every estimator reports the method it used.
struct ConstraintSystem {
  int dim_x = 0;
  int dim_y = 0;

  std::function<double(const Eigen::VectorXd&)> f;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f_grad;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> g;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> g_jac;

  CatalogSet C = CatalogSet::whole(1);
  CatalogSet D = CatalogSet::whole(1);
  Eigen::VectorXd x0;

  // Declared constants (0 = not declared).
  double K_f = 0.0;   // Lipschitz constant of f
  double K_g = 0.0;   // Lipschitz constant of g
  double a = 0.0;     // calmness constant
  double alpha = 0.0; // regularity constant (single-cone form)
  double alpha1 = 0.0, alpha2 = 0.0;  // regularity constants (two-cone form)
  double r = 0.0;     // regularity radius

  // Exact feasible set {x in C : g(x) in D} when representable; distances to
  // it are then catalog-exact instead of solver estimates.
  std::optional<CatalogSet> feasible_set;

  bool g_is_identity = false;
  // g(x) = A x + b when set; enables exact affine feasible-set distances.
  std::optional<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> g_linear;

  void set_identity_map(int n) {
    dim_x = dim_y = n;
    g_is_identity = true;
    g_linear = {Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)};
    g = [](const Eigen::VectorXd& x) { return x; };
    g_jac = [n](const Eigen::VectorXd&) {
      return Eigen::MatrixXd::Identity(n, n);
    };
  }

  void set_linear_map(Eigen::MatrixXd A, Eigen::VectorXd b) {
    dim_x = static_cast<int>(A.cols());
    dim_y = static_cast<int>(A.rows());
    g_is_identity = false;
    g = [A, b](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return A * x + b;
    };
    g_jac = [A](const Eigen::VectorXd&) { return A; };
    g_linear = {std::move(A), std::move(b)};
  }

  void set_linear_objective(Eigen::VectorXd c) {
    K_f = c.norm();
    f = [c](const Eigen::VectorXd& x) { return c.dot(x); };
    f_grad = [c](const Eigen::VectorXd&) { return c; };
  }

  void validate_base_point(double tol = 1e-10) const {
    if (!g) throw InputError("constraint system needs a map g");
    if (static_cast<int>(x0.size()) != dim_x)
      throw InputError("base point has wrong dimension");
    if (!C.contains(x0, tol))
      throw PreconditionError("base point is not in C");
    if (!D.contains(g(x0), tol))
      throw PreconditionError("g(base point) is not in D");
    if (feasible_set && !feasible_set->contains(x0, tol))
      throw PreconditionError("base point is not in the declared feasible set");
  }
};

// ---------------------------------------------------------------------------
// Direction sampling: deterministic low-dimensional grids, seeded fill-in.
// ---------------------------------------------------------------------------

inline std::vector<Eigen::VectorXd> unit_directions(int dim, int count,
                                                    CounterRng rng) {
  std::vector<Eigen::VectorXd> dirs;
  if (dim == 1) {
    dirs.push_back(Eigen::VectorXd::Constant(1, 1.0));
    dirs.push_back(Eigen::VectorXd::Constant(1, -1.0));
    return dirs;
  }
  if (dim == 2) {
    const int n = std::max(count, 8);
    for (int i = 0; i < n; ++i) {
      const double th = 2.0 * 3.14159265358979323846 * i / n;
      Eigen::VectorXd v(2);
      v << std::cos(th), std::sin(th);
      dirs.push_back(v);
    }
    return dirs;
  }
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v(i) = 1.0;
    dirs.push_back(v);
    dirs.push_back(-v);
  }
  while (static_cast<int>(dirs.size()) < count)
    dirs.push_back(rng.unit_vector(dim));
  return dirs;
}

// ---------------------------------------------------------------------------
// Distance to the feasible set {x in C : g(x) - y_shift in D}. Exact paths
// where the structure allows, multistart penalty descent otherwise; the
// method actually taken is stamped on the result.
// ---------------------------------------------------------------------------

struct FeasibleDistanceOptions {
  Eigen::VectorXd y_shift;   // empty = zero
  int starts = 8;
  std::uint64_t seed = 0;
  double feas_tol = 1e-9;
  int inner_iterations = 120;
};

struct FeasibleDistanceResult {
  double dist = std::numeric_limits<double>::infinity();
  Eigen::VectorXd point;
  bool converged = false;
  std::string method;
};

namespace detail {

inline bool set_is_whole(const CatalogSet& s) {
  return s.kind() == CatalogSet::Kind::WholeSpace;
}

// Penalty descent on |v - from|^2 + mu (d_D(g(v)-shift)^2 + d_C(v)^2).
inline Eigen::VectorXd penalty_descent(
    const ConstraintSystem& sys, const Eigen::VectorXd& from,
    const Eigen::VectorXd& shift, Eigen::VectorXd v, int inner_iterations) {
  auto objective = [&](const Eigen::VectorXd& u, double mu) {
    const double dd = sys.D.distance(sys.g(u) - shift).dist;
    const double dc = sys.C.distance(u).dist;
    return (u - from).squaredNorm() + mu * (dd * dd + dc * dc);
  };
  for (double mu : {1e2, 1e4, 1e6, 1e8, 1e10}) {
    double step = 1.0 / mu;
    for (int it = 0; it < inner_iterations; ++it) {
      const Eigen::VectorXd gz = sys.g(v) - shift;
      const Eigen::VectorXd rd = gz - sys.D.distance(gz).nearest;
      const Eigen::VectorXd rc = v - sys.C.distance(v).nearest;
      Eigen::VectorXd grad =
          2.0 * (v - from) + 2.0 * mu * (sys.g_jac(v).transpose() * rd + rc);
      const double gn = grad.norm();
      if (gn < 1e-14) break;
      const double f0 = objective(v, mu);
      bool moved = false;
      for (int bt = 0; bt < 40; ++bt) {
        Eigen::VectorXd trial = v - step * grad;
        if (objective(trial, mu) < f0 - 1e-4 * step * gn * gn) {
          v = std::move(trial);
          step *= 1.5;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
  }
  return v;
}

}  // namespace detail

inline FeasibleDistanceResult feasible_distance(
    const ConstraintSystem& sys, const Eigen::VectorXd& from,
    const FeasibleDistanceOptions& opts = {}) {
  Eigen::VectorXd shift = opts.y_shift;
  if (shift.size() == 0) shift = Eigen::VectorXd::Zero(sys.dim_y);
  const bool zero_shift = shift.norm() == 0.0;
  FeasibleDistanceResult res;

  if (sys.feasible_set && zero_shift) {
    const DistanceResult d = sys.feasible_set->distance(from);
    res.dist = d.dist;
    res.point = d.nearest;
    res.converged = true;
    res.method = "declared-set";
    return res;
  }
  if (sys.D.kind() == CatalogSet::Kind::WholeSpace) {
    const DistanceResult d = sys.C.distance(from);
    res.dist = d.dist;
    res.point = d.nearest;
    res.converged = true;
    res.method = "set-distance";
    return res;
  }
  if (sys.g_is_identity && detail::set_is_whole(sys.C)) {
    const DistanceResult d = sys.D.distance(from - shift);
    res.dist = d.dist;
    res.point = d.nearest + shift;
    res.converged = true;
    res.method = "set-distance";
    return res;
  }
  if (sys.g_linear && detail::set_is_whole(sys.C) &&
      sys.D.kind() == CatalogSet::Kind::AffineSubspace) {
    // Feasible set {x : B_perp^T (A x + b - shift - base) = 0} is affine;
    // the nearest point is the least-norm correction of the residual.
    const Eigen::MatrixXd& A = sys.g_linear->first;
    const Eigen::VectorXd& b = sys.g_linear->second;
    Eigen::MatrixXd basis(sys.dim_y, 0);
    Eigen::VectorXd base = Eigen::VectorXd::Zero(sys.dim_y);
    {
      // AffineSubspace parameters are not exposed directly; recover them
      // from projections: base = nearest(0), basis via the projector.
      base = sys.D.distance(Eigen::VectorXd::Zero(sys.dim_y)).nearest;
      Eigen::MatrixXd P(sys.dim_y, sys.dim_y);
      for (int i = 0; i < sys.dim_y; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(sys.dim_y);
        e(i) = 1.0;
        P.col(i) = sys.D.distance(base + e).nearest - base;
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(
          P, Eigen::ComputeThinU | Eigen::ComputeThinV);
      int rank = 0;
      for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-10) ++rank;
      basis = svd.matrixU().leftCols(rank);
    }
    const Eigen::MatrixXd bperp =
        Cone::orthogonal_complement(basis, sys.dim_y);
    if (bperp.cols() == 0) {
      res.dist = 0.0;
      res.point = from;
      res.converged = true;
      res.method = "affine-lsq";
      return res;
    }
    const Eigen::MatrixXd M = bperp.transpose() * A;
    const Eigen::VectorXd c = bperp.transpose() * (base + shift - b);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
    const Eigen::VectorXd corr = cod.solve(M * from - c);
    const Eigen::VectorXd x = from - corr;
    if ((M * x - c).norm() <= opts.feas_tol * (1.0 + c.norm())) {
      res.dist = corr.norm();
      res.point = x;
      res.converged = true;
      res.method = "affine-lsq";
      return res;
    }
    res.method = "affine-lsq";
    return res;  // inconsistent system: no feasible point
  }

  // Multistart penalty descent. Every candidate is snapped to C and accepted
  // only when feasible within tolerance, so the reported distance is a sound
  // upper bound on the true one.
  res.method = "multistart-gn";
  CounterRng rng(opts.seed);
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(from);
  starts.push_back(sys.C.distance(from).nearest);
  starts.push_back(sys.x0);
  starts.push_back(0.5 * (from + sys.x0));
  const double spread = (from - sys.x0).norm() + 0.1;
  while (static_cast<int>(starts.size()) < std::max(opts.starts, 4))
    starts.push_back(sys.x0 + rng.ball_vector(sys.dim_x, spread));

  for (const auto& s0 : starts) {
    Eigen::VectorXd v =
        detail::penalty_descent(sys, from, shift, s0, opts.inner_iterations);
    v = sys.C.distance(v).nearest;
    const double dd = sys.D.distance(sys.g(v) - shift).dist;
    if (dd <= opts.feas_tol * (1.0 + sys.g(v).norm())) {
      const double dist = (v - from).norm();
      if (dist < res.dist) {
        res.dist = dist;
        res.point = v;
        res.converged = true;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Calmness estimation: a_hat = max over admitted samples near the sphere of
// radius s of d_feasible(x) / d_D(g(x)), with optional radius refinement and
// a diverging flag. Samples are taken as projections of sphere points onto C
// and admitted only when they stay within 5% of the probe radius, so the
// reported ratio is tied to a definite scale.
// ---------------------------------------------------------------------------

struct CalmnessOptions {
  double radius = 0.1;
  int samples = 64;
  std::uint64_t seed = 0;
  int refinements = 0;            // extra rungs at radius/2^j
  double diverging_threshold = 1e6;
  bool polish = true;
};

struct CalmnessRung {
  double radius = 0.0;
  double ratio = 0.0;
  Eigen::VectorXd witness;
  int admitted = 0;
  int solver_failures = 0;
};

struct CalmnessReport {
  std::vector<CalmnessRung> rungs;
  double a_hat = 0.0;
  bool diverging = false;
  std::string method;
  std::uint64_t seed = 0;
};

namespace detail {

struct RatioProbe {
  const ConstraintSystem* sys;
  double radius;
  std::uint64_t seed;
  std::string* method;

  // Ratio at the C-projection of x0 + radius * u; NaN when not admissible.
  double operator()(const Eigen::VectorXd& u, Eigen::VectorXd* x_out,
                    int* fail_count) const {
    const Eigen::VectorXd x =
        sys->C.distance(sys->x0 + radius * u).nearest;
    const double t = (x - sys->x0).norm();
    if (t < 0.95 * radius || t > 1.05 * radius)
      return std::numeric_limits<double>::quiet_NaN();
    const Eigen::VectorXd gx = sys->g(x);
    const double resid = sys->D.distance(gx).dist;
    if (resid <= 1e-13 * (1.0 + gx.norm()))
      return std::numeric_limits<double>::quiet_NaN();
    FeasibleDistanceOptions fo;
    fo.seed = seed;
    const FeasibleDistanceResult fd = feasible_distance(*sys, x, fo);
    if (!fd.converged) {
      if (fail_count) ++*fail_count;
      return std::numeric_limits<double>::quiet_NaN();
    }
    if (method && method->empty()) *method = fd.method;
    if (x_out) *x_out = x;
    return fd.dist / resid;
  }
};

}  // namespace detail

inline CalmnessReport estimate_calmness(const ConstraintSystem& sys,
                                        const CalmnessOptions& opts = {}) {
  sys.validate_base_point();
  CalmnessReport rep;
  rep.seed = opts.seed;
  CounterRng rng(opts.seed);

  for (int j = 0; j <= opts.refinements; ++j) {
    const double s = std::ldexp(opts.radius, -j);
    CalmnessRung rung;
    rung.radius = s;
    detail::RatioProbe probe{&sys, s, opts.seed, &rep.method};
    const auto dirs =
        unit_directions(sys.dim_x, opts.samples, rng.fork(100 + j));

    Eigen::VectorXd best_u;
    for (const auto& u : dirs) {
      Eigen::VectorXd x;
      const double ratio = probe(u, &x, &rung.solver_failures);
      if (std::isnan(ratio)) continue;
      ++rung.admitted;
      if (ratio > rung.ratio) {
        rung.ratio = ratio;
        rung.witness = x;
        best_u = u;
      }
    }

    if (opts.polish && best_u.size() > 0 && sys.dim_x > 1) {
      // Deterministic tangential hill climb around the best direction.
      Eigen::VectorXd u = best_u;
      double step = 0.2;
      while (step > 1e-4) {
        Eigen::MatrixXd umat(sys.dim_x, 1);
        umat.col(0) = u;
        const Eigen::MatrixXd tang =
            Cone::orthogonal_complement(umat, sys.dim_x);
        bool improved = false;
        for (int c = 0; c < tang.cols() && !improved; ++c) {
          for (double sgn : {1.0, -1.0}) {
            Eigen::VectorXd cand = (u + sgn * step * tang.col(c)).normalized();
            Eigen::VectorXd x;
            const double ratio = probe(cand, &x, nullptr);
            if (!std::isnan(ratio) && ratio > rung.ratio) {
              rung.ratio = ratio;
              rung.witness = x;
              u = cand;
              improved = true;
              break;
            }
          }
        }
        if (!improved) step *= 0.5;
      }
    }

    rep.rungs.push_back(rung);
    rep.a_hat = std::max(rep.a_hat, rung.ratio);
    if (rung.ratio > opts.diverging_threshold) {
      rep.diverging = true;
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Metric regularity check: samples (x, y) in the admissible region
//   x in B_C(x0, r1),  d_{D cap B(g(x0), r1)}(g(x) - y) < r2 / alpha,
// and verifies  d_{{x' in C: g(x') - y in D}}(x) <= alpha * that distance.
// The plain d_D ratio is reported alongside, without being asserted.
// ---------------------------------------------------------------------------

struct RegularityOptions {
  double alpha = 1.0;
  double r1 = 0.5;
  double r2 = 0.5;
  int base_samples = 20;
  int shift_samples = 5;
  std::uint64_t seed = 0;
  double pass_slack = 1.0 + 1e-9;
};

struct RegularityReport {
  int checked = 0;
  int admissible = 0;
  int violations = 0;
  int solver_failures = 0;
  double worst_ratio = 0.0;        // lhs / rhs over admissible samples
  double worst_plain_ratio = 0.0;  // lhs / (plain d_D) where positive
  Eigen::VectorXd worst_x;
  Eigen::VectorXd worst_y;
  std::string method;
  bool pass = true;
};

namespace detail {

// Distance to D intersected with the closed ball B(center, radius): exact
// when the unconstrained nearest point already lies in the ball, otherwise a
// multistart estimate on the synthetic intersection system.
inline double truncated_set_distance(const CatalogSet& D,
                                     const Eigen::VectorXd& center,
                                     double radius, const Eigen::VectorXd& z,
                                     std::uint64_t seed, bool* converged) {
  const DistanceResult plain = D.distance(z);
  *converged = true;
  if ((plain.nearest - center).norm() <= radius) return plain.dist;
  ConstraintSystem inter;
  inter.set_identity_map(static_cast<int>(z.size()));
  inter.C = CatalogSet::ball(center, radius);
  inter.D = D;
  inter.x0 = center;  // center is in the ball; D membership is not needed
  FeasibleDistanceOptions fo;
  fo.seed = seed;
  const FeasibleDistanceResult fd = feasible_distance(inter, z, fo);
  if (!fd.converged) {
    *converged = false;
    return std::numeric_limits<double>::infinity();
  }
  return fd.dist;
}

}  // namespace detail

inline RegularityReport check_metric_regularity(const ConstraintSystem& sys,
                                                const RegularityOptions& opts) {
  sys.validate_base_point();
  if (opts.alpha <= 0.0) throw InputError("regularity check needs alpha > 0");
  RegularityReport rep;
  CounterRng rng(opts.seed);
  const Eigen::VectorXd y0 = sys.g(sys.x0);

  for (int bs = 0; bs < opts.base_samples; ++bs) {
    CounterRng brng = rng.fork(bs);
    Eigen::VectorXd x =
        sys.C.distance(sys.x0 + brng.ball_vector(sys.dim_x, opts.r1)).nearest;
    if ((x - sys.x0).norm() > opts.r1) continue;
    const Eigen::VectorXd gx = sys.g(x);

    for (int ss = 0; ss < opts.shift_samples; ++ss) {
      ++rep.checked;
      // Target z in D near g(x0), plus a shift small enough to keep the
      // sample inside the theorem's admissible region.
      Eigen::VectorXd z =
          sys.D.distance(y0 + brng.ball_vector(sys.dim_y, 0.5 * opts.r1))
              .nearest;
      if ((z - y0).norm() > opts.r1) continue;
      const Eigen::VectorXd noise =
          brng.ball_vector(sys.dim_y, 0.4 * opts.r2 / opts.alpha);
      const Eigen::VectorXd y = gx - z - noise;

      bool trunc_ok = true;
      const double rhs = detail::truncated_set_distance(
          sys.D, y0, opts.r1, gx - y, opts.seed + 977 * ss, &trunc_ok);
      if (!trunc_ok) {
        ++rep.solver_failures;
        continue;
      }
      if (rhs >= opts.r2 / opts.alpha) continue;
      ++rep.admissible;

      FeasibleDistanceOptions fo;
      fo.seed = opts.seed + 31 * bs + ss;
      fo.y_shift = y;
      const FeasibleDistanceResult fd = feasible_distance(sys, x, fo);
      if (!fd.converged) {
        ++rep.solver_failures;
        continue;
      }
      if (rep.method.empty()) rep.method = fd.method;
      const double lhs = fd.dist;

      if (rhs <= 1e-13) {
        if (lhs > 1e-9) {
          ++rep.violations;
          rep.pass = false;
        }
        continue;
      }
      const double ratio = lhs / rhs;
      if (ratio > rep.worst_ratio) {
        rep.worst_ratio = ratio;
        rep.worst_x = x;
        rep.worst_y = y;
      }
      const double plain = sys.D.distance(gx - y).dist;
      if (plain > 1e-13)
        rep.worst_plain_ratio = std::max(rep.worst_plain_ratio, lhs / plain);
      if (lhs > opts.alpha * rhs * opts.pass_slack) {
        ++rep.violations;
        rep.pass = false;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Qualification conditions. All three variants reduce to testing, for unit
// directions w and sampled base data, whether
//   w  in  Dg(x)(K_C(x) cap a1 B)  -  K_D(y) cap a2 B     (two-cone forms)
//   w  in  Dg(x)(K_C(x) cap a  B)                          (single-cone form)
// by minimizing |w - J h + z| over the convex branches of the cones.
// ---------------------------------------------------------------------------

enum class QualVariant {
  Base,         // cones of C only, along x in B_C(x0, r)
  Prime,        // cones of C and D at perturbed pairs (x, y) in C x D
  DoublePrime,  // cones of C and D along feasible points only
};

struct QualOptions {
  double alpha = 0.0;             // Base
  double alpha1 = 0.0, alpha2 = 0.0;
  double r = 0.25;
  int base_samples = 4;           // in addition to the base point itself
  int directions = 64;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  int max_iterations = 20000;
};

struct QualReport {
  QualVariant variant = QualVariant::Base;
  bool satisfied = false;
  double worst_residual = 0.0;
  Eigen::VectorXd worst_direction;
  Eigen::VectorXd worst_x;
  Eigen::VectorXd worst_y;
  int base_points = 0;
  int directions_checked = 0;
  std::string notes;
};

namespace detail {

inline void flatten_convex_branches(const Cone& cone, std::vector<Cone>* out) {
  switch (cone.kind()) {
    case Cone::Kind::UnionCone:
      for (const auto& m : cone.members()) flatten_convex_branches(m, out);
      return;
    case Cone::Kind::ProductCone: {
      std::vector<std::vector<Cone>> parts;
      for (const auto& m : cone.members()) {
        std::vector<Cone> sub;
        flatten_convex_branches(m, &sub);
        parts.push_back(std::move(sub));
      }
      std::vector<std::vector<Cone>> combos(1);
      for (const auto& part : parts) {
        std::vector<std::vector<Cone>> next;
        for (const auto& combo : combos)
          for (const auto& piece : part) {
            auto ext = combo;
            ext.push_back(piece);
            next.push_back(std::move(ext));
          }
        combos = std::move(next);
      }
      for (auto& combo : combos) out->push_back(Cone::product_of(combo));
      return;
    }
    default:
      out->push_back(cone);
      return;
  }
}

// Projection onto (convex cone) cap (ball of given radius): project onto the
// cone, then scale radially. Exact for convex cones and centered balls.
inline Eigen::VectorXd project_cone_ball(const Cone& cone, double radius,
                                         const Eigen::VectorXd& h) {
  Eigen::VectorXd p = cone.project(h);
  const double n = p.norm();
  if (radius > 0.0 && n > radius) p *= radius / n;
  return p;
}

// Orthonormal basis reduction for linear-subspace-like cones; empty optional
// when the cone is not of that form.
inline std::optional<Eigen::MatrixXd> subspace_basis(const Cone& cone) {
  switch (cone.kind()) {
    case Cone::Kind::Whole:
      return Eigen::MatrixXd::Identity(cone.dim(), cone.dim());
    case Cone::Kind::Zero:
      return Eigen::MatrixXd(cone.dim(), 0);
    case Cone::Kind::Subspace: {
      // Recover the basis by projecting coordinate directions.
      Eigen::MatrixXd P(cone.dim(), cone.dim());
      for (int i = 0; i < cone.dim(); ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(cone.dim());
        e(i) = 1.0;
        P.col(i) = cone.project(e);
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(
          P, Eigen::ComputeThinU | Eigen::ComputeThinV);
      int rank = 0;
      for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-12) ++rank;
      return Eigen::MatrixXd(svd.matrixU().leftCols(rank));
    }
    case Cone::Kind::Hyperplane: {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(cone.dim());
      Eigen::MatrixXd normal(cone.dim(), 1);
      // The unit normal is any direction annihilated by the projection.
      for (int i = 0; i < cone.dim(); ++i) {
        e.setZero();
        e(i) = 1.0;
        const Eigen::VectorXd res = e - cone.project(e);
        if (res.norm() > 1e-12) {
          normal.col(0) = res.normalized();
          return Cone::orthogonal_complement(normal, cone.dim());
        }
      }
      return Eigen::MatrixXd::Identity(cone.dim(), cone.dim());
    }
    default:
      return std::nullopt;
  }
}

// min_h |w - J h| over h in a subspace (basis B) with |h| <= radius: ridge
// path with a monotone bisection on the multiplier.
inline double subspace_ball_ls(const Eigen::MatrixXd& J,
                               const Eigen::MatrixXd& basis, double radius,
                               const Eigen::VectorXd& w,
                               Eigen::VectorXd* h_out) {
  if (basis.cols() == 0) {
    if (h_out) *h_out = Eigen::VectorXd::Zero(J.cols());
    return w.norm();
  }
  const Eigen::MatrixXd Jb = J * basis;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      Jb, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const Eigen::VectorXd uw = svd.matrixU().transpose() * w;
  auto coeff_norm = [&](double lam) {
    double acc = 0.0;
    for (int i = 0; i < sv.size(); ++i) {
      if (sv(i) < 1e-14) continue;
      const double c = sv(i) * uw(i) / (sv(i) * sv(i) + lam);
      acc += c * c;
    }
    return std::sqrt(acc);
  };
  double lam = 0.0;
  if (coeff_norm(0.0) > radius) {
    double lo = 0.0, hi = 1.0;
    while (coeff_norm(hi) > radius) hi *= 4.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (coeff_norm(mid) > radius ? lo : hi) = mid;
    }
    lam = hi;
  }
  Eigen::VectorXd t = Eigen::VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) >= 1e-14) t(i) = sv(i) * uw(i) / (sv(i) * sv(i) + lam);
  const Eigen::VectorXd h = basis * (svd.matrixV() * t);
  if (h_out) *h_out = h;
  return (w - J * h).norm();
}

// min_h |target - J h| over h in cone cap radius-ball; exact for subspace
// and ray shaped cones, FISTA otherwise.
inline double cone_ball_ls(const Eigen::MatrixXd& J, const Cone& cone,
                           double radius, const Eigen::VectorXd& target,
                           int iterations, Eigen::VectorXd* h_inout) {
  if (cone.kind() == Cone::Kind::Ray) {
    // Recover the ray direction by projecting coordinate directions.
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(cone.dim());
    for (int i = 0; i < cone.dim(); ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(cone.dim());
      e(i) = 1.0;
      const Eigen::VectorXd p = cone.project(e);
      if (p.norm() > dir.norm()) dir = p;
      const Eigen::VectorXd q = cone.project(-e);
      if (q.norm() > dir.norm()) dir = q;
    }
    if (dir.norm() < 1e-14) {
      if (h_inout) h_inout->setZero();
      return target.norm();
    }
    dir.normalize();
    const Eigen::VectorXd v = J * dir;
    const double vv = v.squaredNorm();
    double t = vv > 0.0 ? target.dot(v) / vv : 0.0;
    t = std::clamp(t, 0.0, radius);
    if (h_inout) *h_inout = t * dir;
    return (target - t * v).norm();
  }
  if (const auto basis = subspace_basis(cone))
    return subspace_ball_ls(J, *basis, radius, target, h_inout);

  // FISTA on 0.5 |target - J h|^2 over cone cap ball.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const double smax = svd.singularValues().size() > 0
                          ? svd.singularValues()(0)
                          : 0.0;
  const double L = std::max(smax * smax, 1e-12);
  Eigen::VectorXd h = h_inout && h_inout->size() == J.cols()
                          ? *h_inout
                          : Eigen::VectorXd::Zero(J.cols());
  h = project_cone_ball(cone, radius, h);
  Eigen::VectorXd v = h;
  double tk = 1.0;
  double best = (target - J * h).norm();
  Eigen::VectorXd best_h = h;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd grad = J.transpose() * (J * v - target);
    Eigen::VectorXd hn = project_cone_ball(cone, radius, v - grad / L);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    v = hn + ((tk - 1.0) / tn) * (hn - h);
    h = std::move(hn);
    tk = tn;
    const double r = (target - J * h).norm();
    if (r < best) {
      best = r;
      best_h = h;
    }
  }
  if (h_inout) *h_inout = best_h;
  return best;
}

// Residual of w against Dg(x)(coneC cap a1 B) - (coneD cap a2 B), one convex
// branch pair at a time; block-exact alternation plus a FISTA polish.
inline double qual_branch_residual(const Eigen::MatrixXd& J,
                                   const Eigen::VectorXd& w, const Cone& coneC,
                                   double a1, const Cone* coneD, double a2,
                                   int iterations) {
  if (!coneD) return cone_ball_ls(J, coneC, a1, w, iterations, nullptr);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(J.cols());
  Eigen::VectorXd z = Eigen::VectorXd::Zero(w.size());
  double best = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 200; ++round) {
    cone_ball_ls(J, coneC, a1, w + z, iterations / 40, &h);
    z = project_cone_ball(*coneD, a2, J * h - w);
    const double r = (w - J * h + z).norm();
    if (r > best - 1e-15) {
      best = std::min(best, r);
      break;
    }
    best = r;
  }
  // Joint FISTA on the stacked variable, warm-started from the alternation.
  const int p = static_cast<int>(J.cols());
  const int q = static_cast<int>(w.size());
  Eigen::MatrixXd Js(q, p + q);
  Js << J, -Eigen::MatrixXd::Identity(q, q);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Js);
  const double L = svd.singularValues()(0) * svd.singularValues()(0);
  Eigen::VectorXd s(p + q);
  s << h, z;
  Eigen::VectorXd v = s;
  double tk = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd grad = Js.transpose() * (Js * v - w);
    Eigen::VectorXd sn(p + q);
    sn.head(p) = project_cone_ball(coneC, a1, (v - grad / L).head(p));
    sn.tail(q) = project_cone_ball(*coneD, a2, (v - grad / L).tail(q));
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    v = sn + ((tk - 1.0) / tn) * (sn - s);
    s = std::move(sn);
    tk = tn;
    best = std::min(best, (w - Js * s).norm());
  }
  return best;
}

inline double qual_residual(const Eigen::MatrixXd& J, const Eigen::VectorXd& w,
                            const Cone& coneC, double a1, const Cone* coneD,
                            double a2, int iterations) {
  std::vector<Cone> cbranches;
  flatten_convex_branches(coneC, &cbranches);
  std::vector<Cone> dbranches;
  if (coneD) flatten_convex_branches(*coneD, &dbranches);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cb : cbranches) {
    if (!coneD) {
      best = std::min(best,
                      qual_branch_residual(J, w, cb, a1, nullptr, 0.0,
                                           iterations));
      continue;
    }
    for (const auto& db : dbranches)
      best = std::min(
          best, qual_branch_residual(J, w, cb, a1, &db, a2, iterations));
  }
  return best;
}

}  // namespace detail

inline QualReport check_qualification(const ConstraintSystem& sys,
                                      QualVariant variant,
                                      const QualOptions& opts) {
  sys.validate_base_point();
  QualReport rep;
  rep.variant = variant;
  CounterRng rng(opts.seed);
  const Eigen::VectorXd y0 = sys.g(sys.x0);

  const double a1 =
      variant == QualVariant::Base ? opts.alpha : opts.alpha1;
  const double a2 = opts.alpha2;
  if (a1 <= 0.0 || (variant != QualVariant::Base && a2 <= 0.0))
    throw InputError("qualification check needs positive radii");

  // Base data: (x, y) pairs at which cones are taken.
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> bases;
  bases.push_back({sys.x0, y0});
  for (int i = 0; i < opts.base_samples; ++i) {
    CounterRng brng = rng.fork(7000 + i);
    switch (variant) {
      case QualVariant::Base: {
        Eigen::VectorXd x =
            sys.C.distance(sys.x0 + brng.ball_vector(sys.dim_x, opts.r))
                .nearest;
        if ((x - sys.x0).norm() <= opts.r) bases.push_back({x, y0});
        break;
      }
      case QualVariant::Prime: {
        Eigen::VectorXd x =
            sys.C
                .distance(sys.x0 + brng.ball_vector(sys.dim_x, 0.5 * opts.r))
                .nearest;
        Eigen::VectorXd y =
            sys.D.distance(y0 + brng.ball_vector(sys.dim_y, 0.5 * opts.r))
                .nearest;
        if ((x - sys.x0).norm() + (y - y0).norm() <= opts.r)
          bases.push_back({x, y});
        break;
      }
      case QualVariant::DoublePrime: {
        FeasibleDistanceOptions fo;
        fo.seed = opts.seed + 41 * i;
        const FeasibleDistanceResult fd = feasible_distance(
            sys, sys.x0 + brng.ball_vector(sys.dim_x, opts.r), fo);
        if (fd.converged && (fd.point - sys.x0).norm() <= opts.r)
          bases.push_back({fd.point, sys.g(fd.point)});
        break;
      }
    }
  }

  const auto dirs = unit_directions(sys.dim_y, opts.directions, rng.fork(1));
  rep.base_points = static_cast<int>(bases.size());
  rep.satisfied = true;
  for (const auto& [x, y] : bases) {
    const Eigen::MatrixXd J = sys.g_jac(x);
    const Cone coneC = sys.C.contingent_cone(x, 1e-9);
    std::optional<Cone> coneD;
    if (variant != QualVariant::Base)
      coneD = sys.D.contingent_cone(y, 1e-9);
    for (const auto& w : dirs) {
      ++rep.directions_checked;
      const double res = detail::qual_residual(
          J, w, coneC, a1, coneD ? &*coneD : nullptr, a2,
          opts.max_iterations);
      if (res > rep.worst_residual) {
        rep.worst_residual = res;
        rep.worst_direction = w;
        rep.worst_x = x;
        rep.worst_y = y;
      }
    }
  }
  rep.satisfied = rep.worst_residual <= opts.tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Multiplier computation for min f over {x in C : g(x) in D}: least-norm
// y* in N_D(g(x0)) minimizing the distance of -(grad f + Dg^T y*) to N_C(x0).
// ---------------------------------------------------------------------------

struct MultiplierResult {
  Eigen::VectorXd y;
  double norm = 0.0;
  double residual = 0.0;
  bool found = false;      // residual <= 1e-8
  std::string method;
};

namespace detail {

inline bool cone_is_whole(const Cone& c) {
  if (c.kind() == Cone::Kind::Whole) return true;
  if (c.kind() == Cone::Kind::Subspace) {
    const auto b = subspace_basis(c);
    return b && b->cols() == c.dim();
  }
  return false;
}

inline bool cone_is_zero(const Cone& c) {
  if (c.kind() == Cone::Kind::Zero) return true;
  if (c.kind() == Cone::Kind::Subspace) {
    const auto b = subspace_basis(c);
    return b && b->cols() == 0;
  }
  return false;
}

}  // namespace detail

inline MultiplierResult compute_multiplier(const ConstraintSystem& sys,
                                           int iterations = 20000) {
  sys.validate_base_point();
  if (!sys.f_grad) throw InputError("multiplier computation needs grad f");
  const Eigen::VectorXd df = sys.f_grad(sys.x0);
  const Eigen::MatrixXd J = sys.g_jac(sys.x0);
  const auto nc = sys.C.clarke_normal_cone(sys.x0, 1e-9);
  const auto nd = sys.D.clarke_normal_cone(sys.g(sys.x0), 1e-9);
  if (!nc || !nd)
    throw UnsupportedVariantError(
        "normal cone not representable at the base point");

  MultiplierResult res;
  if (detail::cone_is_whole(*nd) && detail::cone_is_zero(*nc)) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J.transpose());
    res.y = -cod.solve(df);
    res.residual = (df + J.transpose() * res.y).norm();
    res.method = "least-norm-lsq";
  } else {
    // Projected gradient on y |-> 0.5 dist^2(-(df + J^T y), N_C) over N_D,
    // with a vanishing norm regularizer to pick a least-norm minimizer.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const double smax =
        svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    const double L = std::max(smax * smax, 1e-12);
    std::vector<Cone> ncb, ndb;
    detail::flatten_convex_branches(*nc, &ncb);
    detail::flatten_convex_branches(*nd, &ndb);
    double best = std::numeric_limits<double>::infinity();
    double best_norm = std::numeric_limits<double>::infinity();
    for (const auto& cb : ncb) {
      for (const auto& db : ndb) {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(sys.dim_y);
        for (int it = 0; it < iterations; ++it) {
          const Eigen::VectorXd v = -(df + J.transpose() * y);
          const Eigen::VectorXd resid = v - cb.project(v);
          const Eigen::VectorXd grad = J * resid + 1e-12 * y;
          y = db.project(y - grad / L);
        }
        const Eigen::VectorXd v = -(df + J.transpose() * y);
        const double r = (v - cb.project(v)).norm();
        if (r < best - 1e-12 ||
            (r < best + 1e-12 && y.norm() < best_norm)) {
          best = r;
          best_norm = y.norm();
          res.y = y;
        }
      }
    }
    res.residual = best;
    res.method = "cone-projected-gradient";
  }
  res.norm = res.y.norm();
  res.found = res.residual <= 1e-8;
  return res;
}

// ---------------------------------------------------------------------------
// Calmness transfer: the augmented system g~(x,y) = g(x) - y on C x D under
// the sum norm is calm with constant (1 + a(1 + K_g)). Verified on samples
// via sound candidate upper bounds for the augmented feasible distance.
// ---------------------------------------------------------------------------

struct TransferOptions {
  double a = 1.0;
  double K_g = 1.0;
  double radius = 0.25;
  int samples = 200;
  std::uint64_t seed = 0;
};

struct TransferReport {
  int checked = 0;
  int skipped = 0;       // residual too small to form a ratio
  double constant = 0.0; // 1 + a (1 + K_g)
  double worst_ratio = 0.0;
  bool pass = true;
  std::string method;
};

inline TransferReport check_calmness_transfer(const ConstraintSystem& sys,
                                              const TransferOptions& opts) {
  sys.validate_base_point();
  TransferReport rep;
  rep.constant = 1.0 + opts.a * (1.0 + opts.K_g);
  CounterRng rng(opts.seed);
  const Eigen::VectorXd y0 = sys.g(sys.x0);

  for (int i = 0; i < opts.samples; ++i) {
    CounterRng srng = rng.fork(i);
    Eigen::VectorXd x =
        sys.C.distance(sys.x0 + srng.ball_vector(sys.dim_x, opts.radius))
            .nearest;
    Eigen::VectorXd y =
        sys.D.distance(y0 + srng.ball_vector(sys.dim_y, opts.radius)).nearest;
    if ((x - sys.x0).norm() + (y - y0).norm() > opts.radius) continue;
    const double resid = (sys.g(x) - y).norm();
    if (resid <= 1e-12 * (1.0 + y.norm())) {
      ++rep.skipped;
      continue;
    }
    ++rep.checked;

    // Candidate feasible points v; each yields the upper bound
    // |x - v| + |y - g(v)| on the augmented distance.
    std::vector<Eigen::VectorXd> cands;
    cands.push_back(sys.x0);
    FeasibleDistanceOptions fo;
    fo.seed = opts.seed + 13 * i;
    const FeasibleDistanceResult fd = feasible_distance(sys, x, fo);
    if (fd.converged) {
      cands.push_back(fd.point);
      if (rep.method.empty()) rep.method = fd.method;
    }
    if (sys.g_is_identity) {
      const Eigen::VectorXd v = sys.D.distance(x).nearest;
      if (sys.C.contains(v, 1e-9)) cands.push_back(v);
    }
    double lhs = std::numeric_limits<double>::infinity();
    for (const auto& v : cands)
      lhs = std::min(lhs, (x - v).norm() + (y - sys.g(v)).norm());
    rep.worst_ratio = std::max(rep.worst_ratio, lhs / resid);
  }
  rep.pass = rep.worst_ratio <= rep.constant * (1.0 + 1e-6);
  return rep;
}

// ---------------------------------------------------------------------------
// Product-cone check: the tangent cone of A x B under the sum norm sits
// inside K(A) x K(B), with equality when a factor is convex. Probed through
// lower Dini quotients of the product distance.
// ---------------------------------------------------------------------------

struct ProductConeOptions {
  int directions = 40;
  std::uint64_t seed = 0;
  double in_cone_tol = 1e-3;
  double margin = 0.9;  // required fraction of the cone distance
};

struct ProductConeReport {
  int in_cone_checked = 0;
  int out_cone_checked = 0;
  double max_in_cone_quotient = 0.0;
  double min_out_margin = std::numeric_limits<double>::infinity();
  bool factor_convex = false;  // equality of cones asserted
  bool inclusion_ok = true;
  bool equality_ok = true;
  // The two-sided bound of the product lemma is stated with an upper Dini
  // symbol on one factor where context suggests the lower one; this check
  // evaluates both sides with lower quotients and flags the reading.
  bool dini_reading_flagged = true;
  double max_sum_bound_violation = 0.0;
};

inline bool catalog_is_convex(const CatalogSet& s) {
  switch (s.kind()) {
    case CatalogSet::Kind::WholeSpace:
    case CatalogSet::Kind::Box:
    case CatalogSet::Kind::AffineSubspace:
    case CatalogSet::Kind::Ball:
    case CatalogSet::Kind::Line:
      return true;
    case CatalogSet::Kind::Sphere:
    case CatalogSet::Kind::UnionSet:
      return false;
    case CatalogSet::Kind::ProductSet: {
      for (const auto& m : s.members())
        if (!catalog_is_convex(m)) return false;
      return true;
    }
  }
  return false;
}

inline ProductConeReport check_product_cone(const CatalogSet& A,
                                            const CatalogSet& B,
                                            const Eigen::VectorXd& xa,
                                            const Eigen::VectorXd& xb,
                                            const ProductConeOptions& opts = {}) {
  if (!A.contains(xa, 1e-10) || !B.contains(xb, 1e-10))
    throw PreconditionError("product-cone check needs base points in the sets");
  ProductConeReport rep;
  rep.factor_convex = catalog_is_convex(A) || catalog_is_convex(B);
  const CatalogSet P = CatalogSet::product_of({A, B});
  const Cone ka = A.contingent_cone(xa, 1e-9);
  const Cone kb = B.contingent_cone(xb, 1e-9);
  const Cone kprod = Cone::product_of({ka, kb});
  Eigen::VectorXd base(xa.size() + xb.size());
  base << xa, xb;

  CounterRng rng(opts.seed);
  const int na = static_cast<int>(xa.size());
  const int nb = static_cast<int>(xb.size());
  for (int i = 0; i < opts.directions; ++i) {
    CounterRng drng = rng.fork(i);
    Eigen::VectorXd h = drng.unit_vector(na + nb);
    // Alternate raw directions with directions pushed into the cone.
    if (i % 2 == 0) {
      Eigen::VectorXd hp(na + nb);
      hp.head(na) = ka.project(h.head(na));
      hp.tail(nb) = kb.project(h.tail(nb));
      if (hp.norm() > 1e-12) h = hp.normalized();
    }
    const double cone_dist = kprod.distance(h);  // sum norm on the product
    const DiniEstimate est = lower_dini_quotient(P, base, h);
    if (cone_dist <= 1e-12) {
      ++rep.in_cone_checked;
      rep.max_in_cone_quotient = std::max(rep.max_in_cone_quotient, est.value);
      if (rep.factor_convex && est.value > opts.in_cone_tol)
        rep.equality_ok = false;
    } else {
      ++rep.out_cone_checked;
      rep.min_out_margin =
          std::min(rep.min_out_margin, est.value / cone_dist);
    }
    // Sum bound: min_t (qa + qb)(t) <= min qa + max qb, taking the better of
    // the two factor orderings. The one-sided mixing is what makes the bound
    // valid on a discrete ladder.
    const DiniEstimate ea = lower_dini_quotient(A, xa, h.head(na));
    const DiniEstimate eb = lower_dini_quotient(B, xb, h.tail(nb));
    const double ea_max =
        *std::max_element(ea.quotients.begin(), ea.quotients.end());
    const double eb_max =
        *std::max_element(eb.quotients.begin(), eb.quotients.end());
    const double mixed =
        std::min(ea.value + eb_max, eb.value + ea_max);
    rep.max_sum_bound_violation =
        std::max(rep.max_sum_bound_violation, est.value - mixed);
  }
  // An empirically tangent direction far from the product cone would break
  // the inclusion; directions outside the cone must keep a definite quotient.
  if (rep.out_cone_checked > 0)
    rep.inclusion_ok = rep.min_out_margin >= opts.margin;
  return rep;
}

// ---------------------------------------------------------------------------
// Named instances.
// ---------------------------------------------------------------------------

// Two tangent circles meeting a line: the feasible set of the identity
// system is {0} (plus one far point in the full-circle variant), calmness
// fails at the origin with ratio ~ 4 / rho, and the two-cone qualification
// behaves differently at the origin depending on whether the first set is
// the half circle or the full circle.
inline ConstraintSystem circles_system(bool full_circle = false) {
  ConstraintSystem sys;
  sys.set_identity_map(2);
  const double pi = 3.14159265358979323846;
  Eigen::Vector2d c_small(0.0, -1.0), c_big(0.0, -2.0);
  sys.C = full_circle
              ? CatalogSet::sphere(c_small, 1.0)
              : CatalogSet::arc(c_small, 1.0, -0.5 * pi, 0.5 * pi);
  sys.D = CatalogSet::union_of(
      {CatalogSet::line(Eigen::Vector2d::Zero(),
                        Eigen::Vector2d(1.0, 1.0)),
       CatalogSet::arc(c_big, 2.0, -0.5 * pi, 0.5 * pi)});
  sys.x0 = Eigen::Vector2d::Zero();
  if (full_circle) {
    sys.feasible_set = CatalogSet::union_of(
        {CatalogSet::point(Eigen::Vector2d::Zero()),
         CatalogSet::point(Eigen::Vector2d(-1.0, -1.0))});
  } else {
    sys.feasible_set = CatalogSet::point(Eigen::Vector2d::Zero());
  }
  sys.alpha1 = 2.0;
  sys.alpha2 = 2.0;
  sys.K_g = 1.0;
  return sys;
}

// Point on the first circle at distance rho from the origin, and the exact
// distance from it to the second set (stable for small rho).
inline Eigen::Vector2d circles_point_at(double rho) {
  const double x = std::sqrt(std::max(rho * rho - 0.25 * std::pow(rho, 4), 0.0));
  return Eigen::Vector2d(x, -0.5 * rho * rho);
}
inline double circles_outer_distance(double rho) {
  return rho * rho / (2.0 + std::sqrt(4.0 - rho * rho));
}

// Diagonal operator with geometrically decaying entries against the
// harmonic linear objective: the multiplier of the n-truncated system has
// coordinates -2^{i-1}/i, whose norm grows without bound in n.
inline ConstraintSystem brokate_system(int n) {
  if (n < 1) throw InputError("truncation order must be >= 1");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = std::ldexp(1.0, -i);  // 2^{-i} = 2^{1-(i+1)}
    c(i) = 1.0 / (i + 1.0);
  }
  ConstraintSystem sys;
  sys.set_linear_map(A, Eigen::VectorXd::Zero(n));
  sys.set_linear_objective(c);
  sys.C = CatalogSet::whole(n);
  sys.D = CatalogSet::point(Eigen::VectorXd::Zero(n));
  sys.x0 = Eigen::VectorXd::Zero(n);
  sys.feasible_set = CatalogSet::point(Eigen::VectorXd::Zero(n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  sys.a = 1.0 / svd.singularValues().minCoeff();
  sys.K_g = svd.singularValues().maxCoeff();
  return sys;
}

inline double brokate_multiplier_norm(int n) {
  double acc = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double yi = std::ldexp(1.0, i - 1) / i;
    acc += yi * yi;
  }
  return std::sqrt(acc);
}

}  // namespace scotkit
