#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "scotkit/errors.hpp"

namespace scotkit {

constexpr double kSetTol = 1e-9;

// ---------------------------------------------------------------------------
// Cones. Closed cones with closed-form membership, projection and distance.
// Distances on product cones use the sum norm, matching product sets.
// ---------------------------------------------------------------------------

class Cone {
 public:
  enum class Kind {
    Whole,
    Zero,
    SignPattern,  // per-coordinate free / >=0 / <=0 / =0
    Subspace,     // span of orthonormal basis columns (possibly none)
    Hyperplane,   // { h : h.n = 0 }
    HalfSpace,    // { h : h.n <= 0 }
    Ray,          // { t v : t >= 0 }
    UnionCone,
    ProductCone,
  };
  enum class Sign { Free, NonNeg, NonPos, Zero };

  static Cone whole(int dim) { return Cone(Kind::Whole, dim); }
  static Cone zero(int dim) { return Cone(Kind::Zero, dim); }
  static Cone sign_pattern(std::vector<Sign> signs) {
    bool all_free = true;
    for (const Sign s : signs) all_free = all_free && s == Sign::Free;
    if (all_free) return whole(static_cast<int>(signs.size()));
    Cone c(Kind::SignPattern, static_cast<int>(signs.size()));
    c.signs_ = std::move(signs);
    return c;
  }
  static Cone subspace(const Eigen::MatrixXd& orthonormal_basis) {
    Cone c(Kind::Subspace, static_cast<int>(orthonormal_basis.rows()));
    c.basis_ = orthonormal_basis;
    return c;
  }
  static Cone hyperplane(const Eigen::VectorXd& normal) {
    Cone c(Kind::Hyperplane, static_cast<int>(normal.size()));
    c.vector_ = normalized(normal, "hyperplane normal");
    return c;
  }
  static Cone half_space(const Eigen::VectorXd& outward_normal) {
    Cone c(Kind::HalfSpace, static_cast<int>(outward_normal.size()));
    c.vector_ = normalized(outward_normal, "half-space normal");
    return c;
  }
  static Cone ray(const Eigen::VectorXd& direction) {
    Cone c(Kind::Ray, static_cast<int>(direction.size()));
    c.vector_ = normalized(direction, "ray direction");
    return c;
  }
  static Cone union_of(std::vector<Cone> members) {
    if (members.empty()) throw InputError("union cone needs members");
    if (members.size() == 1) return members.front();
    Cone c(Kind::UnionCone, members.front().dim());
    for (const auto& m : members)
      if (m.dim() != c.dim()) throw InputError("union cone dim mismatch");
    c.members_ = std::move(members);
    return c;
  }
  static Cone product_of(std::vector<Cone> members) {
    int dim = 0;
    for (const auto& m : members) dim += m.dim();
    Cone c(Kind::ProductCone, dim);
    c.members_ = std::move(members);
    return c;
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const std::vector<Cone>& members() const { return members_; }

  Eigen::VectorXd project(const Eigen::VectorXd& h) const {
    check_dim(h);
    switch (kind_) {
      case Kind::Whole:
        return h;
      case Kind::Zero:
        return Eigen::VectorXd::Zero(dim_);
      case Kind::SignPattern: {
        Eigen::VectorXd p = h;
        for (int i = 0; i < dim_; ++i) {
          if (signs_[i] == Sign::NonNeg) p(i) = std::max(p(i), 0.0);
          else if (signs_[i] == Sign::NonPos) p(i) = std::min(p(i), 0.0);
          else if (signs_[i] == Sign::Zero) p(i) = 0.0;
        }
        return p;
      }
      case Kind::Subspace:
        if (basis_.cols() == 0) return Eigen::VectorXd::Zero(dim_);
        return basis_ * (basis_.transpose() * h);
      case Kind::Hyperplane:
        return h - h.dot(vector_) * vector_;
      case Kind::HalfSpace: {
        const double a = h.dot(vector_);
        return a <= 0.0 ? h : Eigen::VectorXd(h - a * vector_);
      }
      case Kind::Ray:
        return std::max(h.dot(vector_), 0.0) * vector_;
      case Kind::UnionCone: {
        // For closed convex members, minimal distance == maximal projection
        // norm; compare distances directly so this also holds numerically.
        Eigen::VectorXd best;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& m : members_) {
          Eigen::VectorXd p = m.project(h);
          const double dd = (h - p).norm();
          if (dd < best_d - 1e-15) {
            best_d = dd;
            best = std::move(p);
          }
        }
        return best;
      }
      case Kind::ProductCone: {
        Eigen::VectorXd p(dim_);
        int off = 0;
        for (const auto& m : members_) {
          p.segment(off, m.dim()) = m.project(h.segment(off, m.dim()));
          off += m.dim();
        }
        return p;
      }
    }
    throw Error("unreachable cone kind");
  }

  // Euclidean distance, except product cones which use the sum norm.
  double distance(const Eigen::VectorXd& h) const {
    check_dim(h);
    switch (kind_) {
      case Kind::UnionCone: {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& m : members_) best = std::min(best, m.distance(h));
        return best;
      }
      case Kind::ProductCone: {
        double acc = 0.0;
        int off = 0;
        for (const auto& m : members_) {
          acc += m.distance(h.segment(off, m.dim()));
          off += m.dim();
        }
        return acc;
      }
      default:
        return (h - project(h)).norm();
    }
  }

  bool contains(const Eigen::VectorXd& h, double tol = kSetTol) const {
    return distance(h) <= tol;
  }

  // Polar cone. Defined for every kind except unions (the polar of a union
  // is an intersection, which this catalog does not represent).
  Cone polar() const {
    switch (kind_) {
      case Kind::Whole:
        return zero(dim_);
      case Kind::Zero:
        return whole(dim_);
      case Kind::SignPattern: {
        std::vector<Sign> flipped(signs_.size());
        for (std::size_t i = 0; i < signs_.size(); ++i) {
          switch (signs_[i]) {
            case Sign::Free: flipped[i] = Sign::Zero; break;
            case Sign::Zero: flipped[i] = Sign::Free; break;
            case Sign::NonNeg: flipped[i] = Sign::NonPos; break;
            case Sign::NonPos: flipped[i] = Sign::NonNeg; break;
          }
        }
        return sign_pattern(std::move(flipped));
      }
      case Kind::Subspace:
        return subspace(orthogonal_complement(basis_, dim_));
      case Kind::Hyperplane: {
        Eigen::MatrixXd b(dim_, 1);
        b.col(0) = vector_;
        return subspace(b);
      }
      case Kind::HalfSpace:
        return ray(vector_);
      case Kind::Ray:
        return half_space(vector_);
      case Kind::ProductCone: {
        std::vector<Cone> polars;
        polars.reserve(members_.size());
        for (const auto& m : members_) polars.push_back(m.polar());
        return product_of(std::move(polars));
      }
      case Kind::UnionCone:
        throw UnsupportedVariantError("polar of a union cone");
    }
    throw Error("unreachable cone kind");
  }

  static Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& basis,
                                               int dim) {
    const int r = static_cast<int>(basis.cols());
    if (r == 0) return Eigen::MatrixXd::Identity(dim, dim);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    const Eigen::MatrixXd q = qr.householderQ();
    return q.rightCols(dim - r);
  }

 private:
  Cone(Kind kind, int dim) : kind_(kind), dim_(dim) {}

  static Eigen::VectorXd normalized(const Eigen::VectorXd& v,
                                    const char* what) {
    const double n = v.norm();
    if (n < 1e-14) throw InputError(std::string(what) + " must be nonzero");
    return v / n;
  }

  void check_dim(const Eigen::VectorXd& h) const {
    if (static_cast<int>(h.size()) != dim_)
      throw PreconditionError("cone dimension mismatch");
  }

  Kind kind_;
  int dim_;
  std::vector<Sign> signs_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd vector_;
  std::vector<Cone> members_;
};

// ---------------------------------------------------------------------------
// Catalog sets: closed sets with exact distance / nearest point and exact
// contingent (and, where defined, Clarke normal) cones.
// ---------------------------------------------------------------------------

struct DistanceResult {
  double dist = 0.0;
  Eigen::VectorXd nearest;
  int member = -1;  // union: index of the member that realized the minimum
};

class CatalogSet {
 public:
  enum class Kind {
    WholeSpace = 0,
    Box = 1,
    AffineSubspace = 2,
    Ball = 3,
    Sphere = 4,  // full sphere, or a circular arc in R^2
    Line = 5,
    UnionSet = 6,
    ProductSet = 7,
  };

  static CatalogSet whole(int dim) { return CatalogSet(Kind::WholeSpace, dim); }

  static CatalogSet box(Eigen::VectorXd lo, Eigen::VectorXd hi) {
    if (lo.size() != hi.size()) throw InputError("box bounds size mismatch");
    for (int i = 0; i < lo.size(); ++i)
      if (lo(i) > hi(i)) throw InputError("box has lo > hi");
    CatalogSet s(Kind::Box, static_cast<int>(lo.size()));
    s.lo_ = std::move(lo);
    s.hi_ = std::move(hi);
    return s;
  }

  // { base + basis * t }; basis columns must be orthonormal (may be empty,
  // which makes the set the single point {base}).
  static CatalogSet affine(Eigen::VectorXd base, Eigen::MatrixXd basis) {
    CatalogSet s(Kind::AffineSubspace, static_cast<int>(base.size()));
    if (basis.size() > 0 && basis.rows() != base.size())
      throw InputError("affine basis row count mismatch");
    if (basis.cols() > 0) {
      const Eigen::MatrixXd g = basis.transpose() * basis;
      if ((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).norm() > 1e-10)
        throw InputError("affine basis must be orthonormal");
    }
    s.base_ = std::move(base);
    s.basis_ = std::move(basis);
    return s;
  }

  static CatalogSet point(Eigen::VectorXd p) {
    const int dim = static_cast<int>(p.size());
    return affine(std::move(p), Eigen::MatrixXd(dim, 0));
  }

  static CatalogSet ball(Eigen::VectorXd center, double radius) {
    if (radius <= 0.0) throw InputError("ball radius must be positive");
    CatalogSet s(Kind::Ball, static_cast<int>(center.size()));
    s.center_ = std::move(center);
    s.radius_ = radius;
    return s;
  }

  static CatalogSet sphere(Eigen::VectorXd center, double radius) {
    if (radius <= 0.0) throw InputError("sphere radius must be positive");
    CatalogSet s(Kind::Sphere, static_cast<int>(center.size()));
    s.center_ = std::move(center);
    s.radius_ = radius;
    return s;
  }

  // Circular arc in R^2: angles in [theta_min, theta_max] measured from the
  // center, with theta_max - theta_min <= 2*pi.
  static CatalogSet arc(Eigen::VectorXd center, double radius,
                        double theta_min, double theta_max) {
    if (center.size() != 2) throw InputError("arc is defined in R^2 only");
    if (theta_max < theta_min || theta_max - theta_min > 2.0 * kPi + 1e-12)
      throw InputError("arc angle range invalid");
    CatalogSet s = sphere(std::move(center), radius);
    s.has_arc_ = true;
    s.theta_min_ = theta_min;
    s.theta_max_ = theta_max;
    return s;
  }

  static CatalogSet line(Eigen::VectorXd through, Eigen::VectorXd direction) {
    const double n = direction.norm();
    if (n < 1e-14) throw InputError("line direction must be nonzero");
    CatalogSet s(Kind::Line, static_cast<int>(through.size()));
    if (through.size() != direction.size())
      throw InputError("line point/direction size mismatch");
    s.base_ = std::move(through);
    s.direction_ = direction / n;
    return s;
  }

  static CatalogSet union_of(std::vector<CatalogSet> members) {
    if (members.empty()) throw InputError("union needs members");
    CatalogSet s(Kind::UnionSet, members.front().dim());
    for (const auto& m : members)
      if (m.dim() != s.dim()) throw InputError("union member dim mismatch");
    s.members_ = std::move(members);
    return s;
  }

  static CatalogSet product_of(std::vector<CatalogSet> members) {
    if (members.empty()) throw InputError("product needs factors");
    int dim = 0;
    for (const auto& m : members) dim += m.dim();
    CatalogSet s(Kind::ProductSet, dim);
    s.members_ = std::move(members);
    return s;
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const std::vector<CatalogSet>& members() const { return members_; }
  const Eigen::VectorXd& box_lo() const { return lo_; }
  const Eigen::VectorXd& box_hi() const { return hi_; }
  const Eigen::VectorXd& center() const { return center_; }
  double radius() const { return radius_; }

  // Distance and nearest point. Euclidean within a factor; products use the
  // sum norm, so their distance is the sum of factor distances. Ties on
  // unions go to the lowest member index.
  DistanceResult distance(const Eigen::VectorXd& z) const {
    check_dim(z);
    DistanceResult r;
    switch (kind_) {
      case Kind::WholeSpace:
        r.nearest = z;
        return r;
      case Kind::Box:
        r.nearest = z.cwiseMax(lo_).cwiseMin(hi_);
        r.dist = (z - r.nearest).norm();
        return r;
      case Kind::AffineSubspace: {
        Eigen::VectorXd u = z - base_;
        r.nearest = basis_.cols() == 0
                        ? base_
                        : Eigen::VectorXd(base_ + basis_ * (basis_.transpose() * u));
        r.dist = (z - r.nearest).norm();
        return r;
      }
      case Kind::Ball: {
        const Eigen::VectorXd u = z - center_;
        const double nu = u.norm();
        if (nu <= radius_) {
          r.nearest = z;
          return r;
        }
        r.nearest = center_ + (radius_ / nu) * u;
        r.dist = (nu * nu - radius_ * radius_) / (nu + radius_);
        return r;
      }
      case Kind::Sphere:
        return sphere_distance(z);
      case Kind::Line: {
        r.nearest = base_ + (z - base_).dot(direction_) * direction_;
        r.dist = (z - r.nearest).norm();
        return r;
      }
      case Kind::UnionSet: {
        r.dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < members_.size(); ++i) {
          DistanceResult ri = members_[i].distance(z);
          if (ri.dist < r.dist - 1e-15) {
            r.dist = ri.dist;
            r.nearest = std::move(ri.nearest);
            r.member = static_cast<int>(i);
          }
        }
        return r;
      }
      case Kind::ProductSet: {
        r.nearest.resize(dim_);
        int off = 0;
        for (const auto& m : members_) {
          DistanceResult ri = m.distance(z.segment(off, m.dim()));
          r.nearest.segment(off, m.dim()) = ri.nearest;
          r.dist += ri.dist;  // sum norm across factors
          off += m.dim();
        }
        return r;
      }
    }
    throw Error("unreachable set kind");
  }

  bool contains(const Eigen::VectorXd& z, double tol = kSetTol) const {
    return distance(z).dist <= tol;
  }

  // Contingent (Bouligand) cone at a point of the set. For products this is
  // the product of factor cones, i.e. the outer bound K(A) x K(B); the
  // product-cone checker probes the inclusion empirically.
  Cone contingent_cone(const Eigen::VectorXd& z, double tol = kSetTol) const {
    check_dim(z);
    if (!contains(z, std::max(tol, kSetTol)))
      throw PreconditionError("contingent cone requested at a point not in the set");
    switch (kind_) {
      case Kind::WholeSpace:
        return Cone::whole(dim_);
      case Kind::Box: {
        std::vector<Cone::Sign> signs(dim_, Cone::Sign::Free);
        for (int i = 0; i < dim_; ++i) {
          const bool at_lo = z(i) - lo_(i) <= tol;
          const bool at_hi = hi_(i) - z(i) <= tol;
          if (at_lo && at_hi) signs[i] = Cone::Sign::Zero;
          else if (at_lo) signs[i] = Cone::Sign::NonNeg;
          else if (at_hi) signs[i] = Cone::Sign::NonPos;
        }
        return Cone::sign_pattern(std::move(signs));
      }
      case Kind::AffineSubspace:
        return Cone::subspace(basis_);
      case Kind::Ball: {
        const Eigen::VectorXd u = z - center_;
        if (radius_ - u.norm() > tol) return Cone::whole(dim_);
        return Cone::half_space(u);
      }
      case Kind::Sphere: {
        const Eigen::VectorXd u = z - center_;
        if (!has_arc_) return Cone::hyperplane(u);
        const double theta = wrap_angle(std::atan2(u(1), u(0)));
        const double atol = tol / radius_;
        const bool at_min = theta - theta_min_ <= atol;
        const bool at_max = theta_max_ - theta <= atol;
        const Eigen::Vector2d tau(-std::sin(theta), std::cos(theta));
        if (at_min && at_max) return Cone::zero(dim_);  // degenerate arc
        if (at_min) return Cone::ray(tau);
        if (at_max) return Cone::ray(-tau);
        Eigen::MatrixXd b(2, 1);
        b.col(0) = tau;
        return Cone::subspace(b);
      }
      case Kind::Line: {
        Eigen::MatrixXd b(dim_, 1);
        b.col(0) = direction_;
        return Cone::subspace(b);
      }
      case Kind::UnionSet: {
        std::vector<Cone> cones;
        for (const auto& m : members_)
          if (m.contains(z, tol)) cones.push_back(m.contingent_cone(z, tol));
        if (cones.empty())
          throw PreconditionError("point not in any union member");
        return Cone::union_of(std::move(cones));
      }
      case Kind::ProductSet: {
        std::vector<Cone> cones;
        int off = 0;
        for (const auto& m : members_) {
          cones.push_back(m.contingent_cone(z.segment(off, m.dim()), tol));
          off += m.dim();
        }
        return Cone::product_of(std::move(cones));
      }
    }
    throw Error("unreachable set kind");
  }

  // Clarke normal cone where this catalog can express it exactly: polar of
  // the tangent cone for convex and smooth variants; unions only away from
  // crossings. Returns nullopt when the variant cannot represent it.
  std::optional<Cone> clarke_normal_cone(const Eigen::VectorXd& z,
                                         double tol = kSetTol) const {
    check_dim(z);
    switch (kind_) {
      case Kind::UnionSet: {
        int hit = -1;
        for (std::size_t i = 0; i < members_.size(); ++i) {
          if (members_[i].contains(z, tol)) {
            if (hit >= 0) return std::nullopt;  // crossing point
            hit = static_cast<int>(i);
          }
        }
        if (hit < 0)
          throw PreconditionError("normal cone requested at a point not in the set");
        return members_[hit].clarke_normal_cone(z, tol);
      }
      case Kind::ProductSet: {
        std::vector<Cone> cones;
        int off = 0;
        for (const auto& m : members_) {
          auto c = m.clarke_normal_cone(z.segment(off, m.dim()), tol);
          if (!c) return std::nullopt;
          cones.push_back(std::move(*c));
          off += m.dim();
        }
        return Cone::product_of(std::move(cones));
      }
      default:
        return contingent_cone(z, tol).polar();
    }
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  CatalogSet(Kind kind, int dim) : kind_(kind), dim_(dim) {}

  void check_dim(const Eigen::VectorXd& z) const {
    if (static_cast<int>(z.size()) != dim_)
      throw PreconditionError("set dimension mismatch");
  }

  double wrap_angle(double theta) const {
    // Shift by multiples of 2*pi into [theta_min, theta_min + 2*pi).
    double t = std::fmod(theta - theta_min_, 2.0 * kPi);
    if (t < 0.0) t += 2.0 * kPi;
    return theta_min_ + t;
  }

  DistanceResult sphere_distance(const Eigen::VectorXd& z) const {
    DistanceResult r;
    const Eigen::VectorXd u = z - center_;
    const double nu = u.norm();
    if (nu < 1e-14) {
      // Center: every surface point is equidistant; pick a fixed one.
      Eigen::VectorXd p = center_;
      if (has_arc_) {
        p(0) += radius_ * std::cos(theta_min_);
        p(1) += radius_ * std::sin(theta_min_);
      } else {
        p(0) += radius_;
      }
      r.nearest = p;
      r.dist = radius_;
      return r;
    }
    const Eigen::VectorXd on_circle = center_ + (radius_ / nu) * u;
    // |nu - R| without cancellation.
    const double radial = std::abs(nu * nu - radius_ * radius_) / (nu + radius_);
    if (!has_arc_) {
      r.nearest = on_circle;
      r.dist = radial;
      return r;
    }
    const double theta = wrap_angle(std::atan2(u(1), u(0)));
    if (theta <= theta_max_) {
      r.nearest = on_circle;
      r.dist = radial;
      return r;
    }
    Eigen::Vector2d e0(center_(0) + radius_ * std::cos(theta_min_),
                       center_(1) + radius_ * std::sin(theta_min_));
    Eigen::Vector2d e1(center_(0) + radius_ * std::cos(theta_max_),
                       center_(1) + radius_ * std::sin(theta_max_));
    const double d0 = (z - e0).norm();
    const double d1 = (z - e1).norm();
    if (d0 < d1 || (d0 == d1 && lex_less(e0, e1))) {
      r.nearest = e0;
      r.dist = d0;
    } else {
      r.nearest = e1;
      r.dist = d1;
    }
    return r;
  }

  static bool lex_less(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    if (a(0) != b(0)) return a(0) < b(0);
    return a(1) < b(1);
  }

  Kind kind_;
  int dim_;
  Eigen::VectorXd lo_, hi_;                  // box
  Eigen::VectorXd base_;                     // affine / line
  Eigen::MatrixXd basis_;                    // affine
  Eigen::VectorXd center_;                   // ball / sphere
  double radius_ = 0.0;
  bool has_arc_ = false;
  double theta_min_ = 0.0, theta_max_ = 0.0;
  Eigen::VectorXd direction_;                // line
  std::vector<CatalogSet> members_;          // union / product
};

// ---------------------------------------------------------------------------
// Lower Dini quotient estimator for distance functions:
//   d^-_A(x; h) = liminf_{t->0+} d_A(x + t h)/t,
// estimated as the minimum quotient over t = 2^-j, j in [4, 20]. A direction
// lies in the contingent cone K(A, x) exactly when the liminf is zero.
// ---------------------------------------------------------------------------

struct DiniEstimate {
  double value = 0.0;               // min quotient over the ladder
  double at_finest = 0.0;           // quotient at j = 20
  std::vector<double> quotients;    // one per j
};

inline DiniEstimate lower_dini_quotient(const CatalogSet& set,
                                        const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& h,
                                        int j_lo = 4, int j_hi = 20) {
  DiniEstimate est;
  est.value = std::numeric_limits<double>::infinity();
  for (int j = j_lo; j <= j_hi; ++j) {
    const double t = std::ldexp(1.0, -j);
    const double q = set.distance(x + t * h).dist / t;
    est.quotients.push_back(q);
    est.value = std::min(est.value, q);
    est.at_finest = q;
  }
  return est;
}

}  // namespace scotkit
