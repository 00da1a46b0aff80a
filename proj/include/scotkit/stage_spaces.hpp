#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scotkit/errors.hpp"
#include "scotkit/prob_tree.hpp"

namespace scotkit {

// Coefficients of an element of the stage space
//   X_k = { y^0 + sum_i y^i w_k^i : y^i F_{k-1}-measurable },
// i.e. d+1 adapted processes at stage k-1 sharing one vector dimension.
// The family {1, w_k^1, ..., w_k^d} is conditionally orthonormal, so the
// coefficients are conditional (weighted) expectations and the squared X_k
// norm is the sum of the component L2 norms squared.
struct StageDecomposition {
  int stage = 1;                          // k >= 1
  std::vector<AdaptedProcess> components;  // size d+1, index 0 -> y^0

  int dim() const { return components.empty() ? 0 : components[0].dim(); }
};

inline void check_decomposition(const ScenarioTree& tree,
                                const StageDecomposition& dec) {
  if (dec.stage < 1 || dec.stage > tree.horizon())
    throw PreconditionError("stage decomposition stage out of range");
  if (static_cast<int>(dec.components.size()) != tree.noise_dim() + 1)
    throw PreconditionError("stage decomposition needs d+1 components");
  for (const auto& c : dec.components) {
    if (c.stage() != dec.stage - 1 || c.dim() != dec.dim())
      throw PreconditionError("stage decomposition component shape mismatch");
    check_process(tree, c);
  }
}

// Realizes the decomposition as node values at stage k.
inline AdaptedProcess assemble(const ScenarioTree& tree,
                               const StageDecomposition& dec) {
  check_decomposition(tree, dec);
  const int k = dec.stage;
  const int d = tree.noise_dim();
  AdaptedProcess out = AdaptedProcess::zero(tree, k, dec.dim());
  const int begin = tree.stage_begin(k);
  const int pbegin = tree.stage_begin(k - 1);
  for (int j = 0; j < out.count(); ++j) {
    const int id = begin + j;
    const int pj = tree.parent(id) - pbegin;
    Eigen::VectorXd v = dec.components[0].value(pj);
    const Eigen::VectorXd& w = tree.noise(id);
    for (int i = 0; i < d; ++i) v += w(i) * dec.components[i + 1].value(pj);
    out.value(j) = v;
  }
  return out;
}

struct ProjectionResult {
  StageDecomposition decomposition;
  double residual = 0.0;  // L2 distance from x to X_k
};

// Orthogonal projection of an adapted process at stage k >= 1 onto X_k.
inline ProjectionResult project(const ScenarioTree& tree,
                                const AdaptedProcess& x) {
  check_process(tree, x);
  if (x.stage() < 1)
    throw PreconditionError("projection onto X_k needs stage >= 1");
  ProjectionResult res;
  res.decomposition.stage = x.stage();
  res.decomposition.components.reserve(tree.noise_dim() + 1);
  res.decomposition.components.push_back(cond_expectation(tree, x));
  for (int i = 0; i < tree.noise_dim(); ++i)
    res.decomposition.components.push_back(cond_expectation(tree, x, i));
  const AdaptedProcess back = assemble(tree, res.decomposition);
  res.residual = l2_norm(tree, x - back);
  return res;
}

// X_k norm straight from coefficients: sqrt(sum_i E|y^i|^2).
inline double norm_Xk(const ScenarioTree& tree, const StageDecomposition& dec) {
  check_decomposition(tree, dec);
  double acc = 0.0;
  for (const auto& c : dec.components) acc += l2_inner(tree, c, c);
  return std::sqrt(acc);
}

struct MembershipReport {
  bool member = false;
  double residual = 0.0;
  double tolerance = 0.0;
  // Set when the residual lands within a factor 10 of the tolerance on
  // either side; such calls are decided by roundoff, not structure.
  bool near_boundary = false;
};

constexpr double kMembershipTol = 1e-10;

inline MembershipReport membership(const ScenarioTree& tree,
                                   const AdaptedProcess& x) {
  MembershipReport rep;
  const ProjectionResult pr = project(tree, x);
  rep.residual = pr.residual;
  rep.tolerance = kMembershipTol * (1.0 + l2_norm(tree, x));
  rep.member = rep.residual <= rep.tolerance;
  rep.near_boundary = rep.residual > 0.1 * rep.tolerance &&
                      rep.residual < 10.0 * rep.tolerance;
  return rep;
}

// Per-atom dimension of L2(F_k) over one F_{k-1} atom (the branching count)
// versus the coefficient count 1+d of X_k. Equality means the stage space
// fills the whole conditional space (binary noise with d = 1).
inline int atom_dimension(const ScenarioTree& tree, int k) {
  return tree.branching(k);
}
inline int coefficient_dimension(const ScenarioTree& tree) {
  return tree.noise_dim() + 1;
}

// Element of X_k. Stage 0 elements are deterministic vectors (X_0 = R^n);
// stages >= 1 are stored as decompositions so membership is structural.
// `projection_residual` records the L2 defect of the raw process this
// element was built from (zero when constructed from coefficients).
class StageElement {
 public:
  StageElement() = default;

  static StageElement stage0(Eigen::VectorXd value) {
    StageElement e;
    e.stage_ = 0;
    e.value0_ = std::move(value);
    return e;
  }

  static StageElement from_decomposition(const ScenarioTree& tree,
                                         StageDecomposition dec) {
    check_decomposition(tree, dec);
    StageElement e;
    e.stage_ = dec.stage;
    e.dec_ = std::move(dec);
    return e;
  }

  // Projects a raw adapted process; stage 0 processes are read at the root.
  static StageElement from_process(const ScenarioTree& tree,
                                   const AdaptedProcess& x) {
    if (x.stage() == 0) return stage0(x.value(0));
    ProjectionResult pr = project(tree, x);
    StageElement e;
    e.stage_ = x.stage();
    e.dec_ = std::move(pr.decomposition);
    e.projection_residual_ = pr.residual;
    return e;
  }

  int stage() const { return stage_; }
  int dim() const { return stage_ == 0 ? static_cast<int>(value0_.size())
                                       : dec_.dim(); }
  double projection_residual() const { return projection_residual_; }

  const Eigen::VectorXd& stage0_value() const {
    if (stage_ != 0) throw PreconditionError("not a stage-0 element");
    return value0_;
  }
  const StageDecomposition& decomposition() const {
    if (stage_ == 0) throw PreconditionError("stage-0 element has no decomposition");
    return dec_;
  }

  double norm(const ScenarioTree& tree) const {
    return stage_ == 0 ? value0_.norm() : norm_Xk(tree, dec_);
  }

  AdaptedProcess to_process(const ScenarioTree& tree) const {
    if (stage_ == 0) return AdaptedProcess::constant(tree, 0, value0_);
    return assemble(tree, dec_);
  }

 private:
  int stage_ = 0;
  Eigen::VectorXd value0_;
  StageDecomposition dec_;
  double projection_residual_ = 0.0;
};

}  // namespace scotkit
