#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scotkit/catalog.hpp"
#include "scotkit/errors.hpp"
#include "scotkit/prob_tree.hpp"
#include "scotkit/rng.hpp"
#include "scotkit/stage_spaces.hpp"

namespace scotkit {

// Admissible control-set descriptor: whole space, box, ball, or a finite
// union of boxes. Projection ties on unions go to the lowest member index.
class ControlSet {
 public:
  static ControlSet whole(int dim) {
    return ControlSet(CatalogSet::whole(dim));
  }
  static ControlSet box(Eigen::VectorXd lo, Eigen::VectorXd hi) {
    return ControlSet(CatalogSet::box(std::move(lo), std::move(hi)));
  }
  static ControlSet ball(Eigen::VectorXd center, double radius) {
    return ControlSet(CatalogSet::ball(std::move(center), radius));
  }
  static ControlSet from_catalog(CatalogSet set) {
    switch (set.kind()) {
      case CatalogSet::Kind::WholeSpace:
      case CatalogSet::Kind::Box:
      case CatalogSet::Kind::Ball:
        return ControlSet(std::move(set));
      case CatalogSet::Kind::UnionSet: {
        for (const auto& m : set.members())
          if (m.kind() != CatalogSet::Kind::Box)
            throw InputError("control-set unions must consist of boxes");
        return ControlSet(std::move(set));
      }
      default:
        throw InputError("unsupported control-set variant");
    }
  }

  int dim() const { return set_.dim(); }
  const CatalogSet& catalog() const { return set_; }

  Eigen::VectorXd project(const Eigen::VectorXd& u) const {
    return set_.distance(u).nearest;
  }
  double violation(const Eigen::VectorXd& u) const {
    return set_.distance(u).dist;
  }
  // Norm of the projection of -grad onto the tangent cone at u: the size of
  // the feasible descent still available; zero exactly at stationary points.
  double stationarity_residual(const Eigen::VectorXd& u,
                               const Eigen::VectorXd& grad) const {
    const Cone cone = set_.contingent_cone(u, 1e-9);
    return cone.project(-grad).norm();
  }

 private:
  explicit ControlSet(CatalogSet set) : set_(std::move(set)) {}
  CatalogSet set_;
};

// Finite-horizon controlled dynamics on a scenario tree,
//   x_{k+1} = b(k, x_k, u_k) + sigma(k, x_k, u_k) w_{k+1},  x_0 fixed,
// with cost E(sum_k l(k, x_k, u_k) + Phi(x_N)). Callbacks evaluate one node.
// `bound_c1` must dominate |b|,|sigma^i| growth slopes and all first
// derivatives; `bound_c2` the quadratic cost growth. These feed the
// regularity constants, so families must declare them honestly.
struct ControlProblem {
  using VecFn =
      std::function<Eigen::VectorXd(int, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
  using MatFn =
      std::function<Eigen::MatrixXd(int, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
  using MatColFn = std::function<Eigen::MatrixXd(int, const Eigen::VectorXd&,
                                                 const Eigen::VectorXd&, int)>;
  using ScalarFn =
      std::function<double(int, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

  int horizon = 0;      // N
  int state_dim = 0;    // n
  int control_dim = 0;  // m
  int noise_dim = 0;    // d

  Eigen::VectorXd x0;
  std::optional<CatalogSet> initial_set;  // transversality only

  VecFn drift;                    // b: R^n
  MatFn diffusion;                // sigma: n x d
  ScalarFn running_cost;          // l
  std::function<double(const Eigen::VectorXd&)> terminal_cost;  // Phi

  MatFn drift_jac_x;              // n x n
  MatFn drift_jac_u;              // n x m
  MatColFn diffusion_jac_x;       // d/dx sigma^i: n x n
  MatColFn diffusion_jac_u;       // n x m
  VecFn running_cost_grad_x;      // R^n
  VecFn running_cost_grad_u;      // R^m
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_cost_grad;

  double bound_c1 = 0.0;
  double bound_c2 = 0.0;
  std::optional<ControlSet> control_set;

  // Derivative callbacks may be left empty and filled by central differences,
  // but only when this debug switch is set; reports must surface the flag.
  bool allow_fd_derivatives = false;

  void validate() const {
    if (horizon < 1) throw InputError("control problem horizon must be >= 1");
    if (state_dim < 1 || control_dim < 1 || noise_dim < 1)
      throw InputError("control problem dimensions must be positive");
    if (static_cast<int>(x0.size()) != state_dim)
      throw InputError("x0 has wrong dimension");
    if (!drift || !diffusion || !running_cost || !terminal_cost)
      throw InputError("control problem requires b, sigma, l, Phi callbacks");
    const bool have_jac = drift_jac_x && drift_jac_u && diffusion_jac_x &&
                          diffusion_jac_u && running_cost_grad_x &&
                          running_cost_grad_u && terminal_cost_grad;
    if (!have_jac && !allow_fd_derivatives)
      throw InputError(
          "derivative callbacks missing; set allow_fd_derivatives to use the "
          "finite-difference fallback");
    if (bound_c1 <= 0.0) throw InputError("bound_c1 must be positive");
    if (control_set && control_set->dim() != control_dim)
      throw InputError("control set dimension mismatch");
    if (initial_set) {
      if (initial_set->dim() != state_dim)
        throw InputError("initial set dimension mismatch");
      if (!initial_set->contains(x0, 1e-10))
        throw InputError("x0 must belong to the declared initial set");
    }
  }

  bool uses_fd_derivatives() const { return !(drift_jac_x && drift_jac_u); }

  // --- derivative access (callback or flagged central differences) ---

  Eigen::MatrixXd b_x(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (drift_jac_x) return drift_jac_x(k, x, u);
    return fd_jac_x([&](const Eigen::VectorXd& xx) { return drift(k, xx, u); }, x);
  }
  Eigen::MatrixXd b_u(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (drift_jac_u) return drift_jac_u(k, x, u);
    return fd_jac_x([&](const Eigen::VectorXd& uu) { return drift(k, x, uu); }, u);
  }
  Eigen::MatrixXd sigma_x(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          int i) const {
    if (diffusion_jac_x) return diffusion_jac_x(k, x, u, i);
    return fd_jac_x(
        [&](const Eigen::VectorXd& xx) -> Eigen::VectorXd {
          return diffusion(k, xx, u).col(i);
        },
        x);
  }
  Eigen::MatrixXd sigma_u(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          int i) const {
    if (diffusion_jac_u) return diffusion_jac_u(k, x, u, i);
    return fd_jac_x(
        [&](const Eigen::VectorXd& uu) -> Eigen::VectorXd {
          return diffusion(k, x, uu).col(i);
        },
        u);
  }
  Eigen::VectorXd l_x(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (running_cost_grad_x) return running_cost_grad_x(k, x, u);
    return fd_grad([&](const Eigen::VectorXd& xx) { return running_cost(k, xx, u); }, x);
  }
  Eigen::VectorXd l_u(int k, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (running_cost_grad_u) return running_cost_grad_u(k, x, u);
    return fd_grad([&](const Eigen::VectorXd& uu) { return running_cost(k, x, uu); }, u);
  }
  Eigen::VectorXd phi_x(const Eigen::VectorXd& x) const {
    if (terminal_cost_grad) return terminal_cost_grad(x);
    return fd_grad([&](const Eigen::VectorXd& xx) { return terminal_cost(xx); }, x);
  }

 private:
  static constexpr double kFdStep = 1e-6;

  template <typename F>
  static Eigen::MatrixXd fd_jac_x(F&& f, const Eigen::VectorXd& at) {
    const Eigen::VectorXd f0 = f(at);
    Eigen::MatrixXd jac(f0.size(), at.size());
    for (int j = 0; j < at.size(); ++j) {
      Eigen::VectorXd hi = at, lo = at;
      hi(j) += kFdStep;
      lo(j) -= kFdStep;
      jac.col(j) = (f(hi) - f(lo)) / (2.0 * kFdStep);
    }
    return jac;
  }

  template <typename F>
  static Eigen::VectorXd fd_grad(F&& f, const Eigen::VectorXd& at) {
    Eigen::VectorXd g(at.size());
    for (int j = 0; j < at.size(); ++j) {
      Eigen::VectorXd hi = at, lo = at;
      hi(j) += kFdStep;
      lo(j) -= kFdStep;
      g(j) = (f(hi) - f(lo)) / (2.0 * kFdStep);
    }
    return g;
  }
};

struct TrajectoryPair {
  std::vector<AdaptedProcess> x;  // stages 0..N
  std::vector<AdaptedProcess> u;  // stages 0..N-1
};

inline void check_controls(const ControlProblem& p, const ScenarioTree& tree,
                           const std::vector<AdaptedProcess>& u) {
  if (static_cast<int>(u.size()) != p.horizon)
    throw PreconditionError("control needs one process per stage 0..N-1");
  for (int k = 0; k < p.horizon; ++k) {
    if (u[k].stage() != k || u[k].dim() != p.control_dim)
      throw PreconditionError("control process shape mismatch at stage " +
                              std::to_string(k));
    check_process(tree, u[k]);
  }
}

inline void check_states(const ControlProblem& p, const ScenarioTree& tree,
                         const std::vector<AdaptedProcess>& x) {
  if (static_cast<int>(x.size()) != p.horizon + 1)
    throw PreconditionError("state needs one process per stage 0..N");
  for (int k = 0; k <= p.horizon; ++k) {
    if (x[k].stage() != k || x[k].dim() != p.state_dim)
      throw PreconditionError("state process shape mismatch at stage " +
                              std::to_string(k));
    check_process(tree, x[k]);
  }
}

// Forward simulation of the dynamics under a given control.
inline TrajectoryPair rollout(const ControlProblem& p, const ScenarioTree& tree,
                              std::vector<AdaptedProcess> u) {
  check_controls(p, tree, u);
  if (tree.horizon() != p.horizon || tree.noise_dim() != p.noise_dim)
    throw PreconditionError("tree and problem disagree on N or d");
  TrajectoryPair traj;
  traj.u = std::move(u);
  traj.x.reserve(p.horizon + 1);
  traj.x.push_back(AdaptedProcess::constant(tree, 0, p.x0));
  for (int k = 0; k < p.horizon; ++k) {
    AdaptedProcess next = AdaptedProcess::zero(tree, k + 1, p.state_dim);
    const int pbegin = tree.stage_begin(k);
    for (int pj = 0; pj < tree.stage_size(k); ++pj) {
      const int pid = pbegin + pj;
      const Eigen::VectorXd xk = traj.x[k].value(pj);
      const Eigen::VectorXd uk = traj.u[k].value(pj);
      const Eigen::VectorXd b = p.drift(k, xk, uk);
      const Eigen::MatrixXd sig = p.diffusion(k, xk, uk);
      if (b.size() != p.state_dim || sig.rows() != p.state_dim ||
          sig.cols() != p.noise_dim)
        throw PreconditionError("dynamics callback returned wrong shape");
      const int cb = tree.child_begin(pid);
      for (int c = 0; c < tree.child_count(pid); ++c) {
        const int id = cb + c;
        next.value(tree.local_index(id, k + 1)) = b + sig * tree.noise(id);
      }
    }
    traj.x.push_back(std::move(next));
  }
  return traj;
}

// Constraint residuals, one element of X_k per stage:
//   g_0 = x0_hat - x_0,  g_{k+1} = b + sigma w_{k+1} - x_{k+1}.
// Raw node values are projected on entry, so each element is structurally in
// its stage space and carries the projection defect of the input.
inline std::vector<StageElement> residual_g(const ControlProblem& p,
                                            const ScenarioTree& tree,
                                            const std::vector<AdaptedProcess>& x,
                                            const std::vector<AdaptedProcess>& u) {
  check_states(p, tree, x);
  check_controls(p, tree, u);
  std::vector<StageElement> out;
  out.reserve(p.horizon + 1);
  out.push_back(StageElement::stage0(p.x0 - x[0].value(0)));
  for (int k = 0; k < p.horizon; ++k) {
    AdaptedProcess res = AdaptedProcess::zero(tree, k + 1, p.state_dim);
    const int pbegin = tree.stage_begin(k);
    for (int pj = 0; pj < tree.stage_size(k); ++pj) {
      const int pid = pbegin + pj;
      const Eigen::VectorXd b = p.drift(k, x[k].value(pj), u[k].value(pj));
      const Eigen::MatrixXd sig = p.diffusion(k, x[k].value(pj), u[k].value(pj));
      const int cb = tree.child_begin(pid);
      for (int c = 0; c < tree.child_count(pid); ++c) {
        const int id = cb + c;
        const int j = tree.local_index(id, k + 1);
        res.value(j) = b + sig * tree.noise(id) - x[k + 1].value(j);
      }
    }
    out.push_back(StageElement::from_process(tree, res));
  }
  return out;
}

// Gateaux derivative of g at (x, u) applied to a direction (z, v):
//   Dg_0 = -z_0,
//   Dg_{k+1} = b_x z_k + b_u v_k + sum_i (sigma^i_x z_k + sigma^i_u v_k) w^i - z_{k+1}.
inline std::vector<StageElement> linearize_g(const ControlProblem& p,
                                             const ScenarioTree& tree,
                                             const std::vector<AdaptedProcess>& x,
                                             const std::vector<AdaptedProcess>& u,
                                             const std::vector<AdaptedProcess>& z,
                                             const std::vector<AdaptedProcess>& v) {
  check_states(p, tree, x);
  check_controls(p, tree, u);
  check_states(p, tree, z);
  check_controls(p, tree, v);
  std::vector<StageElement> out;
  out.reserve(p.horizon + 1);
  out.push_back(StageElement::stage0(-z[0].value(0)));
  for (int k = 0; k < p.horizon; ++k) {
    AdaptedProcess lin = AdaptedProcess::zero(tree, k + 1, p.state_dim);
    const int pbegin = tree.stage_begin(k);
    for (int pj = 0; pj < tree.stage_size(k); ++pj) {
      const int pid = pbegin + pj;
      const Eigen::VectorXd xk = x[k].value(pj);
      const Eigen::VectorXd uk = u[k].value(pj);
      const Eigen::VectorXd bz =
          p.b_x(k, xk, uk) * z[k].value(pj) + p.b_u(k, xk, uk) * v[k].value(pj);
      std::vector<Eigen::VectorXd> sz(p.noise_dim);
      for (int i = 0; i < p.noise_dim; ++i)
        sz[i] = p.sigma_x(k, xk, uk, i) * z[k].value(pj) +
                p.sigma_u(k, xk, uk, i) * v[k].value(pj);
      const int cb = tree.child_begin(pid);
      for (int c = 0; c < tree.child_count(pid); ++c) {
        const int id = cb + c;
        const int j = tree.local_index(id, k + 1);
        Eigen::VectorXd val = bz;
        for (int i = 0; i < p.noise_dim; ++i) val += tree.noise(id)(i) * sz[i];
        lin.value(j) = val - z[k + 1].value(j);
      }
    }
    out.push_back(StageElement::from_process(tree, lin));
  }
  return out;
}

// Constants of the state-equation right inverse:
//   cbar = (d+2)^2 (c1^2 + 1),
// per-stage bound |z_{k+1}|^2 <= (N+1) cbar^{N+1} sum_k |delta_k|^2, and the
// aggregate constant over the product Hilbert norm on Pi X_k,
//   alpha = (N+1) cbar^{(N+1)/2}.
inline double cbar_constant(const ControlProblem& p) {
  const double d2 = static_cast<double>(p.noise_dim) + 2.0;
  return d2 * d2 * (p.bound_c1 * p.bound_c1 + 1.0);
}
inline double right_inverse_stage_bound(const ControlProblem& p) {
  return (p.horizon + 1.0) * std::pow(cbar_constant(p), p.horizon + 1.0);
}
inline double dynamics_regularity_constant(const ControlProblem& p) {
  return (p.horizon + 1.0) *
         std::pow(cbar_constant(p), (p.horizon + 1.0) / 2.0);
}

// Solves Dg(x,u)(z, 0) = delta for the unique z:
//   z_0 = -delta_0,  z_{k+1} = b_x z_k + sum_i sigma^i_x z_k w^i - delta_{k+1}.
inline std::vector<AdaptedProcess> solve_right_inverse(
    const ControlProblem& p, const ScenarioTree& tree,
    const std::vector<AdaptedProcess>& x, const std::vector<AdaptedProcess>& u,
    const std::vector<StageElement>& delta) {
  check_states(p, tree, x);
  check_controls(p, tree, u);
  if (static_cast<int>(delta.size()) != p.horizon + 1)
    throw PreconditionError("delta needs one stage element per stage 0..N");
  for (int k = 0; k <= p.horizon; ++k) {
    if (delta[k].stage() != k || delta[k].dim() != p.state_dim)
      throw PreconditionError("delta element shape mismatch at stage " +
                              std::to_string(k));
    const double tol = kMembershipTol * (1.0 + delta[k].norm(tree));
    if (delta[k].projection_residual() > tol) {
      std::ostringstream os;
      os << "delta at stage " << k << " is not in X_k: projection residual "
         << delta[k].projection_residual() << " exceeds " << tol;
      throw PreconditionError(os.str());
    }
  }
  std::vector<AdaptedProcess> z;
  z.reserve(p.horizon + 1);
  z.push_back(AdaptedProcess::constant(tree, 0, -delta[0].stage0_value()));
  for (int k = 0; k < p.horizon; ++k) {
    const AdaptedProcess dval = delta[k + 1].to_process(tree);
    AdaptedProcess next = AdaptedProcess::zero(tree, k + 1, p.state_dim);
    const int pbegin = tree.stage_begin(k);
    for (int pj = 0; pj < tree.stage_size(k); ++pj) {
      const int pid = pbegin + pj;
      const Eigen::VectorXd xk = x[k].value(pj);
      const Eigen::VectorXd uk = u[k].value(pj);
      const Eigen::VectorXd bz = p.b_x(k, xk, uk) * z[k].value(pj);
      std::vector<Eigen::VectorXd> sz(p.noise_dim);
      for (int i = 0; i < p.noise_dim; ++i)
        sz[i] = p.sigma_x(k, xk, uk, i) * z[k].value(pj);
      const int cb = tree.child_begin(pid);
      for (int c = 0; c < tree.child_count(pid); ++c) {
        const int id = cb + c;
        const int j = tree.local_index(id, k + 1);
        Eigen::VectorXd val = bz;
        for (int i = 0; i < p.noise_dim; ++i) val += tree.noise(id)(i) * sz[i];
        next.value(j) = val - dval.value(j);
      }
    }
    z.push_back(std::move(next));
  }
  return z;
}

// Overload taking raw adapted processes; rejects inputs outside the stage
// spaces (within the membership tolerance) instead of silently projecting.
inline std::vector<AdaptedProcess> solve_right_inverse(
    const ControlProblem& p, const ScenarioTree& tree,
    const std::vector<AdaptedProcess>& x, const std::vector<AdaptedProcess>& u,
    const std::vector<AdaptedProcess>& delta_raw) {
  std::vector<StageElement> delta;
  delta.reserve(delta_raw.size());
  for (const auto& dr : delta_raw)
    delta.push_back(StageElement::from_process(tree, dr));
  return solve_right_inverse(p, tree, x, u, delta);
}

struct CostGradient {
  double value = 0.0;
  // Raw per-node L2 Riesz representers: Df(x,u)(z,v) equals the sum of
  // l2_inner pairings below. The x-parts are also given projected onto X_k,
  // which is what pairing against X_k directions sees.
  std::vector<AdaptedProcess> grad_x_raw;  // stages 0..N
  std::vector<AdaptedProcess> grad_u;      // stages 0..N-1
  std::vector<StageElement> grad_x;        // stages 0..N
};

inline CostGradient eval_cost_and_gradient(const ControlProblem& p,
                                           const ScenarioTree& tree,
                                           const std::vector<AdaptedProcess>& x,
                                           const std::vector<AdaptedProcess>& u) {
  check_states(p, tree, x);
  check_controls(p, tree, u);
  CostGradient out;
  for (int k = 0; k < p.horizon; ++k) {
    AdaptedProcess gx = AdaptedProcess::zero(tree, k, p.state_dim);
    AdaptedProcess gu = AdaptedProcess::zero(tree, k, p.control_dim);
    const int begin = tree.stage_begin(k);
    for (int j = 0; j < tree.stage_size(k); ++j) {
      const Eigen::VectorXd xk = x[k].value(j);
      const Eigen::VectorXd uk = u[k].value(j);
      out.value += tree.prob(begin + j) * p.running_cost(k, xk, uk);
      gx.value(j) = p.l_x(k, xk, uk);
      gu.value(j) = p.l_u(k, xk, uk);
    }
    out.grad_x_raw.push_back(std::move(gx));
    out.grad_u.push_back(std::move(gu));
  }
  AdaptedProcess gN = AdaptedProcess::zero(tree, p.horizon, p.state_dim);
  const int begin = tree.stage_begin(p.horizon);
  for (int j = 0; j < tree.stage_size(p.horizon); ++j) {
    out.value += tree.prob(begin + j) * p.terminal_cost(x[p.horizon].value(j));
    gN.value(j) = p.phi_x(x[p.horizon].value(j));
  }
  out.grad_x_raw.push_back(std::move(gN));
  for (const auto& g : out.grad_x_raw)
    out.grad_x.push_back(StageElement::from_process(tree, g));
  return out;
}

// Spot-check of the declared growth and derivative bounds on a sample box;
// returns human-readable warnings (never throws on a violation).
inline std::vector<std::string> verify_growth_bounds(
    const ControlProblem& p, const ScenarioTree& tree, double box_radius,
    int num_points, std::uint64_t seed) {
  p.validate();
  std::vector<std::string> warnings;
  CounterRng rng(seed);
  auto warn = [&](int k, const char* what, double got, double allowed) {
    std::ostringstream os;
    os << "stage " << k << ": " << what << " = " << got
       << " exceeds declared bound " << allowed;
    warnings.push_back(os.str());
  };
  for (int s = 0; s < num_points; ++s) {
    const int k = rng.uniform_int(0, p.horizon - 1);
    const Eigen::VectorXd x = rng.uniform_vector(p.state_dim, -box_radius, box_radius);
    const Eigen::VectorXd u = rng.uniform_vector(p.control_dim, -box_radius, box_radius);
    const double scale = 1.0 + x.norm() + u.norm();
    const Eigen::VectorXd b = p.drift(k, x, u);
    if (b.norm() > p.bound_c1 * scale + 1e-9)
      warn(k, "|b|/(1+|x|+|u|)", b.norm() / scale, p.bound_c1);
    const Eigen::MatrixXd sig = p.diffusion(k, x, u);
    for (int i = 0; i < p.noise_dim; ++i)
      if (sig.col(i).norm() > p.bound_c1 * scale + 1e-9)
        warn(k, "|sigma^i|/(1+|x|+|u|)", sig.col(i).norm() / scale, p.bound_c1);
    // Operator norms for the declared derivative bound; Frobenius recorded
    // alongside since it is the cheaper upper proxy users tend to quote.
    const Eigen::MatrixXd bx = p.b_x(k, x, u);
    const Eigen::MatrixXd bu = p.b_u(k, x, u);
    const double bx_op = bx.jacobiSvd().singularValues()(0);
    const double bu_op = bu.jacobiSvd().singularValues()(0);
    if (bx_op + bu_op > p.bound_c1 + 1e-9) {
      std::ostringstream os;
      os << "stage " << k << ": |b_x|+|b_u| = " << bx_op + bu_op
         << " (operator; Frobenius " << bx.norm() + bu.norm()
         << ") exceeds declared bound " << p.bound_c1;
      warnings.push_back(os.str());
    }
    for (int i = 0; i < p.noise_dim; ++i) {
      const Eigen::MatrixXd sx = p.sigma_x(k, x, u, i);
      const Eigen::MatrixXd su = p.sigma_u(k, x, u, i);
      const double s_op =
          sx.jacobiSvd().singularValues()(0) + su.jacobiSvd().singularValues()(0);
      if (s_op > p.bound_c1 + 1e-9) {
        std::ostringstream os;
        os << "stage " << k << ": |sigma^i_x|+|sigma^i_u| = " << s_op
           << " (operator; Frobenius " << sx.norm() + su.norm()
           << ") exceeds declared bound " << p.bound_c1;
        warnings.push_back(os.str());
      }
    }
    if (p.bound_c2 > 0.0) {
      const double l = std::abs(p.running_cost(k, x, u));
      if (l > p.bound_c2 * scale * scale + 1e-9)
        warn(k, "|l|/(1+|x|+|u|)^2", l / (scale * scale), p.bound_c2);
      const double phi = std::abs(p.terminal_cost(x));
      const double xs = 1.0 + x.norm();
      if (phi > p.bound_c2 * xs * xs + 1e-9)
        warn(k, "|Phi|/(1+|x|)^2", phi / (xs * xs), p.bound_c2);
    }
  }
  (void)tree;
  return warnings;
}

// ---------------------------------------------------------------------------
// Metric bound for the constraint map: the distance from states x to the
// solution set of the shifted system g(., u) = y is bounded by alpha times
// the residual norm. The candidate solution keeps the controls and re-rolls
// the dynamics with the shift folded in, which gives a sound upper bound on
// the true distance.
// ---------------------------------------------------------------------------

struct DynamicsRegularityReport {
  double alpha = 0.0;
  double lhs = 0.0;    // distance bound to the shifted solution set
  double rhs = 0.0;    // residual norm ||g(x, u) - y||
  double ratio = 0.0;  // lhs / (alpha * rhs); 0 when the residual vanishes
  bool pass = true;
};

inline DynamicsRegularityReport check_dynamics_regularity(
    const ControlProblem& p, const ScenarioTree& tree,
    const std::vector<AdaptedProcess>& x, const std::vector<AdaptedProcess>& u,
    const std::vector<StageElement>& y) {
  check_states(p, tree, x);
  check_controls(p, tree, u);
  if (static_cast<int>(y.size()) != p.horizon + 1)
    throw PreconditionError("target needs one element per stage 0..N");
  for (int k = 0; k <= p.horizon; ++k) {
    if (y[k].stage() != k)
      throw PreconditionError("target element has wrong stage");
    if (y[k].dim() != p.state_dim)
      throw PreconditionError("target element has wrong dimension");
  }

  DynamicsRegularityReport rep;
  rep.alpha = dynamics_regularity_constant(p);

  const std::vector<StageElement> res = residual_g(p, tree, x, u);
  double rhs_sq = (res[0].stage0_value() - y[0].stage0_value()).squaredNorm();
  for (int k = 1; k <= p.horizon; ++k) {
    AdaptedProcess diff = res[k].to_process(tree);
    diff -= y[k].to_process(tree);
    const double nk = l2_norm(tree, diff);
    rhs_sq += nk * nk;
  }
  rep.rhs = std::sqrt(rhs_sq);

  // Modified rollout: x'_0 = x0_hat - y_0 and
  // x'_{k+1} = b(x'_k, u_k) + sigma(x'_k, u_k) w_{k+1} - y_{k+1},
  // which solves g(x', u) = y exactly.
  std::vector<AdaptedProcess> xs;
  xs.reserve(p.horizon + 1);
  xs.push_back(AdaptedProcess::constant(tree, 0, p.x0 - y[0].stage0_value()));
  for (int k = 0; k < p.horizon; ++k) {
    AdaptedProcess next = y[k + 1].to_process(tree);
    next *= -1.0;
    const int pbegin = tree.stage_begin(k);
    for (int pj = 0; pj < tree.stage_size(k); ++pj) {
      const int pid = pbegin + pj;
      const Eigen::VectorXd b = p.drift(k, xs[k].value(pj), u[k].value(pj));
      const Eigen::MatrixXd sig =
          p.diffusion(k, xs[k].value(pj), u[k].value(pj));
      const int cb = tree.child_begin(pid);
      for (int c = 0; c < tree.child_count(pid); ++c) {
        const int id = cb + c;
        next.value(tree.local_index(id, k + 1)) += b + sig * tree.noise(id);
      }
    }
    xs.push_back(std::move(next));
  }

  double lhs_sq = 0.0;
  for (int k = 0; k <= p.horizon; ++k) {
    AdaptedProcess diff = x[k];
    diff -= xs[k];
    const double nk = l2_norm(tree, diff);
    lhs_sq += nk * nk;
  }
  rep.lhs = std::sqrt(lhs_sq);
  rep.ratio = rep.rhs > 0.0 ? rep.lhs / (rep.alpha * rep.rhs) : 0.0;
  rep.pass = rep.lhs <= rep.alpha * rep.rhs * (1.0 + 1e-12) + 1e-12;
  return rep;
}

}  // namespace scotkit
