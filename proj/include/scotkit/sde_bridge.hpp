#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scotkit/adjoint_pmp.hpp"
#include "scotkit/catalog.hpp"
#include "scotkit/discrete_control.hpp"
#include "scotkit/errors.hpp"
#include "scotkit/prob_tree.hpp"

namespace scotkit {

// Continuous-time control problem on [0, T]:
//   dx = b(t, x, u) dt + sigma(t, x, u) dW,  x(0) = x0,
//   J  = E[ integral of l(t, x, u) dt + Phi(x(T)) ].
// Only the Euler discretization below is ever solved; reports built from it
// describe the discretized analogue, not the continuous object itself.
struct SdeProblem {
  double T = 1.0;
  int state_dim = 0;
  int control_dim = 0;
  int noise_dim = 0;
  Eigen::VectorXd x0;

  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      drift;
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      diffusion;  // n x d
  std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>
      running_cost;
  std::function<double(const Eigen::VectorXd&)> terminal_cost;

  // Optional analytic first derivatives; finite differences otherwise.
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      drift_jac_x, drift_jac_u;
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&, int)>
      diffusion_jac_x, diffusion_jac_u;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      running_grad_x, running_grad_u;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_grad;

  double bound_c1 = 0.0;
  double bound_c2 = 0.0;
  std::optional<ControlSet> control_set;
  std::optional<CatalogSet> initial_set;
  bool allow_fd_derivatives = true;

  void validate() const {
    if (T <= 0.0) throw InputError("horizon T must be positive");
    if (state_dim < 1 || control_dim < 1 || noise_dim < 1)
      throw InputError("dimensions must be positive");
    if (static_cast<int>(x0.size()) != state_dim)
      throw InputError("x0 has wrong dimension");
    if (!drift || !diffusion || !running_cost || !terminal_cost)
      throw InputError("dynamics and cost callbacks are required");
    if (bound_c1 <= 0.0) throw InputError("bound_c1 must be positive");
  }
};

// Euler discretization on the Rademacher tree:
//   b_D(k, x, u) = x + h b(kh, x, u),   sigma_D = sqrt(h) sigma(kh, x, u),
//   l_D = h l,   Phi_D = Phi,   h = T / steps.
// The +-1 increments have mean 0 and variance 1 per coordinate, so one tree
// stage carries one Euler step of covariance h.
struct Bridge {
  ControlProblem problem;
  ScenarioTree tree;
  double h = 0.0;
  int steps = 0;
};

inline Bridge discretize(const SdeProblem& sp, int steps,
                         int node_budget = ScenarioTree::kDefaultNodeBudget) {
  sp.validate();
  if (steps < 1) throw InputError("need at least one Euler step");
  const double h = sp.T / steps;
  const double rh = std::sqrt(h);

  Bridge br;
  br.h = h;
  br.steps = steps;
  br.tree = build_tree(rademacher_noise(steps, sp.noise_dim), node_budget);

  ControlProblem& p = br.problem;
  p.horizon = steps;
  p.state_dim = sp.state_dim;
  p.control_dim = sp.control_dim;
  p.noise_dim = sp.noise_dim;
  p.x0 = sp.x0;
  p.control_set = sp.control_set;
  p.initial_set = sp.initial_set;
  p.allow_fd_derivatives = sp.allow_fd_derivatives;
  p.bound_c1 = std::max(1.0 + 2.0 * h * sp.bound_c1, rh * sp.bound_c1);
  p.bound_c2 = sp.bound_c2;

  const SdeProblem c = sp;  // keep callbacks alive inside the closures
  p.drift = [c, h](int k, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return x + h * c.drift(k * h, x, u);
  };
  p.diffusion = [c, h, rh](int k, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) -> Eigen::MatrixXd {
    return rh * c.diffusion(k * h, x, u);
  };
  p.running_cost = [c, h](int k, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
    return h * c.running_cost(k * h, x, u);
  };
  p.terminal_cost = [c](const Eigen::VectorXd& x) { return c.terminal_cost(x); };
  if (c.drift_jac_x)
    p.drift_jac_x = [c, h](int k, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) -> Eigen::MatrixXd {
      return Eigen::MatrixXd::Identity(c.state_dim, c.state_dim) +
             h * c.drift_jac_x(k * h, x, u);
    };
  if (c.drift_jac_u)
    p.drift_jac_u = [c, h](int k, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) -> Eigen::MatrixXd {
      return h * c.drift_jac_u(k * h, x, u);
    };
  if (c.diffusion_jac_x)
    p.diffusion_jac_x = [c, h, rh](int k, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u,
                                   int i) -> Eigen::MatrixXd {
      return rh * c.diffusion_jac_x(k * h, x, u, i);
    };
  if (c.diffusion_jac_u)
    p.diffusion_jac_u = [c, h, rh](int k, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u,
                                   int i) -> Eigen::MatrixXd {
      return rh * c.diffusion_jac_u(k * h, x, u, i);
    };
  if (c.running_grad_x)
    p.running_cost_grad_x = [c, h](int k, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) -> Eigen::VectorXd {
      return h * c.running_grad_x(k * h, x, u);
    };
  if (c.running_grad_u)
    p.running_cost_grad_u = [c, h](int k, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) -> Eigen::VectorXd {
      return h * c.running_grad_u(k * h, x, u);
    };
  if (c.terminal_grad)
    p.terminal_cost_grad = [c](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return c.terminal_grad(x);
    };
  p.validate();
  return br;
}

// ---------------------------------------------------------------------------
// Path moment bound. The second-moment growth estimate for the continuous
// problem carries the explicit constant
//   c = max{24, 6T} * exp(6 T c1^2 max{T, 4d});
// the discretized analogue is checked exactly: the left side enumerates every
// scenario path, the integrals on the right use the same Euler grid.
// ---------------------------------------------------------------------------

struct MomentBoundReport {
  double expected_max_sq = 0.0;  // E max_k |x_k|^2, exact on the tree
  double constant = 0.0;
  double zero_state_terms = 0.0;  // |x0|^2 + sum h E(|b(t,0,u)|^2 + |s(t,0,u)|^2)
  double bound = 0.0;
  bool pass = true;
};

inline double moment_bound_constant(double T, double c1, int noise_dim) {
  return std::max(24.0, 6.0 * T) *
         std::exp(6.0 * T * c1 * c1 * std::max(T, 4.0 * noise_dim));
}

inline MomentBoundReport verify_moment_bound(
    const SdeProblem& sp, const Bridge& br,
    const std::vector<AdaptedProcess>& u) {
  const ScenarioTree& tree = br.tree;
  const TrajectoryPair traj = rollout(br.problem, tree, u);

  MomentBoundReport rep;
  const int N = br.steps;
  const int leaf_begin = tree.stage_begin(N);
  for (int j = 0; j < tree.stage_size(N); ++j) {
    const int leaf = leaf_begin + j;
    double path_max = 0.0;
    int id = leaf;
    for (int k = N; k >= 0; --k) {
      path_max = std::max(
          path_max, traj.x[k].value(tree.local_index(id, k)).squaredNorm());
      id = tree.parent(id);
    }
    rep.expected_max_sq += tree.prob(leaf) * path_max;
  }

  rep.constant = moment_bound_constant(sp.T, sp.bound_c1, sp.noise_dim);
  double terms = sp.x0.squaredNorm();
  const Eigen::VectorXd zero_x = Eigen::VectorXd::Zero(sp.state_dim);
  for (int k = 0; k < N; ++k) {
    double eb = 0.0, es = 0.0;
    const int begin = tree.stage_begin(k);
    for (int j = 0; j < tree.stage_size(k); ++j) {
      const double pr = tree.prob(begin + j);
      const Eigen::VectorXd uk = u[k].value(j);
      eb += pr * sp.drift(k * br.h, zero_x, uk).squaredNorm();
      es += pr * sp.diffusion(k * br.h, zero_x, uk).squaredNorm();
    }
    terms += br.h * (eb + es);
  }
  rep.zero_state_terms = terms;
  rep.bound = rep.constant * terms;
  rep.pass = rep.expected_max_sq <= rep.bound * (1.0 + 1e-12);
  return rep;
}

// ---------------------------------------------------------------------------
// Weak maximum principle on the discretization. Everything reported is the
// discretized analogue of the continuous statement; the adjoint second
// component is rescaled as q(t_k) := q_k / sqrt(h) so that constant-diffusion
// problems can be read against continuous-time references directly.
// ---------------------------------------------------------------------------

struct WeakPmpReport {
  KKTReport kkt;
  AdjointPair adjoint;                    // discrete-scale pair
  std::vector<std::vector<AdaptedProcess>> q_scaled;  // q[k][i] / sqrt(h)
  double h = 0.0;
  std::string convention =
      "discretized analogue; q(t_k) reported as q_k / sqrt(h)";
};

inline WeakPmpReport weak_pmp_check(const Bridge& br,
                                    const std::vector<AdaptedProcess>& u) {
  WeakPmpReport rep;
  rep.h = br.h;
  const TrajectoryPair traj = rollout(br.problem, br.tree, u);
  rep.adjoint = backward_adjoint(br.problem, br.tree, traj.x, traj.u);
  rep.kkt = kkt_residual(br.problem, br.tree, u);
  rep.q_scaled = rep.adjoint.q;
  const double scale = 1.0 / std::sqrt(br.h);
  for (auto& stage : rep.q_scaled)
    for (auto& qi : stage) qi *= scale;
  return rep;
}

// ---------------------------------------------------------------------------
// Scalar linear-quadratic instance with constant coefficients:
//   dx = (a x + b u) dt + sigma0 dW,   J = E int (q x^2 + r u^2) dt + qf x(T)^2.
// Used by fixtures and by convergence studies against the Riccati equation.
// ---------------------------------------------------------------------------

struct ScalarLq {
  double a = 0.0, b = 1.0;
  double q = 1.0, r = 1.0, qf = 0.0;
  double sigma0 = 0.0;
  double T = 1.0;
  double x0 = 1.0;
};

inline SdeProblem make_scalar_lq(const ScalarLq& d) {
  SdeProblem sp;
  sp.T = d.T;
  sp.state_dim = sp.control_dim = sp.noise_dim = 1;
  sp.x0 = Eigen::VectorXd::Constant(1, d.x0);
  sp.drift = [d](double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return Eigen::VectorXd::Constant(1, d.a * x(0) + d.b * u(0));
  };
  sp.diffusion = [d](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, d.sigma0);
  };
  sp.running_cost = [d](double, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u) {
    return d.q * x(0) * x(0) + d.r * u(0) * u(0);
  };
  sp.terminal_cost = [d](const Eigen::VectorXd& x) {
    return d.qf * x(0) * x(0);
  };
  sp.drift_jac_x = [d](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, d.a);
  };
  sp.drift_jac_u = [d](double, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, d.b);
  };
  sp.diffusion_jac_x = [](double, const Eigen::VectorXd&,
                          const Eigen::VectorXd&, int) {
    return Eigen::MatrixXd::Zero(1, 1);
  };
  sp.diffusion_jac_u = [](double, const Eigen::VectorXd&,
                          const Eigen::VectorXd&, int) {
    return Eigen::MatrixXd::Zero(1, 1);
  };
  sp.running_grad_x = [d](double, const Eigen::VectorXd& x,
                          const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, 2.0 * d.q * x(0));
  };
  sp.running_grad_u = [d](double, const Eigen::VectorXd&,
                          const Eigen::VectorXd& u) {
    return Eigen::VectorXd::Constant(1, 2.0 * d.r * u(0));
  };
  sp.terminal_grad = [d](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, 2.0 * d.qf * x(0));
  };
  sp.bound_c1 = std::max({std::abs(d.a) + std::abs(d.b), std::abs(d.sigma0),
                          1.0});
  sp.bound_c2 = std::max({d.q, d.r, d.qf, 1.0});
  sp.control_set = ControlSet::whole(1);
  return sp;
}

// Time-integrated L2 norm of a control-shaped deviation on the tree,
// sqrt( sum_k h E|v_k|^2 ): the discrete analogue of the L2(0,T) norm used
// when comparing across grids of different step counts.
inline double bridge_l2_norm(const Bridge& br,
                             const std::vector<AdaptedProcess>& v) {
  double acc = 0.0;
  for (int k = 0; k < br.steps; ++k) {
    const double nk = l2_norm(br.tree, v[k]);
    acc += br.h * nk * nk;
  }
  return std::sqrt(acc);
}

}  // namespace scotkit
