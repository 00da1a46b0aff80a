// In-code problem builders shared by the test binaries.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "scotkit/discrete_control.hpp"
#include "scotkit/prob_tree.hpp"
#include "scotkit/rng.hpp"

#include "oracles.hpp"

namespace testprob {

using namespace scotkit;

// Scalar linear dynamics with one multiplicative noise column and quadratic
// costs; mirrors the smallest fixture.
inline ControlProblem lq_scalar(double a = 0.9, double b = 1.0, double s = 0.2,
                                double q = 1.0, double r = 0.5, double qf = 1.0,
                                double x0 = 1.0, int horizon = 2) {
  ControlProblem p;
  p.horizon = horizon;
  p.state_dim = 1;
  p.control_dim = 1;
  p.noise_dim = 1;
  p.x0 = Eigen::VectorXd::Constant(1, x0);
  p.drift = [a, b](int, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return Eigen::VectorXd::Constant(1, a * x(0) + b * u(0)).eval();
  };
  p.diffusion = [s](int, const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, s * x(0)).eval();
  };
  p.drift_jac_x = [a](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, a).eval();
  };
  p.drift_jac_u = [b](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Constant(1, 1, b).eval();
  };
  p.diffusion_jac_x = [s](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                          int) {
    return Eigen::MatrixXd::Constant(1, 1, s).eval();
  };
  p.diffusion_jac_u = [](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                         int) { return Eigen::MatrixXd::Zero(1, 1).eval(); };
  p.running_cost = [q, r](int, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
    return q * x(0) * x(0) + r * u(0) * u(0);
  };
  p.running_cost_grad_x = [q](int, const Eigen::VectorXd& x,
                              const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, 2.0 * q * x(0)).eval();
  };
  p.running_cost_grad_u = [r](int, const Eigen::VectorXd&,
                              const Eigen::VectorXd& u) {
    return Eigen::VectorXd::Constant(1, 2.0 * r * u(0)).eval();
  };
  p.terminal_cost = [qf](const Eigen::VectorXd& x) { return qf * x(0) * x(0); };
  p.terminal_cost_grad = [qf](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Constant(1, 2.0 * qf * x(0)).eval();
  };
  p.bound_c1 = std::max({std::abs(a) + std::abs(b), std::abs(s), 1.0});
  p.bound_c2 = std::max({q, r, qf, 1.0});
  return p;
}

inline oracles::DenseLqData lq_scalar_data(double a = 0.9, double b = 1.0,
                                           double s = 0.2, double q = 1.0,
                                           double r = 0.5, double qf = 1.0,
                                           double x0 = 1.0) {
  oracles::DenseLqData d;
  d.A = Eigen::MatrixXd::Constant(1, 1, a);
  d.B = Eigen::MatrixXd::Constant(1, 1, b);
  d.S = {Eigen::MatrixXd::Constant(1, 1, s)};
  d.Q = Eigen::MatrixXd::Constant(1, 1, q);
  d.R = Eigen::MatrixXd::Constant(1, 1, r);
  d.Qf = Eigen::MatrixXd::Constant(1, 1, qf);
  d.x0 = Eigen::VectorXd::Constant(1, x0);
  return d;
}

// Random bounded-slope instance: linear part plus a tanh drift term and a
// sin diffusion term, quadratic costs with random SPD weights.
inline ControlProblem random_smooth(int horizon, int n, int m, int d,
                                    CounterRng rng) {
  auto randmat = [&rng](int rows, int cols, double scale) {
    Eigen::MatrixXd out(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) out(r, c) = scale * rng.normal();
    return out;
  };
  const Eigen::MatrixXd A = randmat(n, n, 0.4);
  const Eigen::MatrixXd B = randmat(n, m, 0.4);
  std::vector<Eigen::MatrixXd> S;
  for (int i = 0; i < d; ++i) S.push_back(randmat(n, n, 0.2));
  const double ts = 0.1 + 0.2 * rng.uniform();
  const Eigen::MatrixXd Qh = randmat(n, n, 1.0);
  const Eigen::MatrixXd Q =
      0.5 * (Qh * Qh.transpose()) + Eigen::MatrixXd::Identity(n, n) * 0.1;
  const Eigen::MatrixXd Rh = randmat(m, m, 1.0);
  const Eigen::MatrixXd R =
      0.5 * (Rh * Rh.transpose()) + Eigen::MatrixXd::Identity(m, m) * 0.1;
  const Eigen::MatrixXd Qf = 2.0 * Q;

  ControlProblem p;
  p.horizon = horizon;
  p.state_dim = n;
  p.control_dim = m;
  p.noise_dim = d;
  p.x0 = rng.normal_vector(n);
  p.drift = [A, B, ts](int, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return (A * x + B * u + ts * x.array().tanh().matrix()).eval();
  };
  p.drift_jac_x = [A, ts](int, const Eigen::VectorXd& x,
                          const Eigen::VectorXd&) {
    const Eigen::ArrayXd th = x.array().tanh();
    return (A + ((ts * (1.0 - th * th)).matrix()).asDiagonal().toDenseMatrix())
        .eval();
  };
  p.drift_jac_u = [B](int, const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return B;
  };
  p.diffusion = [S, n, d](int, const Eigen::VectorXd& x,
                          const Eigen::VectorXd&) {
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < d; ++i) out.col(i) = S[i] * x;
    return out;
  };
  p.diffusion_jac_x = [S](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                          int i) { return S[i]; };
  p.diffusion_jac_u = [n, m](int, const Eigen::VectorXd&,
                             const Eigen::VectorXd&, int) {
    return Eigen::MatrixXd::Zero(n, m).eval();
  };
  p.running_cost = [Q, R](int, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
    return x.dot(Q * x) + u.dot(R * u);
  };
  p.running_cost_grad_x = [Q](int, const Eigen::VectorXd& x,
                              const Eigen::VectorXd&) {
    return ((Q + Q.transpose()) * x).eval();
  };
  p.running_cost_grad_u = [R](int, const Eigen::VectorXd&,
                              const Eigen::VectorXd& u) {
    return ((R + R.transpose()) * u).eval();
  };
  p.terminal_cost = [Qf](const Eigen::VectorXd& x) { return x.dot(Qf * x); };
  p.terminal_cost_grad = [Qf](const Eigen::VectorXd& x) {
    return ((Qf + Qf.transpose()) * x).eval();
  };

  double smax = 0.0;
  for (const auto& si : S)
    smax = std::max(smax, si.jacobiSvd().singularValues()(0));
  p.bound_c1 = std::max({A.jacobiSvd().singularValues()(0) + ts +
                             B.jacobiSvd().singularValues()(0),
                         smax, 1.0});
  p.bound_c2 = std::max({Q.jacobiSvd().singularValues()(0),
                         R.jacobiSvd().singularValues()(0),
                         Qf.jacobiSvd().singularValues()(0), 1.0});
  return p;
}

inline std::vector<AdaptedProcess> random_controls(const ControlProblem& p,
                                                   const ScenarioTree& tree,
                                                   CounterRng rng,
                                                   double scale = 0.3) {
  std::vector<AdaptedProcess> u;
  for (int k = 0; k < p.horizon; ++k) {
    AdaptedProcess uk = AdaptedProcess::zero(tree, k, p.control_dim);
    for (int j = 0; j < uk.count(); ++j)
      uk.value(j) = scale * rng.normal_vector(p.control_dim);
    u.push_back(std::move(uk));
  }
  return u;
}

}  // namespace testprob
