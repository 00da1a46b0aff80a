#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "scotkit/catalog.hpp"
#include "scotkit/discrete_control.hpp"
#include "scotkit/errors.hpp"
#include "scotkit/prob_tree.hpp"
#include "scotkit/regularity_lab.hpp"
#include "scotkit/rng.hpp"
#include "scotkit/sde_bridge.hpp"

namespace scotkit {

// JSON problem files. Schema: a version tag, a kind selecting the module
// family, and flat numeric parameters; matrices are row-major nested arrays.
// Every rejection names the offending field.

namespace pf_detail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& field, const std::string& what) {
  throw InputError("problem file: field '" + field + "': " + what);
}

inline const json& need(const json& j, const std::string& field) {
  if (!j.contains(field)) fail(field, "missing");
  return j.at(field);
}

inline double num(const json& j, const std::string& field) {
  const json& v = need(j, field);
  if (!v.is_number()) fail(field, "expected a number");
  return v.get<double>();
}

inline double num_or(const json& j, const std::string& field, double fallback) {
  if (!j.contains(field)) return fallback;
  if (!j.at(field).is_number()) fail(field, "expected a number");
  return j.at(field).get<double>();
}

inline int integer(const json& j, const std::string& field) {
  const json& v = need(j, field);
  if (!v.is_number_integer()) fail(field, "expected an integer");
  return v.get<int>();
}

inline int integer_or(const json& j, const std::string& field, int fallback) {
  if (!j.contains(field)) return fallback;
  if (!j.at(field).is_number_integer()) fail(field, "expected an integer");
  return j.at(field).get<int>();
}

inline std::string str(const json& j, const std::string& field) {
  const json& v = need(j, field);
  if (!v.is_string()) fail(field, "expected a string");
  return v.get<std::string>();
}

inline Eigen::VectorXd vec(const json& j, const std::string& field,
                           int expected = -1) {
  const json& v = need(j, field);
  if (!v.is_array()) fail(field, "expected an array of numbers");
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      fail(field + "[" + std::to_string(i) + "]", "expected a number");
    out(static_cast<int>(i)) = v[i].get<double>();
  }
  if (expected >= 0 && out.size() != expected)
    fail(field, "expected length " + std::to_string(expected) + ", got " +
                    std::to_string(out.size()));
  return out;
}

inline Eigen::MatrixXd mat(const json& j, const std::string& field, int rows,
                           int cols) {
  const json& v = need(j, field);
  if (!v.is_array() || v.empty() || !v[0].is_array())
    fail(field, "expected a row-major nested array");
  const int r = static_cast<int>(v.size());
  const int c = static_cast<int>(v[0].size());
  Eigen::MatrixXd out(r, c);
  for (int i = 0; i < r; ++i) {
    if (!v[i].is_array() || static_cast<int>(v[i].size()) != c)
      fail(field + "[" + std::to_string(i) + "]", "ragged matrix row");
    for (int k = 0; k < c; ++k) {
      if (!v[i][k].is_number())
        fail(field + "[" + std::to_string(i) + "][" + std::to_string(k) + "]",
             "expected a number");
      out(i, k) = v[i][k].get<double>();
    }
  }
  if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols))
    fail(field, "expected shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", got " + std::to_string(r) + "x" +
                    std::to_string(c));
  return out;
}

inline double op_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return m.jacobiSvd().singularValues()(0);
}

}  // namespace pf_detail

// Catalog set descriptor: {"type": ..., ...}. Composable through "union"
// and "product".
inline CatalogSet parse_catalog_set(const nlohmann::json& j,
                                    const std::string& field) {
  using namespace pf_detail;
  if (!j.is_object()) fail(field, "expected a set descriptor object");
  const std::string type = str(j, "type");
  if (type == "whole") return CatalogSet::whole(integer(j, "dim"));
  if (type == "box") {
    const Eigen::VectorXd lo = vec(j, "lo");
    return CatalogSet::box(lo, vec(j, "hi", static_cast<int>(lo.size())));
  }
  if (type == "affine") {
    const Eigen::VectorXd base = vec(j, "base");
    if (!j.contains("basis")) return CatalogSet::point(base);
    return CatalogSet::affine(
        base, mat(j, "basis", static_cast<int>(base.size()), -1));
  }
  if (type == "point") return CatalogSet::point(vec(j, "at"));
  if (type == "ball") return CatalogSet::ball(vec(j, "center"), num(j, "radius"));
  if (type == "sphere")
    return CatalogSet::sphere(vec(j, "center"), num(j, "radius"));
  if (type == "arc")
    return CatalogSet::arc(vec(j, "center", 2), num(j, "radius"),
                           num(j, "theta_min"), num(j, "theta_max"));
  if (type == "line")
    return CatalogSet::line(vec(j, "through"), vec(j, "direction"));
  if (type == "union" || type == "product") {
    const nlohmann::json& m = need(j, "members");
    if (!m.is_array() || m.empty()) fail(field + ".members", "expected a nonempty array");
    std::vector<CatalogSet> members;
    for (std::size_t i = 0; i < m.size(); ++i)
      members.push_back(
          parse_catalog_set(m[i], field + ".members[" + std::to_string(i) + "]"));
    return type == "union" ? CatalogSet::union_of(std::move(members))
                           : CatalogSet::product_of(std::move(members));
  }
  fail(field + ".type", "unknown set type '" + type + "'");
}

struct ProblemFile {
  int version = 1;
  std::string kind;    // discrete | sde | regularity
  std::string family;  // linear_quadratic | catalog_nonlinear | lq_sde |
                       // catalog_nonlinear_sde | identity | linear | brokate
  std::uint64_t seed = 0;
  std::optional<double> tol;
  std::optional<int> max_iter;
  nlohmann::json params;
  std::string digest = "-";
};

inline ProblemFile parse_problem(const nlohmann::json& j) {
  using namespace pf_detail;
  if (!j.is_object()) throw InputError("problem file: expected a JSON object");
  ProblemFile pf;
  pf.version = integer(j, "version");
  if (pf.version != 1)
    fail("version", "unsupported version " + std::to_string(pf.version));
  pf.kind = str(j, "kind");
  if (pf.kind != "discrete" && pf.kind != "sde" && pf.kind != "regularity")
    fail("kind", "expected discrete, sde or regularity, got '" + pf.kind + "'");
  pf.family = str(j, "family");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer()) fail("seed", "expected an integer");
    pf.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    if (!t.is_object()) fail("tolerances", "expected an object");
    if (t.contains("tol")) pf.tol = num(t, "tol");
    if (t.contains("max_iter")) pf.max_iter = integer(t, "max_iter");
  }
  pf.params = j;
  return pf;
}

inline ProblemFile load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open problem file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("problem file: invalid JSON: ") + e.what());
  }
  ProblemFile pf = parse_problem(j);
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(text);
  pf.digest = hex.str();
  return pf;
}

namespace pf_detail {

inline NoiseSpec parse_noise(const json& j, int horizon, int dim) {
  if (!j.contains("noise")) return rademacher_noise(horizon, dim);
  const json& n = j.at("noise");
  if (!n.is_object()) fail("noise", "expected an object");
  const std::string type = str(n, "type");
  if (type == "rademacher") return rademacher_noise(horizon, dim);
  if (type == "support") {
    const json& sup = need(n, "support");
    if (!sup.is_array() || static_cast<int>(sup.size()) != dim)
      fail("noise.support", "expected one entry per noise coordinate");
    NoiseSpec spec;
    spec.horizon = horizon;
    spec.dim = dim;
    spec.support.resize(dim);
    for (int i = 0; i < dim; ++i) {
      const json& coord = sup[i];
      const std::string fld = "noise.support[" + std::to_string(i) + "]";
      if (!coord.is_array() || coord.empty())
        fail(fld, "expected an array of [value, prob] pairs");
      for (std::size_t s = 0; s < coord.size(); ++s) {
        if (!coord[s].is_array() || coord[s].size() != 2 ||
            !coord[s][0].is_number() || !coord[s][1].is_number())
          fail(fld + "[" + std::to_string(s) + "]", "expected [value, prob]");
        spec.support[i].push_back(
            SupportPoint{coord[s][0].get<double>(), coord[s][1].get<double>()});
      }
    }
    spec.validate();
    return spec;
  }
  fail("noise.type", "unknown noise type '" + type + "'");
}

inline ControlSet parse_control_set(const json& j, int control_dim) {
  if (!j.contains("control_set")) return ControlSet::whole(control_dim);
  const json& c = j.at("control_set");
  const std::string type = str(c, "type");
  if (type == "whole") return ControlSet::whole(control_dim);
  if (type == "box")
    return ControlSet::box(vec(c, "lo", control_dim), vec(c, "hi", control_dim));
  if (type == "ball")
    return ControlSet::ball(vec(c, "center", control_dim), num(c, "radius"));
  fail("control_set.type", "unknown control set type '" + type + "'");
}

}  // namespace pf_detail

// Discrete-kind instance: dynamics b = A x + B u (+ tanh/sin terms for the
// nonlinear family), one constant matrix per noise column, quadratic costs.
struct DiscreteInstance {
  ControlProblem problem;
  ScenarioTree tree;
};

inline DiscreteInstance make_discrete(const ProblemFile& pf,
                                      int node_budget =
                                          ScenarioTree::kDefaultNodeBudget) {
  using namespace pf_detail;
  if (pf.kind != "discrete")
    throw InputError("problem file kind '" + pf.kind +
                     "' where a discrete problem is required");
  const json& j = pf.params;
  const int N = integer(j, "horizon");
  const int n = integer(j, "state_dim");
  const int m = integer(j, "control_dim");
  const int d = integer(j, "noise_dim");
  if (N < 1 || n < 1 || m < 1 || d < 1)
    fail("horizon/state_dim/control_dim/noise_dim", "must be positive");

  const Eigen::MatrixXd A = mat(j, "A", n, n);
  const Eigen::MatrixXd B = mat(j, "B", n, m);
  const json& sj = need(j, "sigma");
  if (!sj.is_array() || static_cast<int>(sj.size()) != d)
    fail("sigma", "expected one n x n matrix per noise coordinate");
  std::vector<Eigen::MatrixXd> S;
  for (int i = 0; i < d; ++i) {
    if (!sj[i].is_array()) fail("sigma[" + std::to_string(i) + "]", "expected a matrix");
    nlohmann::json wrap = nlohmann::json::object();
    wrap["m"] = sj[i];
    S.push_back(mat(wrap, "m", n, n));
  }
  const Eigen::MatrixXd Q = mat(j, "Q", n, n);
  const Eigen::MatrixXd R = mat(j, "R", m, m);
  const Eigen::MatrixXd Qf = mat(j, "Qf", n, n);
  const Eigen::VectorXd x0 = vec(j, "x0", n);

  double tanh_scale = 0.0, sin_scale = 0.0;
  if (pf.family == "catalog_nonlinear") {
    tanh_scale = num_or(j, "tanh_scale", 0.5);
    sin_scale = num_or(j, "sin_scale", 0.25);
  } else if (pf.family != "linear_quadratic") {
    fail("family", "unknown discrete family '" + pf.family + "'");
  }

  DiscreteInstance inst;
  inst.tree = build_tree(parse_noise(j, N, d), node_budget);
  ControlProblem& p = inst.problem;
  p.horizon = N;
  p.state_dim = n;
  p.control_dim = m;
  p.noise_dim = d;
  p.x0 = x0;
  p.control_set = parse_control_set(j, m);
  if (j.contains("initial_set"))
    p.initial_set = parse_catalog_set(j.at("initial_set"), "initial_set");

  const double ts = tanh_scale, ss = sin_scale;
  p.drift = [A, B, ts](int, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) -> Eigen::VectorXd {
    Eigen::VectorXd out = A * x + B * u;
    if (ts != 0.0) out += ts * x.array().tanh().matrix();
    return out;
  };
  p.drift_jac_x = [A, ts](int, const Eigen::VectorXd& x,
                          const Eigen::VectorXd&) -> Eigen::MatrixXd {
    Eigen::MatrixXd out = A;
    if (ts != 0.0) {
      const Eigen::ArrayXd th = x.array().tanh();
      out += (ts * (1.0 - th * th)).matrix().asDiagonal();
    }
    return out;
  };
  p.drift_jac_u = [B](int, const Eigen::VectorXd&,
                      const Eigen::VectorXd&) -> Eigen::MatrixXd { return B; };
  p.diffusion = [S, ss, n, d](int, const Eigen::VectorXd& x,
                              const Eigen::VectorXd&) -> Eigen::MatrixXd {
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < d; ++i) {
      out.col(i) = S[i] * x;
      if (ss != 0.0) out.col(i) += ss * x.array().sin().matrix();
    }
    return out;
  };
  p.diffusion_jac_x = [S, ss](int, const Eigen::VectorXd& x,
                              const Eigen::VectorXd&, int i) -> Eigen::MatrixXd {
    Eigen::MatrixXd out = S[i];
    if (ss != 0.0)
      out += (ss * x.array().cos()).matrix().asDiagonal();
    return out;
  };
  p.diffusion_jac_u = [n, m](int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                             int) -> Eigen::MatrixXd {
    return Eigen::MatrixXd::Zero(n, m);
  };
  p.running_cost = [Q, R](int, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
    return x.dot(Q * x) + u.dot(R * u);
  };
  p.running_cost_grad_x = [Q](int, const Eigen::VectorXd& x,
                              const Eigen::VectorXd&) -> Eigen::VectorXd {
    return (Q + Q.transpose()) * x;
  };
  p.running_cost_grad_u = [R](int, const Eigen::VectorXd&,
                              const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return (R + R.transpose()) * u;
  };
  p.terminal_cost = [Qf](const Eigen::VectorXd& x) { return x.dot(Qf * x); };
  p.terminal_cost_grad = [Qf](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return (Qf + Qf.transpose()) * x;
  };

  double sig_slope = 0.0;
  for (const auto& si : S) sig_slope = std::max(sig_slope, op_norm(si) + ss);
  p.bound_c1 = std::max({op_norm(A) + ts + op_norm(B), sig_slope,
                         num_or(j, "bound_c1", 0.0), 1.0});
  p.bound_c2 = std::max({op_norm(Q), op_norm(R), op_norm(Qf), 1.0});
  p.validate();
  return inst;
}

// Sde-kind instance: continuous coefficients of the same two families, Euler
// step count under "steps".
struct SdeInstance {
  SdeProblem problem;
  int steps = 0;
};

inline SdeInstance make_sde(const ProblemFile& pf) {
  using namespace pf_detail;
  if (pf.kind != "sde")
    throw InputError("problem file kind '" + pf.kind +
                     "' where an sde problem is required");
  const json& j = pf.params;
  SdeInstance inst;
  inst.steps = integer(j, "steps");
  if (inst.steps < 1) fail("steps", "must be positive");

  if (pf.family == "lq_sde") {
    ScalarLq lq;
    lq.a = num(j, "a");
    lq.b = num(j, "b");
    lq.q = num(j, "q");
    lq.r = num(j, "r");
    lq.qf = num(j, "qf");
    lq.sigma0 = num(j, "sigma0");
    lq.T = num(j, "T");
    lq.x0 = num(j, "x0");
    if (lq.T <= 0.0) fail("T", "must be positive");
    if (lq.r <= 0.0) fail("r", "must be positive");
    inst.problem = make_scalar_lq(lq);
    if (j.contains("control_set"))
      inst.problem.control_set = parse_control_set(j, 1);
    return inst;
  }
  if (pf.family != "catalog_nonlinear_sde")
    fail("family", "unknown sde family '" + pf.family + "'");

  const int n = integer(j, "state_dim");
  const int m = integer(j, "control_dim");
  const int d = integer(j, "noise_dim");
  const Eigen::MatrixXd A = mat(j, "A", n, n);
  const Eigen::MatrixXd B = mat(j, "B", n, m);
  const double ts = num_or(j, "tanh_scale", 0.5);
  const Eigen::MatrixXd S0 = mat(j, "sigma0", n, d);
  const Eigen::MatrixXd Q = mat(j, "Q", n, n);
  const Eigen::MatrixXd R = mat(j, "R", m, m);
  const Eigen::MatrixXd Qf = mat(j, "Qf", n, n);

  SdeProblem& sp = inst.problem;
  sp.T = num(j, "T");
  if (sp.T <= 0.0) fail("T", "must be positive");
  sp.state_dim = n;
  sp.control_dim = m;
  sp.noise_dim = d;
  sp.x0 = vec(j, "x0", n);
  sp.drift = [A, B, ts](double, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return A * x + B * u + ts * x.array().tanh().matrix();
  };
  sp.drift_jac_x = [A, ts](double, const Eigen::VectorXd& x,
                           const Eigen::VectorXd&) -> Eigen::MatrixXd {
    const Eigen::ArrayXd th = x.array().tanh();
    return A + Eigen::MatrixXd((ts * (1.0 - th * th)).matrix().asDiagonal());
  };
  sp.drift_jac_u = [B](double, const Eigen::VectorXd&,
                       const Eigen::VectorXd&) -> Eigen::MatrixXd { return B; };
  sp.diffusion = [S0](double, const Eigen::VectorXd&,
                      const Eigen::VectorXd&) -> Eigen::MatrixXd { return S0; };
  sp.diffusion_jac_x = [n](double, const Eigen::VectorXd&,
                           const Eigen::VectorXd&, int) -> Eigen::MatrixXd {
    return Eigen::MatrixXd::Zero(n, n);
  };
  sp.diffusion_jac_u = [n, m](double, const Eigen::VectorXd&,
                              const Eigen::VectorXd&, int) -> Eigen::MatrixXd {
    return Eigen::MatrixXd::Zero(n, m);
  };
  sp.running_cost = [Q, R](double, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) {
    return x.dot(Q * x) + u.dot(R * u);
  };
  sp.running_grad_x = [Q](double, const Eigen::VectorXd& x,
                          const Eigen::VectorXd&) -> Eigen::VectorXd {
    return (Q + Q.transpose()) * x;
  };
  sp.running_grad_u = [R](double, const Eigen::VectorXd&,
                          const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return (R + R.transpose()) * u;
  };
  sp.terminal_cost = [Qf](const Eigen::VectorXd& x) { return x.dot(Qf * x); };
  sp.terminal_grad = [Qf](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return (Qf + Qf.transpose()) * x;
  };
  sp.bound_c1 = std::max(
      {op_norm(A) + ts + op_norm(B), op_norm(S0), num_or(j, "bound_c1", 0.0),
       1.0});
  sp.bound_c2 = std::max({op_norm(Q), op_norm(R), op_norm(Qf), 1.0});
  if (j.contains("control_set")) sp.control_set = parse_control_set(j, m);
  return inst;
}

// Regularity-kind instance: a constraint system with g drawn from the
// identity / linear / brokate families and catalog sets for C and D.
inline ConstraintSystem make_regularity(const ProblemFile& pf) {
  using namespace pf_detail;
  if (pf.kind != "regularity")
    throw InputError("problem file kind '" + pf.kind +
                     "' where a regularity problem is required");
  const json& j = pf.params;
  ConstraintSystem sys;

  if (pf.family == "brokate") {
    return brokate_system(integer(j, "n"));
  }
  if (pf.family == "identity") {
    const Eigen::VectorXd x0 = vec(j, "x0");
    sys.set_identity_map(static_cast<int>(x0.size()));
    sys.x0 = x0;
  } else if (pf.family == "linear") {
    const Eigen::MatrixXd A = mat(j, "A", -1, -1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
    if (j.contains("b")) b = vec(j, "b", static_cast<int>(A.rows()));
    sys.set_linear_map(A, b);
    sys.x0 = vec(j, "x0", static_cast<int>(A.cols()));
    sys.K_g = op_norm(A);
  } else {
    fail("family", "unknown regularity family '" + pf.family + "'");
  }

  sys.C = parse_catalog_set(need(j, "C"), "C");
  sys.D = parse_catalog_set(need(j, "D"), "D");
  if (sys.C.dim() != sys.dim_x) fail("C", "dimension mismatch with the map");
  if (sys.D.dim() != sys.dim_y) fail("D", "dimension mismatch with the map");
  if (j.contains("feasible_set"))
    sys.feasible_set = parse_catalog_set(j.at("feasible_set"), "feasible_set");
  if (j.contains("objective_c"))
    sys.set_linear_objective(vec(j, "objective_c", sys.dim_x));
  sys.a = num_or(j, "a", sys.a);
  sys.K_g = num_or(j, "K_g", sys.K_g);
  sys.K_f = num_or(j, "K_f", sys.K_f);
  sys.alpha = num_or(j, "alpha", 0.0);
  sys.alpha1 = num_or(j, "alpha1", 0.0);
  sys.alpha2 = num_or(j, "alpha2", 0.0);
  sys.r = num_or(j, "r", 0.0);
  sys.validate_base_point();
  return sys;
}

}  // namespace scotkit
