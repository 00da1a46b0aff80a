#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scotkit/errors.hpp"

namespace scotkit {

// One finite-support noise coordinate: pairs (value, probability).
struct SupportPoint {
  double value = 0.0;
  double prob = 0.0;
};

using CoordinateSupport = std::vector<SupportPoint>;

// Law of the stagewise-independent driving noise w_1..w_N in R^d.
// Coordinates are independent; every coordinate must have mean 0 and second
// moment 1 (both within 1e-12). A stage may override the base law.
struct NoiseSpec {
  int horizon = 0;    // N: noise acts at stages 1..N
  int dim = 0;        // d
  std::vector<CoordinateSupport> support;  // size d
  // Optional per-stage overrides, each of size d; index 0 <-> stage 1.
  std::vector<std::optional<std::vector<CoordinateSupport>>> stage_overrides;

  static constexpr double kMomentTol = 1e-12;

  const std::vector<CoordinateSupport>& law_at_stage(int k) const {
    const int idx = k - 1;
    if (idx >= 0 && idx < static_cast<int>(stage_overrides.size()) &&
        stage_overrides[idx].has_value()) {
      return *stage_overrides[idx];
    }
    return support;
  }

  // Affinely rescales every coordinate so probabilities sum to one, the mean
  // is exactly zero and the second moment exactly one (up to roundoff).
  NoiseSpec renormalized() const {
    NoiseSpec out = *this;
    auto fix = [](std::vector<CoordinateSupport>& law) {
      for (auto& coord : law) {
        double mass = 0.0;
        for (const auto& sp : coord) mass += sp.prob;
        if (mass <= 0.0) throw InputError("noise coordinate has zero mass");
        for (auto& sp : coord) sp.prob /= mass;
        double mean = 0.0;
        for (const auto& sp : coord) mean += sp.prob * sp.value;
        double var = 0.0;
        for (const auto& sp : coord)
          var += sp.prob * (sp.value - mean) * (sp.value - mean);
        if (var <= 0.0)
          throw InputError("noise coordinate has zero variance; cannot scale");
        const double s = 1.0 / std::sqrt(var);
        for (auto& sp : coord) sp.value = (sp.value - mean) * s;
      }
    };
    fix(out.support);
    for (auto& ov : out.stage_overrides)
      if (ov.has_value()) fix(*ov);
    return out;
  }

  void validate() const {
    if (horizon < 1) throw InputError("noise horizon must be >= 1");
    if (dim < 1) throw InputError("noise dimension must be >= 1");
    if (static_cast<int>(support.size()) != dim)
      throw InputError("noise support must list one coordinate per dimension");
    for (int k = 1; k <= horizon; ++k) {
      const auto& law = law_at_stage(k);
      if (static_cast<int>(law.size()) != dim)
        throw InputError("stage " + std::to_string(k) +
                         " noise override has wrong dimension");
      for (int i = 0; i < dim; ++i) validate_coordinate(law[i], i, k);
    }
  }

 private:
  static void validate_coordinate(const CoordinateSupport& coord, int i,
                                  int stage) {
    auto fail = [&](const std::string& moment, double got) {
      std::ostringstream os;
      os << "noise coordinate " << i << " at stage " << stage << ": " << moment
         << " = " << got << " violates tolerance " << kMomentTol;
      throw InputError(os.str());
    };
    if (coord.size() < 2)
      throw InputError("noise coordinate " + std::to_string(i) + " at stage " +
                       std::to_string(stage) +
                       " needs at least two support points");
    double mass = 0.0, mean = 0.0, second = 0.0;
    for (const auto& sp : coord) {
      if (sp.prob <= 0.0)
        throw InputError("noise coordinate " + std::to_string(i) +
                         " at stage " + std::to_string(stage) +
                         " has a non-positive probability");
      mass += sp.prob;
      mean += sp.prob * sp.value;
      second += sp.prob * sp.value * sp.value;
    }
    if (std::abs(mass - 1.0) > kMomentTol) fail("total mass - 1", mass - 1.0);
    if (std::abs(mean) > kMomentTol) fail("mean", mean);
    if (std::abs(second - 1.0) > kMomentTol)
      fail("second moment - 1", second - 1.0);
  }
};

// Rademacher +-1 law with equal weights, the bridge default.
inline NoiseSpec rademacher_noise(int horizon, int dim) {
  NoiseSpec spec;
  spec.horizon = horizon;
  spec.dim = dim;
  spec.support.assign(
      dim, CoordinateSupport{{+1.0, 0.5}, {-1.0, 0.5}});
  return spec;
}

// Finite filtered tree generated by the noise. Nodes are stored breadth
// first; within a stage, the children of consecutive parents are consecutive
// blocks and branches enumerate coordinate outcomes lexicographically
// (coordinate 0 most significant). Node 0 is the root with w_0 = 0.
class ScenarioTree {
 public:
  static constexpr int kDefaultNodeBudget = 200000;

  int horizon() const { return horizon_; }          // N
  int noise_dim() const { return dim_; }            // d
  int num_nodes() const { return static_cast<int>(parent_.size()); }
  int num_stages() const { return horizon_ + 1; }   // stages 0..N

  int stage_size(int k) const { return stage_offset_[k + 1] - stage_offset_[k]; }
  int stage_begin(int k) const { return stage_offset_[k]; }
  int node_id(int k, int j) const { return stage_offset_[k] + j; }
  int stage_of(int id) const {
    int k = 0;
    while (stage_offset_[k + 1] <= id) ++k;
    return k;
  }
  int local_index(int id, int stage) const { return id - stage_offset_[stage]; }

  int parent(int id) const { return parent_[id]; }
  int child_begin(int id) const { return child_begin_[id]; }
  int child_count(int id) const { return child_count_[id]; }
  int branching(int stage) const { return branching_[stage]; }  // B_k, k>=1

  double prob(int id) const { return prob_[id]; }
  double cond_prob(int id) const { return cond_prob_[id]; }
  const Eigen::VectorXd& noise(int id) const { return noise_[id]; }

  friend ScenarioTree build_tree(const NoiseSpec&, int);

 private:
  int horizon_ = 0;
  int dim_ = 0;
  std::vector<int> stage_offset_;   // size N+2
  std::vector<int> branching_;      // size N+1; branching_[0] unused (=1)
  std::vector<int> parent_;
  std::vector<int> child_begin_;
  std::vector<int> child_count_;
  std::vector<double> prob_;
  std::vector<double> cond_prob_;
  std::vector<Eigen::VectorXd> noise_;
};

inline ScenarioTree build_tree(const NoiseSpec& spec,
                               int node_budget = ScenarioTree::kDefaultNodeBudget) {
  spec.validate();
  const int N = spec.horizon;
  const int d = spec.dim;

  // Stage sizes and the budget guard first, before any allocation.
  std::vector<int> branching(N + 1, 1);
  std::int64_t total = 1, stage_size = 1;
  for (int k = 1; k <= N; ++k) {
    const auto& law = spec.law_at_stage(k);
    std::int64_t b = 1;
    for (const auto& coord : law) b *= static_cast<std::int64_t>(coord.size());
    branching[k] = static_cast<int>(b);
    stage_size *= b;
    total += stage_size;
    if (total > node_budget) {
      std::ostringstream os;
      os << "scenario tree with N = " << N << ", d = " << d << " needs "
         << total << "+ nodes, over the budget of " << node_budget;
      throw InputError(os.str());
    }
  }

  ScenarioTree tree;
  tree.horizon_ = N;
  tree.dim_ = d;
  tree.branching_ = branching;
  tree.stage_offset_.assign(N + 2, 0);
  tree.stage_offset_[0] = 0;
  {
    std::int64_t size = 1, off = 0;
    for (int k = 0; k <= N; ++k) {
      if (k > 0) size *= branching[k];
      tree.stage_offset_[k + 1] = static_cast<int>(off + size);
      off += size;
    }
  }
  const int n_nodes = tree.stage_offset_[N + 1];
  tree.parent_.assign(n_nodes, -1);
  tree.child_begin_.assign(n_nodes, -1);
  tree.child_count_.assign(n_nodes, 0);
  tree.prob_.assign(n_nodes, 0.0);
  tree.cond_prob_.assign(n_nodes, 0.0);
  tree.noise_.assign(n_nodes, Eigen::VectorXd::Zero(d));

  tree.prob_[0] = 1.0;
  tree.cond_prob_[0] = 1.0;  // w_0 = 0 stays the zero vector

  for (int k = 1; k <= N; ++k) {
    const auto& law = spec.law_at_stage(k);
    const int B = branching[k];
    // Branch table: lexicographic enumeration of coordinate outcomes.
    std::vector<Eigen::VectorXd> w(B, Eigen::VectorXd(d));
    std::vector<double> cp(B, 1.0);
    for (int b = 0; b < B; ++b) {
      int rem = b;
      for (int i = d - 1; i >= 0; --i) {
        const int s = static_cast<int>(law[i].size());
        const int j = rem % s;
        rem /= s;
        w[b](i) = law[i][j].value;
        cp[b] *= law[i][j].prob;
      }
    }
    const int parent_begin = tree.stage_offset_[k - 1];
    const int parent_count = tree.stage_offset_[k] - parent_begin;
    const int begin = tree.stage_offset_[k];
    for (int j = 0; j < parent_count; ++j) {
      const int par = parent_begin + j;
      const int cb = begin + j * B;
      tree.child_begin_[par] = cb;
      tree.child_count_[par] = B;
      for (int b = 0; b < B; ++b) {
        const int id = cb + b;
        tree.parent_[id] = par;
        tree.cond_prob_[id] = cp[b];
        tree.prob_[id] = tree.prob_[par] * cp[b];
        tree.noise_[id] = w[b];
      }
    }
  }
  return tree;
}

// One R^n value per stage-k node, stored as columns of an n x |stage k|
// matrix. Plain data; tree-aware operations are free functions below.
class AdaptedProcess {
 public:
  AdaptedProcess() = default;
  AdaptedProcess(int stage, Eigen::MatrixXd values)
      : stage_(stage), values_(std::move(values)) {}

  static AdaptedProcess zero(const ScenarioTree& tree, int stage, int dim) {
    return AdaptedProcess(stage,
                          Eigen::MatrixXd::Zero(dim, tree.stage_size(stage)));
  }
  static AdaptedProcess constant(const ScenarioTree& tree, int stage,
                                 const Eigen::VectorXd& v) {
    AdaptedProcess p = zero(tree, stage, static_cast<int>(v.size()));
    p.values_.colwise() = v;
    return p;
  }

  int stage() const { return stage_; }
  int dim() const { return static_cast<int>(values_.rows()); }
  int count() const { return static_cast<int>(values_.cols()); }

  Eigen::MatrixXd& values() { return values_; }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd::ColXpr value(int j) { return values_.col(j); }
  Eigen::MatrixXd::ConstColXpr value(int j) const { return values_.col(j); }

  AdaptedProcess& operator+=(const AdaptedProcess& o) {
    check_same(o);
    values_ += o.values_;
    return *this;
  }
  AdaptedProcess& operator-=(const AdaptedProcess& o) {
    check_same(o);
    values_ -= o.values_;
    return *this;
  }
  AdaptedProcess& operator*=(double s) {
    values_ *= s;
    return *this;
  }
  friend AdaptedProcess operator+(AdaptedProcess a, const AdaptedProcess& b) {
    a += b;
    return a;
  }
  friend AdaptedProcess operator-(AdaptedProcess a, const AdaptedProcess& b) {
    a -= b;
    return a;
  }
  friend AdaptedProcess operator*(double s, AdaptedProcess a) {
    a *= s;
    return a;
  }

 private:
  void check_same(const AdaptedProcess& o) const {
    if (stage_ != o.stage_ || values_.rows() != o.values_.rows() ||
        values_.cols() != o.values_.cols())
      throw PreconditionError("adapted process shape mismatch");
  }

  int stage_ = 0;
  Eigen::MatrixXd values_;
};

inline void check_process(const ScenarioTree& tree, const AdaptedProcess& x) {
  if (x.stage() < 0 || x.stage() > tree.horizon())
    throw PreconditionError("process stage out of range");
  if (x.count() != tree.stage_size(x.stage()))
    throw PreconditionError("process has wrong node count for its stage");
}

// E(x): probability-weighted sum over the stage of x.
inline Eigen::VectorXd expectation(const ScenarioTree& tree,
                                   const AdaptedProcess& x) {
  check_process(tree, x);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(x.dim());
  const int begin = tree.stage_begin(x.stage());
  for (int j = 0; j < x.count(); ++j) e += tree.prob(begin + j) * x.value(j);
  return e;
}

// E(x | F_{k-1}) for x at stage k >= 1; and the weighted variant
// E(x * w_k^i | F_{k-1}), which reads off stage-space coefficients.
inline AdaptedProcess cond_expectation(const ScenarioTree& tree,
                                       const AdaptedProcess& x,
                                       std::optional<int> weight_coord = {}) {
  check_process(tree, x);
  const int k = x.stage();
  if (k < 1)
    throw PreconditionError("conditional expectation needs stage >= 1");
  if (weight_coord && (*weight_coord < 0 || *weight_coord >= tree.noise_dim()))
    throw PreconditionError("weight coordinate out of range");
  AdaptedProcess out = AdaptedProcess::zero(tree, k - 1, x.dim());
  const int pbegin = tree.stage_begin(k - 1);
  const int begin = tree.stage_begin(k);
  for (int j = 0; j < x.count(); ++j) {
    const int id = begin + j;
    const int pj = tree.parent(id) - pbegin;
    double wgt = tree.cond_prob(id);
    if (weight_coord) wgt *= tree.noise(id)(*weight_coord);
    out.value(pj) += wgt * x.value(j);
  }
  return out;
}

// L2(prob) inner product and norm at a fixed stage.
inline double l2_inner(const ScenarioTree& tree, const AdaptedProcess& x,
                       const AdaptedProcess& y) {
  check_process(tree, x);
  if (y.stage() != x.stage() || y.dim() != x.dim())
    throw PreconditionError("inner product shape mismatch");
  const int begin = tree.stage_begin(x.stage());
  double acc = 0.0;
  for (int j = 0; j < x.count(); ++j)
    acc += tree.prob(begin + j) * x.value(j).dot(y.value(j));
  return acc;
}

inline double l2_norm(const ScenarioTree& tree, const AdaptedProcess& x) {
  return std::sqrt(l2_inner(tree, x, x));
}

}  // namespace scotkit
