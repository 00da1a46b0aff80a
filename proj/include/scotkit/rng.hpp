#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace scotkit {

// Counter-based pseudo-random generator. Output i is a pure function of
// (seed, i), so streams are reproducible across platforms and independent of
// call interleaving once the counter is fixed. Used for every sampled check
// so that reports are byte-identical for a fixed seed.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  std::uint64_t seed() const { return seed_; }

  // Derives an independent stream, e.g. one per sampled instance.
  CounterRng fork(std::uint64_t tag) const {
    return CounterRng(mix(seed_ ^ 0x8e3c5a1f00d1ce75ULL, tag));
  }

  std::uint64_t next_u64() { return mix(seed_, counter_++); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller; consumes two uniforms.
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Eigen::VectorXd normal_vector(int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = normal();
    return v;
  }

  Eigen::VectorXd uniform_vector(int dim, double lo, double hi) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = uniform(lo, hi);
    return v;
  }

  // Uniform on the unit sphere.
  Eigen::VectorXd unit_vector(int dim) {
    Eigen::VectorXd v = normal_vector(dim);
    double n = v.norm();
    while (n < 1e-12) {
      v = normal_vector(dim);
      n = v.norm();
    }
    return v / n;
  }

  // Uniform in the closed ball of given radius.
  Eigen::VectorXd ball_vector(int dim, double radius) {
    const Eigen::VectorXd dir = unit_vector(dim);
    const double r = radius * std::pow(uniform(), 1.0 / dim);
    return r * dir;
  }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_;
};

// Stable 64-bit content digest (FNV-1a), used to stamp inputs into reports.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace scotkit
