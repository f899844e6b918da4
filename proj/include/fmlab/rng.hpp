#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace fmlab {

// Deterministic counter-based random generator.
//
// Every consumer derives its own stream from a (seed, stream-name) pair, so
// independent parts of an experiment never share or race on generator state,
// and drawing n values yields a prefix of drawing 2n (streaming consistency).
// The output function is the SplitMix64 finalizer evaluated at
// key + counter * golden; the key folds an FNV-1a hash of the stream name
// into the user seed.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream)
      : key_(mix64(seed ^ fnv1a(stream))), counter_(0) {}

  // Derive a child stream deterministically (e.g. per-seed lanes).
  Rng child(std::string_view stream) const { return Rng(key_, stream); }

  std::uint64_t next_u64() {
    return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform on [0, 1): 53 mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Uniform integer on [0, n). n must be >= 1; modulo bias is negligible for
  // the small n used here (dataset cell/component picks).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; the second deviate is cached so
  // consumption stays sequential and prefix-stable.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;  // 2*pi*u2
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vec(int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  // n x d matrix of standard normals, filled row by row.
  Eigen::MatrixXd normal_mat(int n, int d) {
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = normal();
    return m;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fmlab
