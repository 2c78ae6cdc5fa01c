#pragma once

#include <cstdint>
#include <random>

#include "iscpt/common.hpp"

namespace iscpt {

// Deterministic random stream. Distribution mapping is implemented here
// (rather than with std:: distributions, whose output is
// implementation-defined) so that identical seeds give identical draws on
// any standard library. Substreams are derived with a splitmix64 hash of
// (seed, stream id), which keeps draws of independent stages decoupled.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static RandomStream substream(std::uint64_t seed, std::uint64_t stream_id) {
    return RandomStream(mix(seed, stream_id));
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one cached value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * kPi * u2;
    spare_ = r * std::sin(ang);
    has_spare_ = true;
    return r * std::cos(ang);
  }

  // CN(0, 1): unit-variance circularly symmetric complex Gaussian.
  Cplx complex_normal() {
    const double re = normal();
    const double im = normal();
    return Cplx(re * M_SQRT1_2, im * M_SQRT1_2);
  }

  CVec complex_normal_vector(Eigen::Index n) {
    CVec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = complex_normal();
    return v;
  }

  CMat complex_normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    CMat m(rows, cols);
    // Column-major fill order is part of the reproducibility contract.
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = complex_normal();
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace iscpt
