#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace procalab {

// xorshift64* generator. Update rule, applied to the 64-bit state x:
//   x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  output = x * 0x2545F4914F6CDD1D
// The rule is part of the report contract: identical seeds must reproduce
// identical random batteries across builds and platforms.
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}

  std::uint64_t next_u64() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  // uniform in [0,1)
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [-1,1)
  double next_sym() { return 2.0 * next_unit() - 1.0; }

  Eigen::VectorXd vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next_sym();
    return v;
  }

 private:
  std::uint64_t state_;
};

}  // namespace procalab
