#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace omnisfm {

// Counter-based generator. Every draw is a pure function of
// (seed, stream, counter), so independent entities can derive their own
// streams and results do not depend on evaluation order.
//
//   Mix(z)    : SplitMix64 finalizer
//               z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//               z = (z ^ (z >> 27)) * 0x94d049bb133111eb
//               z =  z ^ (z >> 31)
//   key       = Mix(seed + 0x9e3779b97f4a7c15 * (stream + 1))
//   Bits(k)   = Mix(key + 0x9e3779b97f4a7c15 * (k + 1))      (k = 0, 1, ...)
//   Uniform() = (Bits >> 11) * 2^-53                          in [0, 1)
//   Normal()  = sqrt(-2 ln(1 - U1)) * cos(2 pi U2)           (Box-Muller,
//                                                             one output per
//                                                             two draws)
//
// All arithmetic is modulo 2^64. Reference vectors live in
// tests/random_test.cc.
uint64_t Mix64(uint64_t z);

class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream);

  uint64_t NextBits();
  double Uniform();
  double Uniform(double lo, double hi);
  double Normal();
  // Uniform integer in [0, n). Uses the multiply-shift reduction on the top
  // 32 bits so the mapping is portable.
  uint32_t Index(uint32_t n);

  Eigen::Vector3d UnitVector();
  // Uniformly distributed rotation (normalized Gaussian quaternion).
  Eigen::Matrix3d Rotation();

  // First `k` entries of a Fisher-Yates shuffle of [0, n).
  std::vector<int> Sample(int n, int k);

  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace omnisfm
