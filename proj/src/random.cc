#include "omnisfm/random.h"

#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Geometry>

namespace omnisfm {

namespace {
constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

uint64_t Mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(uint64_t seed, uint64_t stream)
    : key_(Mix64(seed + kGolden * (stream + 1))) {}

uint64_t CounterRng::NextBits() {
  ++counter_;
  return Mix64(key_ + kGolden * counter_);
}

double CounterRng::Uniform() {
  return static_cast<double>(NextBits() >> 11) * 0x1.0p-53;
}

double CounterRng::Uniform(double lo, double hi) {
  return lo + (hi - lo) * Uniform();
}

double CounterRng::Normal() {
  const double u1 = Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(1.0 - u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

uint32_t CounterRng::Index(uint32_t n) {
  const uint64_t top = NextBits() >> 32;
  return static_cast<uint32_t>((top * n) >> 32);
}

Eigen::Vector3d CounterRng::UnitVector() {
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(Normal(), Normal(), Normal());
  } while (v.squaredNorm() < 1e-12);
  return v.normalized();
}

Eigen::Matrix3d CounterRng::Rotation() {
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(Normal(), Normal(), Normal(), Normal());
  } while (q.squaredNorm() < 1e-12);
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

std::vector<int> CounterRng::Sample(int n, int k) {
  std::vector<int> items(n);
  std::iota(items.begin(), items.end(), 0);
  for (int i = 0; i < k && i < n; ++i) {
    const int j = i + static_cast<int>(Index(static_cast<uint32_t>(n - i)));
    std::swap(items[i], items[j]);
  }
  items.resize(std::min(k, n));
  return items;
}

}  // namespace omnisfm
