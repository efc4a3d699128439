#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>

namespace delib {

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(Lambda(x)) = -softplus(-x), accurate over the whole real line.
inline double log_logistic(double x) {
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

// log(1 - exp(z)) for z < 0. Maechler's split keeps both tails accurate.
inline double log1mexp(double z) {
  if (z >= 0.0) return -std::numeric_limits<double>::infinity();
  constexpr double kLog2 = 0.6931471805599453;
  return z > -kLog2 ? std::log(-std::expm1(z)) : std::log1p(-std::exp(z));
}

inline double log_sum_exp(const Eigen::ArrayXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (or a stray nan) propagates
  return m + std::log((v - m).exp().sum());
}

// SplitMix64 mixer; used to derive independent substream seeds from one
// master seed so that draw streams do not depend on generation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a over raw bytes; used for input fingerprints in run manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace delib
