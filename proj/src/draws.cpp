#include "delib/draws.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "delib/errors.hpp"
#include "delib/numeric.hpp"

namespace delib {

namespace {

// 53-bit uniform strictly inside (0, 1).
inline double uniform_open(std::mt19937_64& eng) {
  return (double((eng() >> 11)) + 0.5) * 0x1.0p-53;
}

// Substream engine for one (individual, dimension) pair. Streams depend only
// on these keys, so a DrawMatrix is reproducible element-wise.
inline std::mt19937_64 substream(std::uint64_t seed, int i, int k) {
  std::uint64_t s = splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(i + 1)));
  s = splitmix64(s ^ (0xBF58476D1CE4E5B9ULL * std::uint64_t(k + 1)));
  return std::mt19937_64(s);
}

}  // namespace

double inverse_normal_cdf(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("inverse_normal_cdf: u must lie in (0, 1)");
  }

  // Acklam's rational approximation (|relative error| < 1.15e-9 everywhere).
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double z;
  if (u < p_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - p_low) {
    const double q = u - 0.5;
    const double r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-u));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Newton step on Phi(z) - u sharpens the approximation to ~1e-15.
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  const double err = 0.5 * std::erfc(-z * kInvSqrt2) - u;
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
  if (pdf > 0.0) z -= err / pdf;
  return z;
}

DrawMatrix mlhs_draws(int n_individuals, int n_draws, int n_dimensions,
                      std::uint64_t seed) {
  if (n_individuals < 1 || n_draws < 1 || n_dimensions < 1) {
    throw std::invalid_argument("mlhs_draws: all dimensions must be >= 1");
  }
  DrawMatrix out;
  out.n_individuals = n_individuals;
  out.n_draws = n_draws;
  out.n_dimensions = n_dimensions;
  out.seed = seed;
  out.values.resize(std::size_t(n_individuals) * n_draws * n_dimensions);

  const int Q = n_draws;
  std::vector<int> perm(Q);
  for (int i = 0; i < n_individuals; ++i) {
    for (int k = 0; k < n_dimensions; ++k) {
      auto eng = substream(seed, i, k);
      // One shift per (i, k): every stratum [j/Q, (j+1)/Q) is hit exactly
      // once, at the same relative offset.
      const double shift = uniform_open(eng);
      for (int j = 0; j < Q; ++j) perm[j] = j;
      // Fisher-Yates with an explicit modulo keeps the permutation
      // implementation-independent (std::shuffle is not pinned down).
      for (int j = Q - 1; j > 0; --j) {
        const int swap_with = int(eng() % std::uint64_t(j + 1));
        std::swap(perm[j], perm[swap_with]);
      }
      for (int q = 0; q < Q; ++q) {
        const double u = (double(perm[q]) + shift) / double(Q);
        out.values[(std::size_t(i) * Q + q) * n_dimensions + k] =
            inverse_normal_cdf(u);
      }
    }
  }
  return out;
}

namespace {
constexpr std::uint64_t kDrawMagic = 0x44524C424457534CULL;  // "DRLBDWSL"
constexpr std::uint32_t kDrawVersion = 1;
}  // namespace

void save_draws(const DrawMatrix& draws, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open draw cache for writing: " + path);
  const std::uint64_t dims[3] = {std::uint64_t(draws.n_individuals),
                                 std::uint64_t(draws.n_draws),
                                 std::uint64_t(draws.n_dimensions)};
  const std::uint32_t version = kDrawVersion, reserved = 0;
  f.write(reinterpret_cast<const char*>(&kDrawMagic), sizeof(kDrawMagic));
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  f.write(reinterpret_cast<const char*>(&reserved), sizeof(reserved));
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(&draws.seed), sizeof(draws.seed));
  f.write(reinterpret_cast<const char*>(draws.values.data()),
          std::streamsize(draws.values.size() * sizeof(double)));
  if (!f) throw IoError("failed writing draw cache: " + path);
}

DrawMatrix load_draws(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open draw cache: " + path);
  std::uint64_t magic = 0;
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t dims[3] = {0, 0, 0};
  DrawMatrix out;
  f.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  f.read(reinterpret_cast<char*>(&reserved), sizeof(reserved));
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  f.read(reinterpret_cast<char*>(&out.seed), sizeof(out.seed));
  if (!f || magic != kDrawMagic) {
    throw IoError("not a draw cache file: " + path);
  }
  if (version != kDrawVersion) {
    throw IoError("unsupported draw cache version in " + path);
  }
  constexpr std::uint64_t kMaxElems = 1ULL << 33;  // 64 GiB of doubles
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 ||
      dims[0] * dims[1] * dims[2] > kMaxElems) {
    throw IoError("implausible draw cache dimensions in " + path);
  }
  out.n_individuals = int(dims[0]);
  out.n_draws = int(dims[1]);
  out.n_dimensions = int(dims[2]);
  out.values.resize(std::size_t(dims[0]) * dims[1] * dims[2]);
  f.read(reinterpret_cast<char*>(out.values.data()),
         std::streamsize(out.values.size() * sizeof(double)));
  if (!f || f.gcount() !=
                std::streamsize(out.values.size() * sizeof(double))) {
    throw IoError("draw cache truncated: " + path);
  }
  return out;
}

}  // namespace delib
