#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace delib {

// Standard-normal draw block for simulated likelihood: one row of K draws per
// (individual, draw) pair, laid out row-major as values[(i*Q + q)*K + k].
struct DrawMatrix {
  int n_individuals = 0;  // N
  int n_draws = 0;        // Q
  int n_dimensions = 0;   // K
  std::uint64_t seed = 0;
  std::vector<double> values;

  double at(int i, int q, int k) const {
    return values[(std::size_t(i) * n_draws + q) * n_dimensions + k];
  }
  const double* row(int i, int q) const {
    return values.data() + (std::size_t(i) * n_draws + q) * n_dimensions;
  }
};

// Inverse standard-normal CDF: rational approximation refined by one Newton
// step on Phi(z) - u, so |Phi(z) - u| stays below 1e-12 across (0, 1).
double inverse_normal_cdf(double u);

// Modified Latin hypercube sampling: per (individual, dimension), the Q
// uniforms are (perm(j) + shift) / Q with an independent random shift and
// permutation, then mapped through inverse_normal_cdf. Stratification is
// therefore exact within every (i, k) stream, and streams depend only on
// (seed, i, k) -- not on N, K, or generation order.
DrawMatrix mlhs_draws(int n_individuals, int n_draws, int n_dimensions,
                      std::uint64_t seed);

// Binary cache: fixed header (magic, version, N, Q, K, seed) + raw values.
void save_draws(const DrawMatrix& draws, const std::string& path);
DrawMatrix load_draws(const std::string& path);

}  // namespace delib
