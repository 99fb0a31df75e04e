#pragma once

#include <random>

#include "mlab/field.hpp"

namespace testing_support {

using namespace mlab;

inline SampledField random_band(const Grid& g, int N, double kmax, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<cd> c(std::size_t(N) * g.size());
  for (int r = 0; r < N; ++r)
    for (std::size_t m = 0; m < g.size(); ++m)
      if (norm2(g.rel_freq(m), g.d) <= kmax) c[r * g.size() + m] = cd(nd(rng), nd(rng));
  return SampledField::from_coeffs(g, N, c);
}

inline double rel_err(const SampledField& a, const SampledField& b) {
  return l2_norm(a - b) / std::max(1e-300, l2_norm(b));
}

// gaussian packet exp(-w |x - x0|^2) e^{i x.xi}, periodic distance on [0, L)
inline SampledField packet(const Grid& g, const Vec& x0, const Vec& xi, double w) {
  return SampledField::scalar(g, [&](const Vec& x) {
    double r2 = 0;
    for (int a = 0; a < g.d; ++a) {
      double t = std::remainder(x[a] - x0[a], g.L);
      r2 += t * t;
    }
    return std::exp(-w * r2) * std::exp(kI * dot(x, xi, g.d));
  });
}

inline Grid line_grid(long n, double L = 2 * kPi) {
  Grid g;
  g.d = 1;
  g.n = n;
  g.L = L;
  return g;
}

}  // namespace testing_support
