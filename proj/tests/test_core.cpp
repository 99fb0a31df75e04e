#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mlab/dyadic.hpp"
#include "mlab/quantize.hpp"
#include "mlab/symbol.hpp"

using namespace mlab;

namespace {

SampledField random_band(const Grid& g, int N, double kmax, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<cd> c(std::size_t(N) * g.size());
  for (int r = 0; r < N; ++r)
    for (std::size_t m = 0; m < g.size(); ++m)
      if (norm2(g.rel_freq(m), g.d) <= kmax) c[r * g.size() + m] = cd(nd(rng), nd(rng));
  return SampledField::from_coeffs(g, N, c);
}

double rel_err(const SampledField& a, const SampledField& b) {
  return l2_norm(a - b) / std::max(1e-300, l2_norm(b));
}

}  // namespace

TEST_CASE("roundtrip and parseval") {
  for (int d : {1, 2}) {
    Grid g;
    g.d = d;
    g.n = d == 1 ? 256 : 32;
    g.L = 7.0;
    auto f = random_band(g, 2, 1e9, 3);
    CHECK(rel_err(fourier_roundtrip(f), f) < 1e-12);
    double grid = 0;
    for (auto v : f.values()) grid += std::norm(v);
    grid = std::sqrt(grid * g.cell());
    CHECK(std::abs(grid - l2_norm(f)) / grid < 1e-12);
  }
  Grid bad;
  bad.n = 48;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("single mode coefficient") {
  Grid g;
  g.n = 64;
  auto f = SampledField::scalar(g, [&](const Vec& x) { return std::exp(kI * 5.0 * x[0]); });
  CHECK(std::abs(f.coeff(0, 5) - 1.0) < 1e-13);
  CHECK(std::abs(sobolev_norm(f, 0) - std::sqrt(2 * kPi)) < 1e-12);
  CHECK(sobolev_norm(f, 2) >= sobolev_norm(f, 1));
}

TEST_CASE("partition telescoping and LP reconstruction") {
  DyadicFamily fam;
  for (double r = 0; r < 3000; r += 0.37) {
    for (int j0 : {0, 1, 4, 9}) {
      double s = 0;
      for (int k = 0; k <= j0; ++k) s += fam.phi(k, r);
      CHECK(std::abs(s - fam.phi0(std::ldexp(r, -j0))) <= 1e-14);
    }
  }
  Grid g;
  g.n = 512;
  g.L = 2 * kPi * 4;
  auto f = random_band(g, 1, 60.0, 5);
  SampledField acc(g, 1);
  for (int k = 0; k <= 8; ++k) acc += lp_project(f, fam, k);
  CHECK(rel_err(acc, f) < 1e-12);
  auto c = SampledField::scalar(g, [](const Vec&) { return cd(1); });
  CHECK(l2_norm(lp_project(c, fam, 2)) < 1e-14);
}

TEST_CASE("exchange identity and H_j norm") {
  Grid g;
  g.n = 256;
  g.L = 2 * kPi * 8;
  auto f = random_band(g, 1, 10.0, 9);
  auto chi = [](const Vec& xi) { return cd(std::exp(-xi[0] * xi[0])); };
  for (int j : {0, 2, 3}) {
    auto hf = hyperbolic_rescale(f, j, Direction::forward).field;
    auto lhs = fourier_multiplier(hf, chi);
    double sc = std::ldexp(1.0, -j);
    auto rhs = hyperbolic_rescale(
                   fourier_multiplier(f, [&](const Vec& xi) { return chi(scaled(xi, sc)); }), j,
                   Direction::forward)
                   .field;
    CHECK(rel_err(lhs, rhs) < 1e-10);
    auto Hf = H_rescale(f, j, Direction::forward).field;
    for (double s : {0.0, 1.0, 2.5})
      CHECK(std::abs(sobolev_norm(Hf, s) - sobolev_norm(f, s, j)) / sobolev_norm(f, s, j) < 1e-10);
    auto back = hyperbolic_rescale(hf, j, Direction::inverse).field;
    CHECK(rel_err(back, f) < 1e-12);
  }
}

TEST_CASE("quantization against dense oracle") {
  for (int d : {1, 2}) {
    Grid g;
    g.d = d;
    g.n = d == 1 ? 32 : 8;
    g.L = 2 * kPi;
    int N = 2;
    auto a = function_symbol(d, N, [](const Vec& x) -> Mat { return Mat(); });
    a.eval = [d](const Vec& x, const Vec& xi) -> Mat {
      Mat m(2, 2);
      double r = jbracket(xi, d);
      m << std::cos(x[0]) + 1.0 / r, cd(0, 1) * std::sin(2 * x[0] + x[1]) * xi[0] / r,
          std::exp(std::sin(x[0])) * 0.3, cd(1, 2) / (r * r);
      return m;
    };
    auto f = random_band(g, N, 1e9, 11);
    for (Quant kind : {Quant::pdo, Quant::para}) {
      for (int j : {0, 2}) {
        QuantOpts o;
        o.j = j;
        o.kind = kind;
        CMat M = assemble_dense(a, g, o);
        auto ref = apply_dense(M, f);
        CHECK(rel_err(apply_op(a, f, o), ref) < 1e-10);
      }
    }
  }
}

TEST_CASE("para equals pdo for multipliers; separable path agrees") {
  Grid g;
  g.n = 64;
  auto f = random_band(g, 1, 1e9, 2);
  auto m = scalar_multiplier(1, [](const Vec& xi) { return cd(xi[0] * xi[0] / (1 + xi[0] * xi[0])); });
  for (int j : {0, 3}) {
    auto p1 = apply_pdo(m, j, f), p2 = apply_para(m, j, f);
    CHECK(rel_err(p2, p1) < 1e-12);
  }
  auto sep = separable_symbol(
      1, 1,
      {SepTerm{[](const Vec& x) { return cd(std::exp(std::cos(x[0]))); },
               [](const Vec& xi) -> Mat { return Mat::Constant(1, 1, cd(xi[0] / jbracket(xi, 1))); }}});
  for (Quant kind : {Quant::pdo, Quant::para}) {
    QuantOpts o;
    o.j = 2;
    o.kind = kind;
    auto fast = apply_op(sep, f, o);
    o.fast_paths = false;
    auto slow = apply_op(sep, f, o);
    CHECK(rel_err(fast, slow) < 1e-12);
  }
}

TEST_CASE("decomposition identity") {
  Grid g;
  g.n = 256;
  auto u = random_band(g, 1, 40.0, 4);
  auto a = composed_separable(
      1, 1, [](const CVec& v) { return v(0) + 0.5 * v(0) * v(0); },
      [](const Vec& xi) -> Mat { return Mat::Constant(1, 1, cd(1.0)); }, u, 1.5);
  auto f = random_band(g, 1, 1e9, 8);
  auto dec = para_pdo_difference(a, 1, f);
  CHECK(dec.identity_residual <= 1e-10 * std::max(1.0, l2_norm(dec.residual)));
}
