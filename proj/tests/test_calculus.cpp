#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mlab/calculus.hpp"
#include "support.hpp"

using namespace mlab;
using namespace testing_support;

namespace {

SymbolSpec smooth_m() {
  return scalar_multiplier(1, [](const Vec& xi) { return cd(std::exp(-(xi[0] - 1.5) * (xi[0] - 1.5))); });
}

SymbolSpec smooth_a() {
  return function_symbol(1, 1, [](const Vec& x) {
    Mat m(1, 1);
    m(0, 0) = 1.0 + 0.5 * std::cos(x[0]) + 0.3 * std::sin(2 * x[0]);
    return m;
  });
}

double chi_bump(const Vec& z) { return smooth_cut(std::abs(z[0] - 1.0), 0.25, 0.5); }

}  // namespace

TEST_CASE("composition of multipliers is exact") {
  Grid g = line_grid(64);
  auto f = random_band(g, 1, 30, 1);
  auto m2 = scalar_multiplier(1, [](const Vec& xi) { return cd(1.0 / (1.0 + xi[0] * xi[0])); });
  auto rep = compose_expand(smooth_m(), m2, 2, 3, f);
  CHECK(rep.remainder_norm < 1e-12);
  CHECK(rep.terms.size() == 2);
  CHECK(l2_norm(rep.terms[1]) < 1e-14);
}

TEST_CASE("composition rejects insufficient regularity") {
  Grid g = line_grid(32);
  auto f = random_band(g, 1, 8, 1);
  auto a = smooth_a();
  a.k = 1;
  a.theta = 0.0;
  CHECK_THROWS_AS(compose_expand(smooth_m(), a, 2, 2, f), Error);
}

TEST_CASE("composition identity against dense oracle") {
  Grid g = line_grid(32);
  auto f = random_band(g, 1, 12, 4);
  int j = 2;
  auto rep = compose_expand(smooth_m(), smooth_a(), 2, j, f);
  QuantOpts o;
  o.j = j;
  o.kind = Quant::pdo;
  CMat M1 = assemble_dense(smooth_m(), g, o), M2 = assemble_dense(smooth_a(), g, o);
  CHECK(rel_err(apply_dense(M1 * M2, f), rep.lhs) < 1e-10);
  CMat T1 = assemble_dense(expansion_symbol(smooth_m(), smooth_a(), 1), g, o);
  SampledField t1 = apply_dense(T1, f);
  t1 *= std::ldexp(1.0, -j);
  CHECK(rel_err(t1, rep.terms[1]) < 1e-10);
  CHECK(rep.identity_residual < 1e-12);
}

TEST_CASE("composition remainder rates") {
  for (int r : {1, 2}) {
    std::vector<int> js;
    std::vector<double> v;
    for (int j = 3; j <= 7; ++j) {
      Grid g = line_grid(1L << (j + 3));
      auto f = packet(g, {kPi, 0}, {std::ldexp(1.0, j), 0}, 2.0);
      auto rep = compose_expand(smooth_m(), smooth_a(), r, j, f);
      js.push_back(j);
      v.push_back(rep.remainder_norm);
    }
    auto fit = fit_log2(js, v);
    MESSAGE("r=" << r << " slope " << fit.slope);
    CHECK(std::abs(fit.slope + r) < 0.3);
  }
}

TEST_CASE("commutator with a constant vanishes") {
  Grid g = line_grid(128);
  auto f = SampledField::scalar(g, [](const Vec&) { return cd(2.0); });
  auto h = random_band(g, 1, 50, 2);
  auto rep = multiplier_commutator([](const Vec& z) { return cd(chi_bump(z)); }, f, 4, h, 1);
  CHECK(l2_norm(rep.commutator) < 1e-12 * l2_norm(h));
  CHECK(rep.identity_residual < 1e-12);
}

TEST_CASE("commutator remainder rate follows the Hoelder exponent") {
  for (double theta : {0.5, 1.5}) {
    Grid g = line_grid(4096);
    auto f = SampledField::scalar(g, [&](const Vec& x) { return cd(std::pow(std::abs(std::sin(x[0])), theta)); });
    int order = int(std::floor(theta));
    std::vector<int> js;
    std::vector<double> v;
    for (int j = 4; j <= 8; ++j) {
      js.push_back(j);
      v.push_back(commutator_remainder_norm([](const Vec& z) { return cd(chi_bump(z)); }, f, j, order));
    }
    auto fit = fit_log2(js, v);
    MESSAGE("theta=" << theta << " slope " << fit.slope);
    CHECK(std::abs(fit.slope + theta) < 0.3);
    CHECK(holder_factor(f, theta) < 10.0);
  }
}

TEST_CASE("garding: identity, bump and indefinite control") {
  TensorCutoff psi;
  psi.d = 1;
  psi.x0 = {kPi, 0};
  psi.xi0 = {1, 0};
  psi.rx = 1.0;
  psi.rxi = 0.5;
  psi.period = 2 * kPi;
  SymbolSpec q = psi.symbol(1);
  auto id = identity_symbol(1, 1);
  auto rid = garding_check(id, 3, line_grid(32), 1.0);
  CHECK(rid.min_quotient > 1 - 1e-12);

  std::vector<int> js;
  std::vector<double> defects;
  auto shifted = sum_symbols(q, id, 1.0, -0.1);
  for (int j = 3; j <= 7; ++j) {
    Grid g = line_grid(1L << (j + 2));
    auto rep = garding_check(q, j, g, 1.0);
    CHECK(rep.precondition_ok);
    js.push_back(j);
    defects.push_back(rep.defect);
    auto neg = garding_check(shifted, j, g, 1.0);
    CHECK_FALSE(neg.precondition_ok);
    CHECK(neg.min_quotient < -0.09);
  }
  auto fit = fit_log2(js, defects);
  MESSAGE("garding defect slope " << fit.slope);
  CHECK(fit.slope <= -theta_star(1.0, 1) + 0.3);
}

TEST_CASE("paraproduct of a constant is the identity") {
  Grid g = line_grid(256);
  auto u = random_band(g, 2, 100, 5);
  std::vector<SampledField> a;
  cd vals[4] = {2.0, -1.0, 0.5, 3.0};
  for (auto v : vals) a.push_back(SampledField::scalar(g, [v](const Vec&) { return v; }));
  auto t = paraproduct(a, u);
  auto ref = matrix_multiplier(u, [&](const Vec&) {
    Mat m(2, 2);
    m << vals[0], vals[1], vals[2], vals[3];
    return m;
  });
  CHECK(rel_err(t, ref) < 1e-12);
}

TEST_CASE("paralinearization residuals") {
  Grid g = line_grid(256);
  SUBCASE("linear constant coefficients") {
    SystemSpec sys;
    sys.name = "linear";
    sys.N = 1;
    sys.F = [](double, const Vec&, const CVec& u, const Grad& v) -> CVec { return 2.0 * u + 3.0 * v[0]; };
    sys.d3F = [](double, const Vec&, const CVec&, const Grad&) { return Mat::Constant(1, 1, 2.0); };
    sys.d4F = [](double, const Vec&, const CVec&, const Grad&, int) { return Mat::Constant(1, 1, 3.0); };
    auto u = random_band(g, 1, 60, 9);
    for (auto& x : u.values_mut()) x = x.real();
    auto rep = paralinearize_residual(sys, u, 0, 2.0);
    CHECK(rep.residual_norm < 1e-8 * rep.input_norm);
  }
  SUBCASE("quadratic two-mode closed form") {
    SystemSpec sys;
    sys.name = "quadratic";
    sys.N = 1;
    sys.F = [](double, const Vec&, const CVec&, const Grad& v) -> CVec {
      CVec o(1);
      o[0] = 0.5 * v[0][0] * v[0][0];
      return o;
    };
    auto u = SampledField::scalar(g, [](const Vec& x) { return cd(std::sin(x[0]) + std::sin(16 * x[0]) / 16); });
    auto rep = paralinearize_residual(sys, u, 0, 2.0);
    auto ref = SampledField::scalar(g, [](const Vec& x) {
      double a = std::cos(x[0]), b = std::cos(16 * x[0]);
      return cd(0.5 * (a * a + b * b));
    });
    CHECK(rel_err(rep.residual, ref) < 1e-10);
  }
}
