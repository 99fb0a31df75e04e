#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mlab/calculus.hpp"
#include "mlab/flow.hpp"
#include "mlab/presets.hpp"
#include "support.hpp"

using namespace mlab;
using namespace testing_support;

namespace {

SymbolSpec const_symbol(int N, Mat m) {
  return multiplier_symbol(1, N, [m](const Vec&) { return m; });
}

FullDatum cr_datum(int J, double sigma) {
  SystemSpec sys = make_preset("cr-elliptic");
  auto pol = polarization_select(sys, base_point(sys));
  SparseSpectrum w = bump_envelope(1, 0.3, 2 * kPi * 32, sys.x0);
  OscillatoryOpts o;
  o.sigma = sigma;
  o.J = J;
  auto osc = oscillatory_sum(w, o);
  return assemble_datum(pol.u1, matched_gradient(pol.u1, osc, sys.x0), osc, sys.x0);
}

EllipticSymbols constant_elliptic(const Mat& M0, const PipelineGeometry& geo) {
  EllipticSymbols S;
  S.j = geo.j;
  S.base = elliptic_split(M0);
  int N = int(M0.rows());
  Mat PE = S.base.P_E, PH = S.base.P_H;
  TensorCutoff sharp = geo.psi_sharp, flat = geo.psi_flat;
  auto mk = [&](const std::string& name, std::function<Mat(const Vec&, const Vec&)> f) {
    SymbolSpec s;
    s.name = name;
    s.d = 1;
    s.N = N;
    s.eval = f;
    return s;
  };
  S.M = mk("M", [=](const Vec& x, const Vec& xi) -> Mat { return sharp(x, xi) * M0; });
  S.P_E = mk("P_E", [=](const Vec& x, const Vec& xi) -> Mat { return flat(x, xi) * PE; });
  S.P_H = mk("P_H", [=](const Vec& x, const Vec& xi) -> Mat { return flat(x, xi) * PH; });
  S.ME = mk("M_E", [=](const Vec& x, const Vec& xi) -> Mat { return sharp(x, xi) * (PE * M0); });
  S.MH = mk("M_H", [=](const Vec& x, const Vec& xi) -> Mat { return sharp(x, xi) * (PH * M0); });
  return S;
}

}  // namespace

TEST_CASE("scalar identity generator decays exactly") {
  Grid g = line_grid(32);
  SampledField z0 = random_band(g, 1, 8, 3);
  Mat c(1, 1);
  c(0, 0) = 0.7;
  FlowProblem p;
  p.gen = symbol_generator(const_symbol(1, c), g, QuantOpts{}, SignTag::decay);
  p.z0 = z0;
  p.times = {0.5, 1.0, 3.0};
  auto tr = flow_solve(p);
  for (std::size_t i = 0; i < p.times.size(); ++i)
    CHECK(rel_err(tr.states[i], std::exp(-0.7 * p.times[i]) * z0) < 1e-10);
  CHECK(tr.oracle_ok);
  CHECK(tr.oracle_err < 1e-10);
}

TEST_CASE("fourier multiplier flow matches the diagonal solution") {
  Grid g = line_grid(128);
  SampledField z0 = random_band(g, 2, 40, 4);
  auto m = [](const Vec& xi) -> Mat {
    Mat a(2, 2);
    a << cd(std::sin(xi[0]), 0.3), 0.0, 0.0, cd(0.2 * std::cos(3 * xi[0]), -1.0);
    return a;
  };
  SymbolSpec a = multiplier_symbol(1, 2, m);
  a.x_independent = true;
  QuantOpts q;
  q.j = 3;
  q.kind = Quant::pdo;
  FlowProblem p;
  p.gen = symbol_generator(a, g, q, SignTag::decay, 0);
  p.z0 = z0;
  p.times = {1.0, 2.5};
  auto tr = flow_solve(p);
  CHECK(tr.oracle_err < 0);
  for (std::size_t i = 0; i < p.times.size(); ++i) {
    double t = p.times[i];
    SampledField ex = matrix_multiplier(z0, [&](const Vec& xi) -> Mat {
      Mat e = m(scaled(xi, 0.125));
      Mat r = Mat::Zero(2, 2);
      r(0, 0) = std::exp(-t * e(0, 0));
      r(1, 1) = std::exp(-t * e(1, 1));
      return r;
    });
    CHECK(rel_err(tr.states[i], ex) <= 1e-8);
  }
}

TEST_CASE("dense oracle agrees on n = 32 for an x-dependent symbol") {
  Grid g = line_grid(32);
  SymbolSpec a;
  a.name = "xdep";
  a.d = 1;
  a.N = 2;
  a.eval = [](const Vec& x, const Vec& xi) -> Mat {
    Mat m(2, 2);
    m << cd(std::cos(x[0]), 0.2 * xi[0]), 0.3 * std::sin(x[0] + xi[0]), cd(0, 0.5), 0.4;
    return m / (1.0 + 0.1 * xi[0] * xi[0]);
  };
  for (Quant k : {Quant::pdo, Quant::para}) {
    QuantOpts q;
    q.j = 1;
    q.kind = k;
    FlowProblem p;
    p.gen = symbol_generator(a, g, q, SignTag::decay);
    REQUIRE(p.gen.dense.has_value());
    p.z0 = random_band(g, 2, 10, 9);
    p.times = {0.3, 1.0, 2.0};
    auto tr = flow_solve(p);
    CHECK(tr.oracle_err <= 1e-7);
    CHECK(tr.oracle_ok);
  }
}

TEST_CASE("growth tag flips the sign") {
  Grid g = line_grid(16);
  Mat c(1, 1);
  c(0, 0) = 0.5;
  FlowProblem p;
  p.gen = symbol_generator(const_symbol(1, c), g, QuantOpts{}, SignTag::growth);
  p.z0 = random_band(g, 1, 4, 1);
  p.times = {2.0};
  auto tr = flow_solve(p);
  CHECK(tr.norms[0] / l2_norm(p.z0) == doctest::Approx(std::exp(1.0)).epsilon(1e-10));
  CHECK(std::string(sign_tag_name(SignTag::growth)) == "growth");
}

TEST_CASE("unbounded generators and step underflow are rejected") {
  Grid g = line_grid(32);
  Mat c(1, 1);
  c(0, 0) = 1e9;
  FlowProblem p;
  p.gen = symbol_generator(const_symbol(1, c), g, QuantOpts{}, SignTag::decay);
  p.z0 = random_band(g, 1, 4, 2);
  p.times = {1.0};
  CHECK_THROWS_AS(flow_solve(p), Error);
  c(0, 0) = 50.0;
  FlowProblem q = p;
  q.gen = symbol_generator(const_symbol(1, c), g, QuantOpts{}, SignTag::growth);
  q.h_min = 0.2;
  q.h0 = 0.25;
  CHECK_THROWS_AS(flow_solve(q), Error);
  FlowProblem bad = p;
  bad.times = {1.0, 0.5};
  CHECK_THROWS_AS(flow_solve(bad), Error);
}

TEST_CASE("time arithmetic") {
  CHECK(tstar_rates(8, 0.2, 0.01, 1.0) == doctest::Approx(8 * (0.2 * std::log(2.0) - 0.01)));
  CHECK(tstar_rates(8, 0.2, 0.01, 1.0) == doctest::Approx(1.029).epsilon(1e-3));
  CHECK(tstar_transition(10, 0.2, 0.01, 0.5) == doctest::Approx(2.268).epsilon(1e-3));
  // s - 1 - d/2 = 0.6 with d = 1 gives s = 2.1; 2s - 1 - d/2 - sigma = 0.2
  double s = 2.1, sigma = 2 * s - 1 - 0.5 - 0.2;
  CHECK(tfinal_elliptic(8, s, 1, sigma, 0.3) == doctest::Approx(3.234).epsilon(1e-3));
  CHECK(theta_prime(1.0) == 0.5);
  CHECK(std::isinf(tstar_rates(8, 0.2, 0.01, 0.0)));
}

TEST_CASE("scalar gaussian-in-time growth") {
  // 2^{j/2} i mu(2^{-j/2} t) with mu = i t zeta is the multiplier -t zeta
  Grid g = line_grid(32);
  double zeta = 0.8;
  Mat one(1, 1);
  one(0, 0) = zeta;
  Generator L0 = symbol_generator(const_symbol(1, one), g, QuantOpts{}, SignTag::growth);
  FlowProblem p;
  p.gen = scaled_generator(L0, [](double t) { return t; }, [](double t) { return t * t / 2; });
  p.z0 = random_band(g, 1, 6, 12);
  p.times = {0.5, 1.0, 2.0, 2.5};
  auto tr = flow_solve(p);
  double n0 = l2_norm(p.z0);
  for (std::size_t i = 0; i < p.times.size(); ++i)
    CHECK(std::abs(std::log(tr.norms[i] / n0) - zeta * p.times[i] * p.times[i] / 2) < 1e-9);
  CHECK(tr.oracle_err < 1e-9);
}

TEST_CASE("rate envelopes for a constant generator are tight") {
  Grid g = line_grid(64);
  Mat c(1, 1);
  c(0, 0) = 0.4;
  RateOpts o;
  o.theta = 1.0;
  o.psi_tilde = TensorCutoff{1, {kPi, 0}, {1, 0}, 1.0, 0.2, 2 * kPi};
  SampledField u0 = packet(g, {kPi, 0}, {8, 0}, 2.0);
  auto rep = garding_rates(const_symbol(1, c), 3, u0, 2.0, o);
  CHECK(rep.gamma_plus == doctest::Approx(0.4));
  CHECK(rep.gamma_minus == doctest::Approx(0.4));
  CHECK(rep.fitted_rate == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(rep.upper_ok);
  CHECK(rep.lower_ok);
  CHECK(rep.C_upper <= 1e-8);
}

TEST_CASE("packet on a localized bump grows at the lower rate") {
  int j = 4;
  Grid g = line_grid(256, 2 * kPi);
  TensorCutoff bump{1, {kPi, 0}, {1, 0}, 1.6, 0.5, 2 * kPi};
  double gm = 0.6;
  SymbolSpec Q;
  Q.name = "bump";
  Q.d = 1;
  Q.N = 2;
  Q.eval = [bump, gm](const Vec& x, const Vec& xi) -> Mat {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = gm * bump(x, xi);
    m(1, 1) = -0.2 * bump(x, xi);
    return m;
  };
  RateOpts o;
  o.theta = 1.0;
  o.psi_tilde = TensorCutoff{1, {kPi, 0}, {1, 0}, 0.4, 0.12, 2 * kPi};
  o.gamma_minus = gm;  // on supp psi~ the (1,1) entry is gm; the H entry is not tracked
  SampledField p = packet(g, {kPi, 0}, {16, 0}, 8.0);
  SampledField u0(g, 2);
  u0.set_component(0, p);
  auto rep = garding_rates(Q, j, u0, 3.0, o);
  CHECK(rep.gamma_plus == doctest::Approx(gm).epsilon(1e-6));
  CHECK(rep.lower_ok);
  CHECK(rep.upper_ok);
  CHECK(rep.fitted_rate > 0.9 * gm);
  SampledField zero(g, 2);
  CHECK_THROWS_AS(garding_rates(Q, j, zero, 1.0, o), Error);
}

TEST_CASE("elliptic rates of a constant elliptic matrix") {
  auto geo = make_geometry(1, {0, 0}, {1, 0}, 7, 0.1);
  Mat M0(2, 2);
  M0 << -1.0, 0.3, 0.0, 2.0;
  auto S = constant_elliptic(M0, geo);
  EllipticRateOpts o;
  // band edges of psi_sharp leak into slow modes at later times
  o.times = {0.5, 1, 1.5, 2};
  o.quant.kind = Quant::pdo;
  auto R = elliptic_rate_bounds(S, geo, o);
  CHECK(R.growth == doctest::Approx(1.0));
  CHECK(R.gamma_E == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(R.gamma_E_minus == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(R.gamma_H < R.gamma_E - R.half_gap);
  CHECK(R.meas_E == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(R.meas_E_minus == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("elliptic rates approach the center rate as delta shrinks") {
  SystemSpec sys = make_preset("cr-elliptic");
  FullDatum u = cr_datum(9, 2.0);
  int j = 7;
  std::vector<double> eu, el;
  EllipticRateOpts o;
  o.measure = false;
  for (double delta : {0.2, 0.1, 0.05}) {
    auto geo = make_geometry(1, sys.x0, sys.xi0, j, delta);
    auto S = elliptic_symbols(sys, u, geo, mollifier_epsilon(j, 0.6));
    auto R = elliptic_rate_bounds(S, geo, o);
    MESSAGE("delta " << delta << " gE " << R.gamma_E << " gE- " << R.gamma_E_minus << " gH "
                     << R.gamma_H << " growth " << R.growth << " half gap " << R.half_gap);
    eu.push_back(std::abs(R.gamma_E - R.growth));
    el.push_back(std::abs(R.gamma_E_minus - R.growth));
    CHECK(R.gamma_H < R.gamma_E);
    CHECK(R.gamma_E - R.gamma_H >= R.half_gap);
  }
  CHECK(eu[1] < eu[0]);
  CHECK(eu[2] < eu[1]);
  CHECK(el[1] < el[0]);
  CHECK(el[2] < el[1]);
}
