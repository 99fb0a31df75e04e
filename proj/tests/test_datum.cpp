#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mlab/datum.hpp"
#include "mlab/presets.hpp"
#include "support.hpp"

using namespace mlab;
using namespace testing_support;

namespace {

const double kBox = 2 * kPi * 32;

OscillatoryDatum default_osc(int J, double sigma = 2.0, double R = 0.3) {
  SparseSpectrum w = bump_envelope(1, R, kBox, {0, 0});
  OscillatoryOpts o;
  o.sigma = sigma;
  o.J = J;
  o.R = R;
  return oscillatory_sum(w, o);
}

FullDatum cr_datum(int J, double sigma, bool matched = true) {
  SystemSpec sys = make_preset("cr-elliptic");
  auto pol = polarization_select(sys, base_point(sys));
  auto osc = default_osc(J, sigma);
  Grad v0 = matched ? matched_gradient(pol.u1, osc, sys.x0) : sys.v0;
  return assemble_datum(pol.u1, v0, osc, sys.x0);
}

}  // namespace

TEST_CASE("amplitudes") {
  CHECK(amplitude(1, 2.0) == doctest::Approx(0.125).epsilon(1e-15));
  for (int j = 1; j < 6; ++j) CHECK(amplitude(j, 0.0) == doctest::Approx(1.0 / (1 + j)));
  CHECK(amplitude(61, 1.5) / amplitude(60, 1.5) == doctest::Approx(std::pow(2.0, -1.5)).epsilon(2e-2));
  CHECK_THROWS_AS(amplitude(0, 1.0), Error);
}

TEST_CASE("envelope and single term") {
  SparseSpectrum w = bump_envelope(1, 0.3, kBox, {0, 0});
  CHECK(std::abs(w({0, 0}) - 1.0) < 1e-14);
  double R = 0;
  for (auto& [m, v] : w.c) R = std::max(R, std::abs(w.freq(m)[0]));
  CHECK(R <= 0.3);
  OscillatoryOpts o;
  o.J = 0;
  o.a0 = 2.5;
  auto osc = oscillatory_sum(w, o);
  // the j = 0 summand still carries the unit carrier xi0
  for (double x : {0.0, 0.7, -3.1, 10.0}) {
    cd expect = 2.5 * std::exp(kI * x) * w({x, 0});
    CHECK(std::abs(osc.w_in({x, 0}) - expect) < 1e-13);
  }
  // sampled values agree with direct evaluation, including on a modulated grid
  Grid g = line_grid(256, 2 * kPi);
  g.origin = {-kPi, 0};
  g.carrier = {64, 0};
  auto full = default_osc(7);
  SampledField s = full.w_in.sample(g);
  double err = 0;
  for (std::size_t p = 0; p < g.size(); p += 17) {
    Vec x = g.point(p);
    cd direct = full.w_in(x) * std::exp(-kI * (x[0] - g.origin[0]) * 64.0);
    err = std::max(err, std::abs(s.value(0, p) - direct));
  }
  CHECK(err < 1e-11);
}

TEST_CASE("block isolation and norms") {
  auto osc = default_osc(9);
  auto br = block_norms(osc, 4, 9);
  CHECK(br.spread <= 1.5);
  for (double l : br.leak) CHECK(l < 1e-14);
  // ratio equals the envelope norm once phi_{j+1} = 1 on the shifted support
  for (double r : br.ratios) CHECK(r == doctest::Approx(osc.w.l2()).epsilon(1e-12));
  // anchor dominates the tail
  CHECK(std::abs(osc.w_in({0, 0})) > 0.5 * osc.a[0]);
  CHECK(std::abs(osc.w_in({0, 0}).imag()) < 1e-12);
}

TEST_CASE("separation conditions and truncation") {
  SparseSpectrum w = bump_envelope(1, 2.0, kBox, {0, 0});
  OscillatoryOpts o;
  o.R = 2.0;
  CHECK_THROWS_AS(oscillatory_sum(w, o), Error);
  SparseSpectrum w3 = bump_envelope(1, 0.3, kBox, {0, 0});
  OscillatoryOpts t;
  t.J = 12;
  t.max_freq = 1024;
  auto osc = oscillatory_sum(w3, t);
  CHECK(osc.opts.J == 9);
  CHECK(osc.warnings.size() == 1);
}

TEST_CASE("sobolev sharpness witness") {
  auto osc = default_osc(40, 2.0);
  auto at = sharpness_witness(osc, 2.0);
  auto above = sharpness_witness(osc, 2.1);
  CHECK(at.bounded);
  CHECK(above.growing);
  auto far = sharpness_witness(osc, 2.5);
  CHECK(far.growing);
}

TEST_CASE("polarization") {
  SystemSpec cr = make_preset("cr-elliptic");
  auto p0 = polarization_select(cr, base_point(cr));
  CHECK_FALSE(p0.repaired);
  CHECK((p0.u1 - cr.u0).norm() == 0.0);

  SystemSpec s3 = make_preset("paper-3x3-elliptic");
  SpectralPoint pt = base_point(s3);
  auto p = polarization_select(s3, pt);
  CHECK(p.repaired);
  CHECK(p.branch == "eigenvector");
  CHECK(p.proj_norm > p.tol);
  CHECK((p.split.P_E * s3.u0).norm() < 1e-12);
  CHECK(p.proj_norm / p.alpha == doctest::Approx(p.condition.norm()).epsilon(0.05));
  SpectralPoint p1 = pt;
  p1.u = p.u1;
  CHECK(ellipticity_classify(s3, p1).elliptic);
  // alpha -> 0 extrapolation of ||P_E u1|| / alpha
  std::vector<double> q;
  for (double a : {1e-2, 1e-3}) {
    CVec u1 = s3.u0 + a * p.e;
    q.push_back((elliptic_projector(s3, pt, p.split, u1) * u1).norm() / a);
  }
  double extrap = 2 * q[1] - q[0] + (q[0] - q[1]) * (1.0 - 1.0 / 9.0) / 1.0 * 0.0;
  CHECK(std::abs(q[1] - p.condition.norm()) < 2e-3);
  CHECK(std::abs(extrap - p.condition.norm()) < 2e-2);
}

TEST_CASE("assembled datum anchors") {
  SystemSpec s3 = make_preset("paper-3x3-elliptic");
  auto p = polarization_select(s3, base_point(s3));
  SparseSpectrum w = bump_envelope(2, 0.3, 2 * kPi * 8, s3.x0);
  OscillatoryOpts o;
  o.J = 5;
  o.sigma = 2.5;
  auto osc = oscillatory_sum(w, o);
  Grad v0 = s3.v0;
  v0[0](1) = 0.4;
  v0[1](2) = -0.2;
  FullDatum u = assemble_datum(p.u1, v0, osc, s3.x0, 0.8);
  auto chk = check_anchors(u);
  CHECK(chk.value_err < 1e-10);
  CHECK(chk.grad_err < 1e-8);
  // corrector vanishes for the matching gradient
  Grad vm;
  for (int k = 0; k < 2; ++k) vm[k] = p.u1 * (osc.w_in.derivative(s3.x0, k) / std::abs(osc.w_in(s3.x0)));
  FullDatum u2 = assemble_datum(p.u1, vm, osc, s3.x0, 0.8);
  CHECK(u2.corr[0].norm() < 1e-14);
  CHECK(u2.corr[1].norm() < 1e-14);
  CHECK(u2.corrector({0.3, -0.2}).norm() < 1e-14);
}

TEST_CASE("elliptic component ratio is stable in j") {
  SystemSpec sys = make_preset("cr-elliptic");
  FullDatum u = cr_datum(9, 2.0);
  std::vector<double> ratios;
  for (int j = 5; j <= 9; ++j) {
    auto geo = make_geometry(1, sys.x0, sys.xi0, j, 0.1);
    auto b = elliptic_component_bound(sys, u, geo, mollifier_epsilon(j, 0.6));
    CHECK(b.precondition_ok);
    CHECK(b.corrector_norm == 0.0);
    ratios.push_back(b.ratio);
  }
  double lo = *std::min_element(ratios.begin(), ratios.end());
  double hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(lo > 0.1);
  CHECK(hi / lo <= 2.0);
}

TEST_CASE("corrector contribution decays faster than a_j") {
  SystemSpec sys = make_preset("cr-elliptic");
  FullDatum u = cr_datum(9, 2.0, false);
  CHECK(u.corr[0].norm() > 0.1);
  std::vector<double> c;
  for (int j = 5; j <= 9; ++j) {
    auto geo = make_geometry(1, sys.x0, sys.xi0, j, 0.1);
    c.push_back(elliptic_component_bound(sys, u, geo, 0.0).corrector_norm);
  }
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] < 0.5 * c[i - 1]);
  CHECK(c.back() < 1e-4);
}

TEST_CASE("para and pdo localization agree at high j") {
  SystemSpec sys = make_preset("cr-elliptic");
  FullDatum u = cr_datum(9, 2.0);
  auto geo = make_geometry(1, sys.x0, sys.xi0, 8, 0.1);
  SampledField a = localized_datum(u, geo, Quant::para);
  SampledField b = localized_datum(u, geo, Quant::pdo);
  CHECK(rel_err(a, b) < 1e-2);
}

TEST_CASE("misplaced observation cutoff trips the precondition") {
  SystemSpec sys = make_preset("cr-elliptic");
  FullDatum u = cr_datum(9, 2.0);
  double prev = 1e300;
  for (int j = 6; j <= 8; ++j) {
    auto geo = make_geometry(1, sys.x0, sys.xi0, j, 0.1);
    double good = elliptic_component_bound(sys, u, geo, 0.0).ratio;
    geo.psi_tilde.xi0 = {1.3, 0};
    auto b = elliptic_component_bound(sys, u, geo, 0.0);
    CHECK_FALSE(b.precondition_ok);
    CHECK(b.ratio < 1e-2 * good);
    CHECK(b.ratio < prev);
    prev = b.ratio;
  }
}

TEST_CASE("leading-term approximation error decays like 2^-j") {
  SystemSpec sys = make_preset("rotating-elliptic");
  SpectralPoint pt = base_point(sys);
  // the split is recomputed per frequency: the eigenvalues move too far for fixed contours
  auto P = [&](const Vec& xi) {
    SpectralPoint q = pt;
    q.xi = xi;
    return elliptic_split(principal_M(sys, q, sys.u0)).P_E;
  };
  SparseSpectrum w = bump_envelope(2, 0.3, 2 * kPi * 8, sys.x0);
  std::vector<int> js;
  std::vector<double> errs;
  for (int j = 6; j <= 10; ++j) {
    auto geo = make_geometry(2, sys.x0, sys.xi0, j, 0.2, 1.0, 64);
    js.push_back(j);
    errs.push_back(approx_datum_error(w, sys.u0, P, geo, 64));
  }
  auto fit = fit_log2(js, errs);
  MESSAGE("approx:datum slope " << fit.slope);
  CHECK(fit.slope > -1.3);
  CHECK(fit.slope < -0.7);
  // in one dimension P_E does not depend on |xi| and only the spectral tail of psi1 is left
  SystemSpec cr = make_preset("cr-elliptic");
  SpectralPoint pc = base_point(cr);
  auto Pc = [&](const Vec& xi) {
    SpectralPoint q = pc;
    q.xi = xi;
    return elliptic_split(principal_M(cr, q, cr.u0)).P_E;
  };
  std::vector<double> e1;
  for (int j = 6; j <= 9; ++j) {
    auto geo1 = make_geometry(1, cr.x0, cr.xi0, j, 0.2, 1.0, 256);
    e1.push_back(approx_datum_error(bump_envelope(1, 0.3, kBox, cr.x0), cr.u0, Pc, geo1, 256));
  }
  for (std::size_t i = 1; i < e1.size(); ++i) CHECK(e1[i] < 0.25 * e1[i - 1]);
  CHECK(e1.back() < 1e-5);
}
