#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "mlab/calculus.hpp"
#include "mlab/presets.hpp"
#include "mlab/spectral.hpp"
#include "support.hpp"

using namespace mlab;
using namespace testing_support;

namespace {

Mat mat2(cd a, cd b, cd c, cd d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

SystemSpec linear_system(const Mat& A) {
  SystemSpec s;
  s.name = "linear";
  s.d = 1;
  s.N = int(A.rows());
  s.F = [A](double, const Vec&, const CVec&, const Grad& v) -> CVec { return A * v[0]; };
  s.u0 = CVec::Zero(s.N);
  s.v0 = {CVec::Zero(s.N), CVec()};
  return s;
}

SampledField burgers_datum(const Grid& g) {
  return SampledField::from_function(g, 2, [](const Vec& x) {
    CVec u(2);
    u << 1.0 + 0.3 * std::sin(x[0]), 0.0;
    return u;
  });
}

}  // namespace

TEST_CASE("principal symbol") {
  SystemSpec tr;
  tr.d = 1;
  tr.N = 1;
  tr.F = [](double, const Vec&, const CVec&, const Grad& v) -> CVec { return v[0]; };
  tr.u0 = CVec::Zero(1);
  tr.v0 = {CVec::Zero(1), CVec()};
  CHECK(std::abs(principal_symbol(tr, 0, {0, 0}, tr.u0, tr.v0, {2.5, 0})(0, 0) - 2.5) < 1e-8);

  auto s = make_preset("paper-3x3-elliptic");
  auto p = base_point(s);
  Mat Ai = kI * principal_symbol(s, 0, p.x, p.u, p.v, p.xi);
  Mat ref = Mat::Zero(3, 3);
  ref(0, 1) = kI;
  ref(1, 0) = -kI;
  CHECK((Ai - ref).norm() < 1e-12);
  Mat A2 = principal_symbol(s, 0, p.x, p.u, p.v, {2.0, 0.6});
  Mat A1 = principal_symbol(s, 0, p.x, p.u, p.v, {1.0, 0.3});
  CHECK((A2 - 2.0 * A1).norm() < 1e-12);
}

TEST_CASE("ellipticity classification") {
  CHECK_FALSE(ellipticity_classify(make_preset("symmetric-hyperbolic"), base_point(make_preset("symmetric-hyperbolic"))).elliptic);
  auto s3 = make_preset("paper-3x3-elliptic");
  auto v3 = ellipticity_classify(s3, base_point(s3));
  CHECK(v3.elliptic);
  CHECK(std::abs(v3.max_imag - 1.0) < 1e-12);
  auto jordan = linear_system(mat2(1, 1, 0, 1));
  CHECK_FALSE(ellipticity_classify(jordan, base_point(jordan)).elliptic);
  for (auto name : {"cr-elliptic", "rotating-elliptic"}) {
    auto s = make_preset(name);
    CHECK(ellipticity_classify(s, base_point(s)).elliptic);
  }
}

TEST_CASE("characteristic jets") {
  Grid g = line_grid(64);
  SUBCASE("time derivative against explicit step") {
    auto s = make_preset("cr-elliptic");
    auto u = SampledField::from_function(g, 2, [](const Vec& x) {
      CVec r(2);
      r << 0.5 + 0.3 * std::cos(x[0]), 0.2 * std::sin(2 * x[0]);
      return r;
    });
    Vec x{0.7, 0};
    cd lam(0.3, 0.2);
    auto jet = char_jet(s, u, x, {1, 0}, lam);
    cd fd = char_dt_oracle(s, u, x, {1, 0}, lam);
    CHECK(std::abs(jet.dt - fd) < 1e-4 * std::abs(fd));
    Mat A = principal_symbol(s, 0, x, interpolate(u, x), {interpolate(gradient(u, 0), x), CVec()}, {1, 0});
    CHECK(std::abs(jet.P - (A - lam * Mat::Identity(2, 2)).determinant()) < 1e-10);
    // lambda derivative against differences of the determinant
    double h = 1e-5;
    cd dl = ((A - (lam + h) * Mat::Identity(2, 2)).determinant() - (A - (lam - h) * Mat::Identity(2, 2)).determinant()) / (2 * h);
    CHECK(std::abs(jet.dl - dl) < 1e-8);
  }
  SUBCASE("autonomous decoupled system") {
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = 1;
    D(1, 1) = 2;
    auto s = linear_system(D);
    auto u = random_band(g, 2, 5, 3);
    auto jet = char_jet(s, u, {0.3, 0}, {1, 0}, 0.5);
    CHECK(std::abs(jet.dt) < 1e-9);
  }
  SUBCASE("burgers datum jets") {
    auto s = make_preset("burgers-transition");
    auto u = burgers_datum(g);
    Vec x{0.4, 0};
    cd lam = 1.0 + 0.3 * std::sin(0.4);
    auto jet = char_jet(s, u, x, {1, 0}, lam);
    CHECK(std::abs(jet.dt) < 1e-8);
    CHECK(std::abs(jet.dll - 2.0) < 1e-8);
    CHECK(std::abs(jet.dtt.real() * jet.dll.real() - std::pow(jet.dtl.real(), 2) - 4.0) < 1e-4);
    cd fd = char_dt_oracle(s, u, x, {1, 0}, lam + 0.1);
    auto jet2 = char_jet(s, u, x, {1, 0}, lam + 0.1);
    CHECK(std::abs(jet2.dt - fd) < 1e-4 * std::abs(fd));
  }
}

TEST_CASE("transition classifier") {
  Grid g = line_grid(64);
  TransitionRegion region;
  for (double x : {0.2, 0.6, 1.0, 1.4}) region.xs.push_back({x, 0});
  region.xis = {{1, 0}, {-1, 0}};
  auto bt = make_preset("burgers-transition");
  auto rep = transition_classify(bt, burgers_datum(g), region);
  CHECK(rep.transitional());
  CHECK(std::abs(rep.margin - 4.0) < 1e-3);

  auto cr = make_preset("cr-elliptic");
  auto crd = SampledField::from_function(g, 2, [](const Vec&) {
    CVec r(2);
    r << 1.0, 0.0;
    return r;
  });
  CHECK(transition_classify(cr, crd, region).hyperbolic_at_0 == Verdict::fail);

  auto sh = make_preset("symmetric-hyperbolic");
  auto shr = transition_classify(sh, crd, region);
  CHECK(shr.hyperbolic_at_0 == Verdict::pass);
  CHECK(shr.diagonalizable == Verdict::pass);
  CHECK(shr.double_root == Verdict::fail);
}

TEST_CASE("bifurcation rates") {
  auto r = bifurcation_rates([](double t) { return mat2(0, -t, t, 0); });
  CHECK(std::abs(r.zeta - 1.0) < 1e-6);
  CHECK(std::abs(r.imag_slope_fd - r.zeta) < 1e-3 * r.zeta);
  CHECK_THROWS_AS(bifurcation_rates([](double t) { return mat2(0, t, t, 0); }), Error);
  auto r3 = bifurcation_rates([](double t) { return mat2(0, -3.0 * t, 3.0 * t, 0); });
  CHECK(std::abs(r3.zeta - 3.0) < 1e-5);
}

TEST_CASE("contour projectors") {
  Mat D = mat2(1, 0, 0, -1);
  auto S = contour_projectors(D, {{1.0, 0.5}}, {{-1.0, 0.5}});
  CHECK((S.P_E - mat2(1, 0, 0, 0)).norm() < 1e-12);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    int n = 4;
    Mat V(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) V(a, b) = cd(nd(rng), nd(rng));
    Mat L = Mat::Zero(n, n);
    cd eig[4] = {cd(-2, 1), cd(0.5, 0), cd(1.5, -1), cd(3, 2)};
    for (int a = 0; a < n; ++a) L(a, a) = eig[a];
    Mat M = V * L * V.inverse();
    auto sp = elliptic_split(M);
    Mat E = Mat::Zero(n, n);
    E(0, 0) = 1;
    Mat ref = V * E * V.inverse();
    CHECK((sp.P_E - ref).norm() < 1e-9 * std::max(1.0, ref.norm()));
    CHECK(sp.idempotence_err < 1e-9 * ref.norm() * ref.norm());
    CHECK(sp.completeness_err < 1e-9 * ref.norm());
    CHECK(sp.commutator_err < 1e-8 * M.norm() * ref.norm());
    CHECK(std::abs(sp.lambda0 - eig[0]) < 1e-9);
    CHECK(sp.separation > 0);
  }
  CHECK_THROWS_AS(contour_projectors(D, {{0.0, 1.0}}, {}), Error);
}

TEST_CASE("3x3 example: projector kills the base state") {
  auto s = make_preset("paper-3x3-elliptic");
  auto p = base_point(s);
  Mat M = kI * principal_symbol(s, 0, p.x, p.u, p.v, p.xi);
  auto sp = elliptic_split(M);
  CHECK(std::abs(sp.lambda0 - cd(-1, 0)) < 1e-12);
  CHECK((sp.P_E * s.u0).norm() < 1e-12);
  CVec e(3);
  e << 1, kI, 0;
  e /= e.norm();
  CHECK((sp.P_E * e - e).norm() < 1e-10);
}

TEST_CASE("puiseux exponents") {
  auto half = puiseux_probe([](double t) { return mat2(0, 1, t, 0); }, 0.0);
  CHECK(std::abs(half.slope - 0.5) < 0.025);
  CHECK(half.consistent);
  auto third = puiseux_probe([](double t) {
    Mat m = Mat::Zero(3, 3);
    m(0, 1) = 1;
    m(1, 2) = 1;
    m(2, 0) = t;
    return m;
  }, 0.0);
  CHECK(std::abs(third.slope - 1.0 / 3) < 1.0 / 60);
  CHECK(third.multiplicity == 3);
  auto simple = puiseux_probe([](double t) { return mat2(t, 0, 0, 1); }, 0.0);
  CHECK(std::abs(simple.slope - 1.0) < 0.05);
}

TEST_CASE("diagonalizer") {
  TensorCutoff patch;
  patch.d = 1;
  patch.x0 = {kPi, 0};
  patch.xi0 = {1, 0};
  patch.rx = 2.0;
  patch.rxi = 0.5;
  patch.period = 2 * kPi;
  auto diagM = [](const Vec& x, const Vec& xi) { return mat2(xi[0], 0, 0, 3.0 + std::cos(x[0])); };
  auto D0 = diagonalizer(1, 2, diagM, patch);
  CHECK((D0.Q({kPi, 0}, {1, 0}) - Mat::Identity(2, 2)).norm() < 1e-12);

  auto M = [](const Vec& x, const Vec& xi) {
    double a = 0.5 + 0.2 * std::cos(x[0]);
    return mat2(1.0, a * xi[0], -1.0, 1.0);
  };
  auto D = diagonalizer(1, 2, M, patch);
  CHECK(D.max_offdiag < 1e-8);
  CHECK(D.max_condition <= 50);

  std::vector<int> js;
  std::vector<double> v;
  for (int j = 6; j <= 10; ++j) {
    Grid g = line_grid(128);
    g.carrier = {1L << j, 0};
    auto f = packet(g, {kPi - 0.7, 0}, {std::ldexp(1.0, j), 0}, 4.0);
    SampledField f2(g, 2);
    f2.set_component(0, f);
    f2.set_component(1, f);
    QuantOpts o;
    o.j = j;
    o.kind = Quant::pdo;
    auto r = apply_op(D.Qinv, apply_op(D.Q, f2, o), o) - f2;
    js.push_back(j);
    v.push_back(l2_norm(r) / l2_norm(f2));
  }
  auto fit = fit_log2(js, v);
  MESSAGE("Q^{-1}Q - Id slope " << fit.slope);
  CHECK(std::abs(fit.slope + 1) < 0.3);
}

TEST_CASE("scaled triangularization") {
  Mat N0 = mat2(1, 2, 2, -1);
  CHECK(triangularize_scaled(N0, 0.3).max_offdiag < 1e-12);
  Mat J = mat2(0, 1, 0, 0);
  auto T = triangularize_scaled(J, 0.1);
  CHECK(std::abs(T.max_offdiag - 0.1) < 1e-12);
  Mat M3 = Mat::Zero(3, 3);
  M3 << -1, 2, 0.5, 0, -1, 3, 0, 0, 0.5;
  for (double delta : {0.1, 0.01}) {
    auto t3 = triangularize_scaled(M3, delta);
    Mat h = (t3.Mt + t3.Mt.adjoint()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    auto ev = es.eigenvalues();
    CHECK(std::abs(ev(0) + 1) < 10 * std::pow(delta, 1.0 / 3));
    CHECK(std::abs(ev(2) - 0.5) < 10 * std::pow(delta, 1.0 / 3));
  }
}
