#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "mlab/endgame.hpp"
#include "mlab/presets.hpp"

using namespace mlab;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

CMat random_mat(Eigen::Index n, double scale, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  CMat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = scale * cd(nd(rng), nd(rng));
  return m;
}

// constant-coefficient stand-in for the projected operators
RemainderOps toy_ops(Eigen::Index n, double gscale, unsigned seed) {
  RemainderOps o;
  o.j = 6;
  o.theta = 1.0;
  o.theta_p = theta_prime(1.0);
  CVec d(n);
  for (Eigen::Index i = 0; i < n; ++i) d[i] = cd(-0.5 - 0.1 * double(i), 1.0 + 0.2 * double(i));
  o.AE = d.asDiagonal();
  o.AH = CMat(CVec(d.conjugate()).asDiagonal()) * cd(0, 1);
  o.GE = random_mat(n, gscale, seed);
  o.GH = random_mat(n, gscale, seed + 1);
  o.PE = CMat::Identity(n, n);
  o.PH = CMat::Zero(n, n);
  o.outE = CVec::Zero(n);
  o.outH = CVec::Zero(n);
  o.v0 = CVec::Ones(n);
  return o;
}

}  // namespace

TEST_CASE("parameter windows name the violated inequality") {
  CHECK_NOTHROW(check_elliptic_window(2.5, 3.35, 1));
  CHECK(error_of([] { check_elliptic_window(1.5, 1.5, 1); }).find("s > 1 + d/2") != std::string::npos);
  CHECK(error_of([] { check_elliptic_window(2.5, 2.4, 1); }).find("s <= sigma") != std::string::npos);
  CHECK(error_of([] { check_elliptic_window(2.5, 3.5, 1); }).find("sigma < 2s - 1 - d/2") !=
        std::string::npos);
  CHECK(error_of([] { check_elliptic_window(2.0, 2.0, 2); }).find("s > 1 + d/2") != std::string::npos);

  CHECK_NOTHROW(check_transition_window(3.5, 3.5, 1));
  CHECK(error_of([] { check_transition_window(2.75, 3.5, 1); }).find("s > 3/2 + 3/4 + d/2") !=
        std::string::npos);
  CHECK(error_of([] { check_transition_window(3.5, 3.4, 1); }).find("3 + d/2 <= sigma") !=
        std::string::npos);
  CHECK(error_of([] { check_transition_window(3.5, 5.0, 1); }).find("sigma < 2s - 3/2 - d/2") !=
        std::string::npos);
}

TEST_CASE("theta defaults to s - 1 - d/2") {
  CHECK(resolve_theta(0.0, 2.5, 1) == doctest::Approx(1.0));
  CHECK(resolve_theta(-1.0, 3.0, 2) == doctest::Approx(1.0));
  CHECK(resolve_theta(0.7, 2.5, 1) == doctest::Approx(0.7));
}

TEST_CASE("propagator on a defective matrix matches the dense exponential") {
  CMat J = CMat::Zero(4, 4);
  for (int i = 0; i < 4; ++i) J(i, i) = cd(-0.3, 1.0);
  for (int i = 0; i < 3; ++i) J(i, i + 1) = 2.0;
  Propagator P(J);
  CHECK_FALSE(P.diagonalized());
  CVec v = CVec::LinSpaced(4, 1.0, 4.0);
  for (double t : {0.0, 0.1, 1.0, 3.5, -0.7}) {
    CVec ref = (t * J).exp() * v;
    CHECK((P.apply(t, v) - ref).norm() <= 1e-12 * ref.norm());
    CHECK((P.at(t) - (t * J).exp()).norm() <= 1e-12 * (t * J).exp().norm());
  }
}

TEST_CASE("propagator on a diagonalizable matrix") {
  CMat A = random_mat(5, 0.5, 3);
  Propagator P(A);
  CVec v = CVec::Ones(5);
  for (double t : {0.3, 2.0}) {
    CVec ref = (t * A).exp() * v;
    CHECK((P.apply(t, v) - ref).norm() <= 1e-10 * ref.norm());
  }
}

TEST_CASE("Duhamel iterates with G = 0 reduce to the free flow") {
  RemainderOps o = toy_ops(4, 0.0, 1);
  auto D = duhamel_iterate(o, 1.0, 2, 8);
  REQUIRE(D.truncation.size() == 2);
  for (double r : D.truncation) CHECK(r <= 1e-13);
  for (double r : D.reconstruction) CHECK(r <= 1e-13);
  CHECK(D.scale == doctest::Approx(std::pow(2.0, -3.0)));
}

TEST_CASE("Duhamel simplex terms reconstruct the direct solve") {
  RemainderOps o = toy_ops(4, 0.3, 7);
  for (int nodes : {8, 12}) {
    auto D = duhamel_iterate(o, 1.0, 2, nodes);
    for (double r : D.reconstruction) CHECK(r <= 1e-9);
    // second iterate gains at least a power of the scale on the first
    CHECK(D.contraction < 1.0);
    CHECK(D.contraction <= 2.0 * D.predicted);
  }
  CHECK_THROWS_AS(duhamel_iterate(o, 1.0, 4, 8), Error);
  CHECK_THROWS_AS(duhamel_iterate(o, 1.0, 2, 7), Error);
}

TEST_CASE("registered systems resolve by name") {
  SystemSpec s = make_preset("symmetric-hyperbolic");
  s.name = "registered-copy";
  register_system(s);
  SystemSpec r = make_preset("registered-copy");
  CHECK(r.N == s.N);
  CHECK(r.d == s.d);
  CVec u = s.u0;
  Grad v = s.zero_grad();
  v[0] = CVec::Ones(s.N);
  CHECK((r.F(0, s.x0, u, v) - s.F(0, s.x0, u, v)).norm() == 0.0);
  CHECK_THROWS_AS(make_preset("no-such-system"), Error);
}

TEST_CASE("burgers transition: bifurcating branch and its rate") {
  SystemSpec sys = make_preset("burgers-transition");
  DatumRecipe dr;
  dr.sigma = 3.5;
  dr.repair_polarization = false;
  FullDatum u = build_datum(sys, dr);
  auto geo = make_geometry(1, sys.x0, sys.xi0, 6, 0.05, 1.0);
  auto T = transition_symbols(sys, u, geo);
  CHECK(T.double_root);
  int bif = 0;
  for (const auto& b : T.branches) bif += b.bifurcating ? 1 : 0;
  CHECK(bif >= 1);
  CHECK(T.rates.zeta == doctest::Approx(1.0).epsilon(0.05));
  REQUIRE(T.branches.size() == 2);
  const auto& top = T.branches.front();
  // the pair splits by 2 zeta about a common shift
  CHECK(top.zeta_center - T.branches[1].zeta_center == doctest::Approx(2 * T.rates.zeta).epsilon(0.05));
  auto [zm, zp] = zeta_bracket(top, geo, 9);
  CHECK(zm <= top.zeta_center + 1e-9);
  CHECK(zp >= top.zeta_center - 1e-9);
}
