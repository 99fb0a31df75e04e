#include "mlab/suites.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "mlab/calculus.hpp"
#include "mlab/presets.hpp"

namespace mlab {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Grid line(long n, double L = 2 * kPi) {
  Grid g;
  g.d = 1;
  g.n = n;
  g.L = L;
  return g;
}

SampledField random_band(const Grid& g, int N, double kmax, std::uint64_t seed) {
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

SampledField packet(const Grid& g, const Vec& x0, const Vec& xi, double w) {
  return SampledField::scalar(g, [&](const Vec& x) {
    double r2 = 0;
    for (int a = 0; a < g.d; ++a) {
      double t = std::remainder(x[a] - x0[a], g.L);
      r2 += t * t;
    }
    return std::exp(-w * r2) * std::exp(kI * dot(x, xi, g.d));
  });
}

Mat mat2(cd a, cd b, cd c, cd d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

std::vector<int> or_default(const std::vector<int>& js, std::vector<int> def) {
  return js.empty() ? def : js;
}

double max_over_first(const std::vector<double>& m) {
  if (m.empty() || !(m.front() > 0)) return std::numeric_limits<double>::infinity();
  return *std::max_element(m.begin(), m.end()) / m.front();
}

double spread_of(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / std::max(*lo, 1e-300);
}

}  // namespace

Check check_le(std::string name, double v, double lim) {
  return Check{std::move(name), v, "<=", lim, 0.0, v <= lim};
}
Check check_ge(std::string name, double v, double lim) {
  return Check{std::move(name), v, ">=", lim, 0.0, v >= lim};
}
Check check_within(std::string name, double v, double lo, double hi) {
  return Check{std::move(name), v, "within", lo, hi, v >= lo && v <= hi};
}
Check check_true(std::string name, bool ok) {
  return Check{std::move(name), ok ? 1.0 : 0.0, "==", 1.0, 0.0, ok};
}

void CriterionResult::finish() {
  checks_pass = !checks.empty();
  for (const auto& c : checks) checks_pass = checks_pass && c.pass;
  within_budget = seconds <= budget;
  pass = checks_pass && within_budget;
}

// ---------------------------------------------------------------- 1 to 8

CriterionResult dyadic_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 1;
  R.title = "dyadic partition, LP reconstruction, exchange identity";
  R.budget = 10;
  const DyadicFamily& fam = o.fam;
  double tele = 0;
  for (double r = 0; r < 3000; r += 0.37)
    for (int j0 : {0, 1, 4, 9}) {
      double s = 0;
      for (int k = 0; k <= j0; ++k) s += fam.phi(k, r);
      tele = std::max(tele, std::abs(s - fam.phi0(std::ldexp(r, -j0))));
    }
  Grid g = line(512, 2 * kPi * 4);
  auto f = random_band(g, 1, 60.0, o.seed);
  SampledField acc(g, 1);
  for (int k = 0; k <= 8; ++k) acc += lp_project(f, fam, k);
  double lp = rel_err(acc, f);

  Grid h = line(256, 2 * kPi * 8);
  auto fh = random_band(h, 1, 10.0, o.seed + 1);
  auto chi = [](const Vec& xi) { return cd(std::exp(-xi[0] * xi[0])); };
  double hid = 0;
  for (int j : {0, 2, 3}) {
    auto lhs = fourier_multiplier(hyperbolic_rescale(fh, j, Direction::forward).field, chi);
    double sc = std::ldexp(1.0, -j);
    auto rhs = hyperbolic_rescale(
                   fourier_multiplier(fh, [&](const Vec& xi) { return chi(scaled(xi, sc)); }), j,
                   Direction::forward)
                   .field;
    hid = std::max(hid, rel_err(lhs, rhs));
  }
  R.checks = {check_le("telescoping max error", tele, 1e-12),
              check_le("LP reconstruction relative error", lp, 1e-12),
              check_le("exchange identity residual", hid, 1e-10)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult quantization_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 2;
  R.title = "FFT quantization against dense matrices";
  R.budget = 60;
  double worst = 0;
  json cases = json::array();
  struct Case {
    int d;
    long n;
    int N;
  };
  for (Case c : {Case{1, 64, 3}, Case{1, 32, 2}, Case{2, 8, 3}}) {
    Grid g;
    g.d = c.d;
    g.n = c.n;
    int N = c.N;
    SymbolSpec a;
    a.name = "mixed";
    a.d = c.d;
    a.N = N;
    int d = c.d;
    a.eval = [d, N](const Vec& x, const Vec& xi) -> Mat {
      Mat m(N, N);
      double r = jbracket(xi, d);
      for (int p = 0; p < N; ++p)
        for (int q = 0; q < N; ++q)
          m(p, q) = std::cos(x[0] * (p + 1) + x[1] * q) / r +
                    kI * std::sin(2 * x[0] + x[1] + p - q) * xi[0] / (r * r) +
                    (p == q ? std::exp(std::sin(x[0])) * 0.3 : 0.0);
      return m;
    };
    auto f = random_band(g, N, 1e9, o.seed + std::uint64_t(c.n) + std::uint64_t(N));
    for (Quant kind : {Quant::pdo, Quant::para})
      for (int j : {0, 2, 3}) {
        QuantOpts q;
        q.j = j;
        q.kind = kind;
        double e = rel_err(apply_op(a, f, q), apply_dense(assemble_dense(a, g, q), f));
        worst = std::max(worst, e);
        cases.push_back({{"d", c.d}, {"n", c.n}, {"N", N}, {"j", j},
                         {"kind", kind == Quant::pdo ? "pdo" : "para"}, {"error", e}});
      }
  }
  Grid g = line(64);
  auto f = random_band(g, 1, 1e9, o.seed + 7);
  auto m = scalar_multiplier(1, [](const Vec& xi) { return cd(xi[0] * xi[0] / (1 + xi[0] * xi[0])); });
  double pp = 0;
  for (int j : {0, 3, 5}) pp = std::max(pp, rel_err(apply_para(m, j, f), apply_pdo(m, j, f)));
  R.detail["cases"] = cases;
  R.checks = {check_le("FFT vs dense max relative error", worst, 1e-10),
              check_le("para vs pdo, x-independent symbol", pp, 1e-12)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult lannes_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 3;
  R.title = "pdo minus para of sigma(u, xi): j-sweep slope and decomposition identity";
  R.budget = 120;
  double s = 2.0;
  int d = 1;
  Grid g = line(2048);
  g.origin = {-kPi, 0};
  // cosine series with |u_k| = k^{-s-1/2}: H^{s'} for every s' < s, sup tail 2^{-j(s-1/2)}
  auto u = SampledField::scalar(g, [&](const Vec& x) {
    double a = 0;
    for (long k = 1; k < g.n / 2; ++k) a += std::pow(double(k), -s - 0.5) * std::cos(double(k) * x[0]);
    return cd(a);
  });
  auto a = composed_separable(
      1, 1, [](const CVec& v) { return v(0) + 0.5 * v(0) * v(0); },
      [](const Vec& xi) -> Mat { return Mat::Constant(1, 1, cd(xi[0] / jbracket(xi, 1))); }, u, s);
  std::vector<int> js = or_default(o.js, {3, 4, 5, 6, 7});
  std::vector<double> v;
  double idr = 0;
  for (int j : js) {
    auto f = SampledField::scalar(g, [&](const Vec& x) {
      return std::exp(-4.0 * x[0] * x[0]) * std::exp(kI * std::ldexp(1.0, j) * x[0]);
    });
    auto dec = para_pdo_difference(a, j, f, o.fam);
    v.push_back(l2_norm(dec.residual) / l2_norm(f));
    idr = std::max(idr, dec.identity_residual / std::max(1.0, l2_norm(dec.residual)));
  }
  auto fit = fit_log2(js, v);
  double target = -(s - 0.5 * d);
  R.detail = {{"s", s}, {"js", js}, {"norms", v}, {"slope", fit.slope}, {"target", target}};
  R.checks = {check_within("slope", fit.slope, target - 0.5, target + 0.5),
              check_le("decomposition identity residual", idr, 1e-10)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult composition_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 4;
  R.title = "composition remainder and commutator remainder slopes";
  R.budget = 120;
  auto m1 = scalar_multiplier(1, [](const Vec& xi) { return cd(std::exp(-(xi[0] - 1.5) * (xi[0] - 1.5))); });
  auto a2 = function_symbol(1, 1, [](const Vec& x) {
    Mat m(1, 1);
    m(0, 0) = 1.0 + 0.5 * std::cos(x[0]) + 0.3 * std::sin(2 * x[0]);
    return m;
  });
  std::vector<int> js = or_default(o.js, {3, 4, 5, 6, 7});
  for (int r : {1, 2}) {
    std::vector<double> v;
    for (int j : js) {
      Grid g = line(1L << (j + 3));
      auto f = packet(g, {kPi, 0}, {std::ldexp(1.0, j), 0}, 2.0);
      v.push_back(compose_expand(m1, a2, r, j, f, Quant::pdo, o.fam).remainder_norm);
    }
    auto fit = fit_log2(js, v);
    R.detail["composition_r" + std::to_string(r)] = {{"norms", v}, {"slope", fit.slope}};
    R.checks.push_back(check_within("composition slope r = " + std::to_string(r), fit.slope,
                                    -r - 0.3, -r + 0.3));
  }
  auto chi = [](const Vec& z) { return cd(smooth_cut(std::abs(z[0] - 1.0), 0.25, 0.5)); };
  std::vector<int> cj = {4, 5, 6, 7, 8};
  for (double theta : {0.5, 1.5}) {
    Grid g = line(4096);
    auto f = SampledField::scalar(g, [&](const Vec& x) { return cd(std::pow(std::abs(std::sin(x[0])), theta)); });
    int order = int(std::floor(theta));
    std::vector<double> v;
    for (int j : cj) v.push_back(commutator_remainder_norm(chi, f, j, order, 40, unsigned(o.seed)));
    auto fit = fit_log2(cj, v);
    char name[64];
    std::snprintf(name, sizeof name, "commutator slope theta = %.1f", theta);
    R.detail[name] = {{"norms", v}, {"slope", fit.slope}};
    R.checks.push_back(check_within(name, fit.slope, -theta - 0.3, -theta + 0.3));
  }
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult garding_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 5;
  R.title = "Garding defect slope and indefinite control";
  R.budget = 120;
  TensorCutoff psi{1, {kPi, 0}, {1, 0}, 1.0, 0.5, 2 * kPi};
  SymbolSpec q = psi.symbol(1);
  auto shifted = sum_symbols(q, identity_symbol(1, 1), 1.0, -0.1);
  std::vector<int> js = or_default(o.js, {3, 4, 5, 6, 7});
  std::vector<double> defects, negs;
  bool all_ok = true, detected = true;
  for (int j : js) {
    Grid g = line(1L << (j + 2));
    auto rep = garding_check(q, j, g, 1.0, Quant::para, o.fam);
    all_ok = all_ok && rep.precondition_ok;
    defects.push_back(rep.defect);
    auto neg = garding_check(shifted, j, g, 1.0, Quant::para, o.fam);
    negs.push_back(neg.min_quotient);
    detected = detected && !neg.precondition_ok && neg.min_quotient < 0;
  }
  auto fit = fit_log2(js, defects);
  double ts = theta_star(1.0, 1);
  R.detail = {{"js", js}, {"defects", defects}, {"slope", fit.slope}, {"theta_star", ts},
              {"control_min_quotient", negs}};
  R.checks = {check_true("psd precondition holds", all_ok),
              check_le("defect slope", fit.slope, -ts + 0.3),
              check_true("indefinite control detected at every j", detected)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult rates_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 6;
  R.title = "growth-rate envelopes up to t*";
  R.budget = 180;
  // x-dependent bump generator with a tracked growing component
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
  RateOpts ro;
  ro.theta = 1.0;
  ro.psi_tilde = TensorCutoff{1, {kPi, 0}, {1, 0}, 0.4, 0.12, 2 * kPi};
  ro.gamma_minus = gm;
  ro.dense_oracle = o.dense_oracle;
  std::vector<int> js = or_default(o.js, {3, 4, 5});
  bool upper = true, lower = true, oracle = true;
  json rows = json::array();
  for (int j : js) {
    Grid g = line(1L << (j + 4));
    SampledField p = packet(g, {kPi, 0}, {std::ldexp(1.0, j), 0}, 8.0);
    SampledField u0(g, 2);
    u0.set_component(0, p);
    auto rep = garding_rates(Q, j, u0, 3.0, ro);
    upper = upper && rep.upper_ok;
    lower = lower && rep.lower_ok;
    for (const auto& n : rep.notes) oracle = oracle && n != "dense oracle mismatch";
    json jr = to_json(rep);
    jr["j"] = j;
    rows.push_back(jr);
  }
  R.detail["runs"] = rows;
  R.checks = {check_true("upper envelope with 2^{-j theta*} slack", upper),
              check_true("lower envelope with 9/10 prefactor", lower),
              check_true("dense oracle agreement", oracle)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult spectral_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 7;
  R.title = "projectors, 3x3 example, polarization, Puiseux exponents";
  R.budget = 30;
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> nd;
  double idem = 0, comp = 0;
  for (int trial = 0; trial < 10; ++trial) {
    int n = 4;
    Mat V(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) V(a, b) = cd(nd(rng), nd(rng));
    Mat L = Mat::Zero(n, n);
    cd eig[4] = {cd(-2, 1), cd(0.5, 0), cd(1.5, -1), cd(3, 2)};
    for (int a = 0; a < n; ++a) L(a, a) = eig[a];
    auto sp = elliptic_split(V * L * V.inverse());
    double sc = std::max(1.0, sp.P_E.norm());
    idem = std::max(idem, sp.idempotence_err / (sc * sc));
    comp = std::max(comp, sp.completeness_err / sc);
  }
  auto s3 = make_preset("paper-3x3-elliptic");
  auto pt = base_point(s3);
  auto sp = elliptic_split(kI * principal_symbol(s3, 0, pt.x, pt.u, pt.v, pt.xi));
  double kill = (sp.P_E * s3.u0).norm();
  auto pol = polarization_select(s3, pt);
  double pol_ratio = pol.proj_norm / (pol.alpha * pol.condition.norm());
  auto half = puiseux_probe([](double t) { return mat2(0, 1, t, 0); }, 0.0);
  auto third = puiseux_probe([](double t) {
    Mat m = Mat::Zero(3, 3);
    m(0, 1) = 1;
    m(1, 2) = 1;
    m(2, 0) = t;
    return m;
  }, 0.0);
  R.detail = {{"polarization", {{"alpha", pol.alpha}, {"proj_norm", pol.proj_norm},
                                {"condition", pol.condition.norm()}, {"branch", pol.branch}}},
              {"puiseux", {half.slope, third.slope}}};
  R.checks = {check_le("idempotence error", idem, 1e-9),
              check_le("completeness error", comp, 1e-9),
              check_le("|P_E u0| on the 3x3 example", kill, 1e-9),
              check_within("|P_E u1| / (alpha |e + (dP_E e) u0|)", pol_ratio, 0.95, 1.05),
              check_within("Puiseux exponent 1/2", half.slope, 0.5 * 0.95, 0.5 * 1.05),
              check_within("Puiseux exponent 1/3", third.slope, 0.95 / 3, 1.05 / 3)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult datum_suite(const SuiteOpts& o) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 8;
  R.title = "datum blocks, elliptic component ratio, leading-term error";
  R.budget = 60;
  const double box = 2 * kPi * 32;
  SparseSpectrum w = bump_envelope(1, 0.3, box, {0, 0});
  OscillatoryOpts oo;
  oo.sigma = 2.0;
  oo.J = 9;
  auto osc = oscillatory_sum(w, oo);
  auto br = block_norms(osc, oo.j0, oo.J);

  SystemSpec sys = make_preset("cr-elliptic");
  auto pol = polarization_select(sys, base_point(sys));
  auto osc2 = oscillatory_sum(bump_envelope(1, 0.3, box, sys.x0), oo);
  FullDatum u = assemble_datum(pol.u1, matched_gradient(pol.u1, osc2, sys.x0), osc2, sys.x0);
  std::vector<double> ratios;
  for (int j = 5; j <= 9; ++j) {
    auto geo = make_geometry(1, sys.x0, sys.xi0, j, 0.1);
    ratios.push_back(elliptic_component_bound(sys, u, geo, mollifier_epsilon(j, 0.6)).ratio);
  }

  SystemSpec rot = make_preset("rotating-elliptic");
  SpectralPoint pt = base_point(rot);
  auto P = [&](const Vec& xi) {
    SpectralPoint q = pt;
    q.xi = xi;
    return elliptic_split(principal_M(rot, q, rot.u0)).P_E;
  };
  SparseSpectrum w2 = bump_envelope(2, 0.3, 2 * kPi * 8, rot.x0);
  std::vector<int> js = or_default(o.js, {6, 7, 8, 9, 10});
  std::vector<double> errs;
  for (int j : js) {
    auto geo = make_geometry(2, rot.x0, rot.xi0, j, 0.2, 1.0, 64);
    errs.push_back(approx_datum_error(w2, rot.u0, P, geo, 64));
  }
  auto fit = fit_log2(js, errs);
  R.detail = {{"block_ratios", br.ratios}, {"component_ratios", ratios}, {"approx_js", js},
              {"approx_errors", errs}, {"approx_slope", fit.slope}};
  R.checks = {check_le("block ratio spread", br.spread, 2.0),
              check_le("elliptic component ratio spread", spread_of(ratios), 2.0),
              check_within("leading-term error slope", fit.slope, -1.3, -0.7)};
  R.seconds = since(t0);
  R.finish();
  return R;
}

// ---------------------------------------------------------------- 9 to 12

CriterionResult elliptic_criterion(const EllipticEndgameOpts& pos, const std::vector<int>& js,
                                   EndgameReport* pos_out, EndgameReport* ctl_out) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 9;
  R.title = "elliptic endgame margin";
  R.budget = 600;
  EndgameReport P = endgame_elliptic(pos, js);
  EllipticEndgameOpts c = pos;
  c.preset = "symmetric-hyperbolic";
  c.control = true;
  for (const auto& r : P.rows) c.t_final[r.j] = r.t_obs;
  EndgameReport C = endgame_elliptic(c, js);
  std::vector<double> cm;
  for (const auto& r : C.rows) cm.push_back(r.margin);
  R.checks = {check_true("margin strictly increasing over j", P.increasing),
              Check{"margin at the last j", P.rows.empty() ? 0.0 : P.rows.back().margin, ">", 1.0,
                    0.0, P.above_one},
              check_le("control: max margin / first margin", max_over_first(cm), 3.0)};
  R.detail = {{"positive", to_json(P)}, {"control", to_json(C)}};
  if (pos_out) *pos_out = std::move(P);
  if (ctl_out) *ctl_out = std::move(C);
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult transition_criterion(const TransitionEndgameOpts& pos, const std::vector<int>& js,
                                     EndgameReport* pos_out, EndgameReport* ctl_out) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 10;
  R.title = "transition endgame margin and Gaussian-in-time fit";
  R.budget = 600;
  EndgameReport P = endgame_transition(pos, js);
  TransitionEndgameOpts c = pos;
  c.preset = "symmetric-hyperbolic";
  c.control = true;
  for (const auto& r : P.rows) c.t_obs[r.j] = r.t_obs;
  EndgameReport C = endgame_transition(c, js);
  bool inside = !P.rows.empty();
  double dev = 0, drift = 0;
  for (const auto& r : P.rows) {
    inside = inside && r.zeta_fit >= r.rate_lo - 1e-6 && r.zeta_fit <= r.rate_hi + 1e-6;
    dev = std::max(dev, std::abs(r.zeta_fit - r.zeta_class) / std::max(r.zeta_class, 1e-300));
  }
  std::vector<double> cm;
  for (const auto& r : C.rows) {
    cm.push_back(r.margin);
    drift = std::max(drift, r.drift);
  }
  R.checks = {check_true("fitted zeta inside [zeta-, zeta+]", inside),
              check_le("max |zeta fit - classifier| / classifier", dev, 0.1),
              check_true("margin strictly increasing over j", P.increasing),
              check_le("control: max margin / first margin", max_over_first(cm), 3.0),
              check_le("real branches: max ln of restricted flow norms", drift, pos.drift_tol)};
  R.detail = {{"positive", to_json(P)}, {"control", to_json(C)}};
  if (pos_out) *pos_out = std::move(P);
  if (ctl_out) *ctl_out = std::move(C);
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult remainder_criterion(const AuditOpts& a, const std::vector<int>& js,
                                    RemainderAudit* out) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 11;
  R.title = "remainder audit: G_* flatness and G^out slope";
  R.budget = 300;
  SystemSpec sys = make_preset(a.preset);
  DatumRecipe dr = a.datum;
  dr.sigma = a.s;
  double th = resolve_theta(a.theta, a.s, sys.d);
  RemainderAudit A = remainder_audit(sys, dr, a.s, th, js, a.delta, a.rx, a.t);
  R.checks = {check_le("G_E max / min over j", A.G_spread, 3.0),
              check_within("G^out_E slope", A.out_slope, A.target_slope - 0.5, A.target_slope + 0.5)};
  R.detail = to_json(A);
  if (out) *out = std::move(A);
  R.seconds = since(t0);
  R.finish();
  return R;
}

CriterionResult duhamel_criterion(const AuditOpts& a, const std::vector<int>& js,
                                  std::vector<DuhamelReport>* out) {
  auto t0 = Clock::now();
  CriterionResult R;
  R.id = 12;
  R.title = "Duhamel iteration contraction";
  R.budget = 180;
  SystemSpec sys = make_preset(a.preset);
  DatumRecipe dr = a.datum;
  dr.sigma = a.s;
  double th = resolve_theta(a.theta, a.s, sys.d);
  FullDatum u = build_datum(sys, dr);
  std::vector<DuhamelReport> reps;
  std::vector<double> norm_contr;
  double worst_pred = 0, recon = 0;
  json rows = json::array();
  for (int j : js) {
    auto geo = make_geometry(sys.d, sys.x0, sys.xi0, j, a.delta, a.rx);
    auto ops = remainder_ops(sys, u, geo, th);
    auto D = duhamel_iterate(ops, a.t, 2, a.nodes);
    norm_contr.push_back(D.contraction / D.scale);
    worst_pred = std::max(worst_pred, D.contraction / D.predicted);
    for (double r : D.reconstruction) recon = std::max(recon, r);
    rows.push_back(to_json(D));
    reps.push_back(std::move(D));
  }
  R.checks = {check_le("contraction / (2^{-j theta'} t max|G|)", worst_pred, 1.0),
              check_le("contraction / 2^{-j theta'}: max / min over j", spread_of(norm_contr), 3.0),
              check_le("reconstruction residual", recon, 1e-8)};
  R.detail = {{"runs", rows}, {"normalized_contraction", norm_contr}};
  if (out) *out = std::move(reps);
  R.seconds = since(t0);
  R.finish();
  return R;
}

// ---------------------------------------------------------------- json

json to_json(const Check& c) {
  json j = {{"name", c.name}, {"value", c.value}, {"rel", c.rel}, {"limit", c.limit}};
  if (c.rel == "within") j["limit_hi"] = c.limit_hi;
  j["pass"] = c.pass;
  return j;
}

json to_json(const CriterionResult& r) {
  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  // wall-clock stays out: reports are byte-identical across replays
  return {{"id", r.id}, {"title", r.title}, {"checks_pass", r.checks_pass}, {"checks", checks},
          {"budget_seconds", r.budget}, {"detail", r.detail}};
}

json to_json(const EndgameReport& R) {
  json rows = json::array();
  for (const auto& r : R.rows) {
    rows.push_back({{"j", r.j}, {"delta", r.delta}, {"halvings", r.halvings},
                    {"rate_hi", r.rate_hi}, {"rate_lo", r.rate_lo}, {"t_star", r.t_star},
                    {"t_obs", r.t_obs}, {"delta_ok", r.delta_ok}, {"tstar_ok", r.tstar_ok},
                    {"lhs", r.lhs}, {"a_j", r.a_j}, {"B", r.B}, {"F", r.F},
                    {"term_s", r.term_s}, {"term_theta", r.term_theta},
                    {"term_out", r.term_out}, {"term_k", r.term_k}, {"rhs", r.rhs},
                    {"margin", r.margin}, {"zeta_fit", r.zeta_fit},
                    {"zeta_class", r.zeta_class}, {"fit_ok", r.fit_ok}, {"drift", r.drift},
                    {"drift_band", r.drift_band}, {"times", r.times}, {"log_B", r.log_B},
                    {"log_F", r.log_F}, {"log_w", r.log_w}});
  }
  return {{"kind", R.kind}, {"preset", R.preset}, {"control", R.control}, {"s", R.s},
          {"sigma", R.sigma}, {"theta", R.theta}, {"theta_prime", R.theta_p},
          {"theta_star", R.theta_star}, {"rows", rows}, {"increasing", R.increasing},
          {"above_one", R.above_one}, {"flat", R.flat}, {"fit_ok", R.fit_ok},
          {"real_flat", R.real_flat}, {"pass", R.pass}, {"notes", R.notes}};
}

json to_json(const RemainderAudit& A) {
  json rows = json::array();
  for (const auto& r : A.rows)
    rows.push_back({{"j", r.j}, {"G_E", r.G_E}, {"G_H", r.G_H}, {"commutator", r.comm},
                    {"R_E", r.rstar}, {"dtP", r.dtp}, {"out_E", r.out_E}, {"out_H", r.out_H},
                    {"out_E1", r.out_E1}, {"out_bound", r.out_bound}});
  return {{"s", A.s}, {"t", A.t}, {"target_slope", A.target_slope}, {"rows", rows},
          {"G_spread", A.G_spread}, {"out_slope", A.out_slope}, {"flat_ok", A.flat_ok},
          {"slope_ok", A.slope_ok}};
}

json to_json(const DuhamelReport& D) {
  return {{"j", D.j}, {"t", D.t}, {"scale", D.scale}, {"truncation", D.truncation},
          {"reconstruction", D.reconstruction}, {"contraction", D.contraction},
          {"predicted", D.predicted}, {"nodes", D.nodes}};
}

json to_json(const RateReport& r) {
  return {{"kind", r.kind}, {"sign", sign_tag_name(r.tag)}, {"times", r.times},
          {"log_norms", r.log_norms}, {"log_upper", r.log_upper}, {"log_lower", r.log_lower},
          {"fitted_rate", r.fitted_rate}, {"gamma_plus", r.gamma_plus},
          {"gamma_minus", r.gamma_minus}, {"zeta_minus", r.zeta_minus},
          {"zeta_plus", r.zeta_plus}, {"theta_star", r.theta_star}, {"t_star", r.t_star},
          {"t_final", r.t_final}, {"C_upper", r.C_upper}, {"C_lower", r.C_lower},
          {"upper_ok", r.upper_ok}, {"lower_ok", r.lower_ok}, {"notes", r.notes}};
}

}  // namespace mlab
