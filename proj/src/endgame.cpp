#include "mlab/endgame.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <chrono>
#include <cmath>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "mlab/calculus.hpp"
#include "mlab/parallel.hpp"
#include "mlab/presets.hpp"

namespace mlab {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double p2(double e) { return std::pow(2.0, e); }

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return v.size() >= 2;
}

double spread(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

// Gauss-Legendre nodes and weights on [-1, 1]
template <int n>
std::pair<std::vector<double>, std::vector<double>> gauss_table() {
  using G = boost::math::quadrature::gauss<double, n>;
  const auto& a = G::abscissa();
  const auto& w = G::weights();
  std::vector<double> x, wt;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      x.push_back(0.0);
      wt.push_back(w[i]);
      continue;
    }
    x.push_back(-a[i]);
    wt.push_back(w[i]);
    x.push_back(a[i]);
    wt.push_back(w[i]);
  }
  return {x, wt};
}

std::pair<std::vector<double>, std::vector<double>> gauss_rule(int n) {
  switch (n) {
    case 4: return gauss_table<4>();
    case 6: return gauss_table<6>();
    case 8: return gauss_table<8>();
    case 10: return gauss_table<10>();
    case 12: return gauss_table<12>();
    case 16: return gauss_table<16>();
    default: throw Error("gauss_rule: nodes must be one of 4, 6, 8, 10, 12, 16");
  }
}

// index of x among the nodes of g
bool node_of(const Grid& g, const Vec& x, std::size_t& p) {
  double h = g.step();
  std::array<long, 2> idx{0, 0};
  for (int a = 0; a < g.d; ++a) {
    double t = (x[a] - g.origin[a]) / h;
    idx[a] = std::lround(t);
    if (std::abs(t - double(idx[a])) > 1e-9 || idx[a] < 0 || idx[a] >= g.n) return false;
  }
  p = g.flat(idx[0], idx[1]);
  return true;
}

struct Jet {
  CVec u, ut;
  Grad v, vt;
};

// eigenvalues sorted by Im descending, then Re descending
std::vector<int> branch_order(const Eigen::VectorXcd& ev) {
  std::vector<int> idx(ev.size());
  for (int i = 0; i < int(idx.size()); ++i) idx[i] = i;
  double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    double da = ev[a].imag() - ev[b].imag();
    if (std::abs(da) > 1e-9 * scale) return da > 0;
    return ev[a].real() > ev[b].real();
  });
  return idx;
}

CVec vec_of(const SampledField& f) { return to_vector(f); }

double l2_vec(const CVec& v, const Grid& g) { return v.norm() * std::sqrt(g.cell()); }

}  // namespace

// ---------------------------------------------------------------- windows

void check_elliptic_window(double s, double sigma, int d) {
  double hd = 0.5 * d;
  if (!(s > 1 + hd))
    throw Error("elliptic window: s > 1 + d/2 violated (s = " + num(s) + ", 1 + d/2 = " + num(1 + hd) + ")");
  if (!(sigma >= s))
    throw Error("elliptic window: s <= sigma violated (s = " + num(s) + ", sigma = " + num(sigma) + ")");
  if (!(sigma < 2 * s - 1 - hd))
    throw Error("elliptic window: sigma < 2s - 1 - d/2 violated (sigma = " + num(sigma) +
                ", 2s - 1 - d/2 = " + num(2 * s - 1 - hd) + ")");
}

void check_transition_window(double s, double sigma, int d) {
  double hd = 0.5 * d;
  if (!(s > 1.5 + 0.75 + hd))
    throw Error("transition window: s > 3/2 + 3/4 + d/2 violated (s = " + num(s) +
                ", 3/2 + 3/4 + d/2 = " + num(2.25 + hd) + ")");
  if (!(sigma >= 3 + hd))
    throw Error("transition window: 3 + d/2 <= sigma violated (sigma = " + num(sigma) +
                ", 3 + d/2 = " + num(3 + hd) + ")");
  if (!(sigma < 2 * s - 1.5 - hd))
    throw Error("transition window: sigma < 2s - 3/2 - d/2 violated (sigma = " + num(sigma) +
                ", 2s - 3/2 - d/2 = " + num(2 * s - 1.5 - hd) + ")");
}

double resolve_theta(double theta, double s, int d) { return theta > 0 ? theta : s - 1 - 0.5 * d; }

// ---------------------------------------------------------------- data

FullDatum build_datum(const SystemSpec& sys, const DatumRecipe& r) {
  SparseSpectrum w = bump_envelope(sys.d, r.R, r.L, sys.x0);
  OscillatoryOpts o;
  o.sigma = r.sigma;
  o.J = r.J;
  o.xi0 = sys.xi0;
  o.R = r.R;
  OscillatoryDatum osc = oscillatory_sum(w, o);
  if (r.real) osc.w_in = osc.w_in.real_part();
  CVec u1 = sys.u0;
  if (r.repair_polarization) u1 = polarization_select(sys, base_point(sys)).u1;
  return assemble_datum(u1, matched_gradient(u1, osc, sys.x0), osc, sys.x0);
}

// the corrector is not included: build_datum matches the gradient so it vanishes
SampledField band_limited_datum(const FullDatum& u, const Grid& g) {
  Vec cf = g.carrier_freq();
  double kmax = kPi * double(g.n) / g.L;
  int d = u.d;
  SparseSpectrum f = u.osc.w_in.multiplied(
      [&](const Vec& k) { return cd(smooth_cut(norm2(diffv(k, cf), d), 0.6 * kmax, 0.8 * kmax)); });
  SampledField s = f.sample(g);
  double half = g.L / 2;
  Vec c = g.origin;
  for (int a = 0; a < d; ++a) c[a] += half;
  std::size_t np = g.size();
  SampledField out(g, u.N);
  auto& ov = out.values_mut();
  for (std::size_t p = 0; p < np; ++p) {
    double w = smooth_cut(norm2(diffv(g.point(p), c), d), half - 1.6, half - 0.2);
    for (int k = 0; k < u.N; ++k) ov[k * np + p] = u.u1(k) * s.value(0, p) * (w / u.anchor);
  }
  return out;
}

// ---------------------------------------------------------------- transition branches

TransitionSymbols transition_symbols(const SystemSpec& sys, const FullDatum& u,
                                     const PipelineGeometry& geo, double tau_h) {
  if (sys.N != u.N || sys.d != u.d) throw Error("transition_symbols: system/datum size mismatch");
  int N = sys.N, d = sys.d;
  auto raw = std::make_shared<DatumCoefficients>(std::make_shared<FullDatum>(u), geo.local);
  Grid lg = geo.local;
  auto jet_at = [sys, raw](const Vec& x) {
    Jet J;
    std::tie(J.u, J.v) = raw->at(x);
    std::tie(J.ut, J.vt) = datum_time_derivative(sys, *raw, x);
    return J;
  };
  auto table = std::make_shared<std::vector<Jet>>(lg.size());
  parallel_for(lg.size(), [&](std::size_t b, std::size_t e, int) {
    for (std::size_t p = b; p < e; ++p) (*table)[p] = jet_at(lg.point(p));
  });
  auto jet = [=](const Vec& x) {
    std::size_t p = 0;
    if (node_of(lg, x, p)) return (*table)[p];
    return jet_at(x);
  };
  auto A_tau = [sys, d](const Jet& J, const Vec& x, const Vec& xi, double tau) -> Mat {
    Grad v = J.v;
    for (int k = 0; k < d; ++k) v[k] = J.v[k] + tau * J.vt[k];
    return principal_symbol(sys, 0.0, x, CVec(J.u + tau * J.ut), v, xi);
  };
  // mu_m(0) and d_tau mu_m(0) for every branch
  auto branches = [=](const Jet& J, const Vec& x, const Vec& xi) {
    Eigen::ComplexEigenSolver<Mat> eh(A_tau(J, x, xi, tau_h), false);
    Eigen::ComplexEigenSolver<Mat> e0(A_tau(J, x, xi, 0.0), false);
    Eigen::VectorXcd lh = eh.eigenvalues(), l0 = e0.eigenvalues();
    auto ord = branch_order(lh);
    std::vector<bool> used(N, false);
    std::vector<std::pair<cd, cd>> out;
    for (int m = 0; m < N; ++m) {
      cd mh = lh[ord[m]];
      int best = -1;
      for (int i = 0; i < N; ++i)
        if (!used[i] && (best < 0 || std::abs(l0[i] - mh) < std::abs(l0[best] - mh))) best = i;
      used[best] = true;
      out.push_back({l0[best], (mh - l0[best]) / tau_h});
    }
    return out;
  };

  TransitionSymbols T;
  Jet J0 = jet(geo.x0);
  {
    Eigen::ComplexEigenSolver<Mat> e0(A_tau(J0, geo.x0, geo.xi0, 0.0), false);
    Eigen::VectorXcd l0 = e0.eigenvalues();
    T.lambda0 = l0.mean();
    double gap = 0;
    for (int a = 0; a < N; ++a)
      for (int b = a + 1; b < N; ++b) gap = std::max(gap, std::abs(l0[a] - l0[b]));
    T.double_root = N >= 2 && gap < 1e-6;
    if (T.double_root) {
      cd l = T.lambda0;
      T.rates = bifurcation_rates(
          [&](double tau) { return Mat(A_tau(J0, geo.x0, geo.xi0, tau) - l * Mat::Identity(N, N)); });
    }
  }
  Eigen::ComplexEigenSolver<Mat> eh(A_tau(J0, geo.x0, geo.xi0, tau_h), true);
  auto ord = branch_order(eh.eigenvalues());
  Mat V = eh.eigenvectors();
  Mat Vi = V.inverse();
  auto center = branches(J0, geo.x0, geo.xi0);
  TensorCutoff sharp = geo.psi_sharp;
  for (int m = 0; m < N; ++m) {
    BranchSymbols b;
    b.m = m;
    b.right = V.col(ord[m]);
    b.left = Vi.row(ord[m]).transpose();
    b.zeta_center = center[m].second.imag();
    b.bifurcating = T.double_root && std::abs(b.zeta_center) > 1e-8;
    auto make = [&](bool deriv) {
      SymbolSpec s;
      s.name = std::string(deriv ? "dmu_" : "mu_") + std::to_string(m);
      s.d = d;
      s.N = 1;
      s.eval = [=](const Vec& x, const Vec& xi) -> Mat {
        Mat r = Mat::Zero(1, 1);
        double c = sharp(x, xi);
        if (c == 0) return r;
        auto br = branches(jet(x), x, xi);
        r(0, 0) = c * (deriv ? br[m].second : br[m].first);
        return r;
      };
      return s;
    };
    b.mu0 = make(false);
    b.dmu = make(true);
    T.branches.push_back(std::move(b));
  }
  return T;
}

CVec band_vector(const SampledField& f, const std::vector<std::size_t>& modes) {
  CVec v(Eigen::Index(modes.size()));
  double back = std::sqrt(f.grid().volume());
  for (std::size_t i = 0; i < modes.size(); ++i) v(Eigen::Index(i)) = f.coeff(0, modes[i]) * back;
  return v;
}

BranchFlow branch_flow(const BranchSymbols& b, const PipelineGeometry& geo,
                       const std::vector<double>& times, const QuantOpts& q0, double h_max) {
  QuantOpts q = q0;
  q.j = geo.j;
  BranchFlow f;
  f.modes = band_modes(geo.local, geo.j, geo.psi_sharp);
  double s2 = std::pow(2.0, 0.5 * geo.j);
  f.L0 = -kI * s2 * band_matrix(b.mu0, geo.local, q, f.modes).block();
  f.L1 = -kI * band_matrix(b.dmu, geo.local, q, f.modes).block();
  f.Pi = band_matrix(geo.psi_flat.symbol(1), geo.local, q, f.modes).block();
  f.Psi = band_matrix(geo.psi_tilde.symbol(1), geo.local, q, f.modes).full;
  f.times = times;
  Eigen::Index n = f.L0.rows();
  CMat U = CMat::Identity(n, n);
  CMat C = f.L1 * f.L0 - f.L0 * f.L1;
  double t = 0;
  for (double te : times) {
    if (te < t) throw Error("branch_flow: times must increase");
    long m = long(std::ceil((te - t) / h_max - 1e-12));
    if (m > 0) {
      double h = (te - t) / double(m);
      for (long i = 0; i < m; ++i) {
        double tm = t + (double(i) + 0.5) * h;
        CMat Om = h * (f.L0 + tm * f.L1) + (h * h * h / 12.0) * C;
        U = Om.exp() * U;
        ++f.steps;
      }
    }
    t = te;
    f.U.push_back(U);
  }
  return f;
}

std::pair<double, double> zeta_bracket(const BranchSymbols& b, const PipelineGeometry& geo,
                                       int samples) {
  double zp = -1e300, zm = 1e300;
  for (const auto& x : cutoff_x_samples(geo.psi_sharp, samples))
    for (const auto& xi : cutoff_xi_samples(geo.psi_sharp, samples))
      zp = std::max(zp, b.dmu.eval(x, xi)(0, 0).imag());
  for (const auto& x : cutoff_x_samples(geo.psi_tilde, samples))
    for (const auto& xi : cutoff_xi_samples(geo.psi_tilde, samples))
      zm = std::min(zm, b.dmu.eval(x, xi)(0, 0).imag());
  return {zm, zp};
}

RateReport transition_rate_bounds(const BranchSymbols& b, const PipelineGeometry& geo,
                                  const SampledField* w0, const TransitionRateOpts& o,
                                  BranchFlow* flow_out) {
  RateReport rep;
  rep.kind = "transition";
  rep.tag = SignTag::decay;
  int j = geo.j;
  std::tie(rep.zeta_minus, rep.zeta_plus) = zeta_bracket(b, geo, o.samples);
  rep.zeta_center = b.zeta_center;
  rep.theta_star = theta_star(o.theta, geo.d);
  rep.t_star = tstar_transition(j, rep.theta_star, o.eps_a, rep.zeta_plus - rep.zeta_minus);
  rep.t_final = o.t_obs ? *o.t_obs : o.obs_fraction * rep.t_star;
  if (!std::isfinite(rep.t_final) || !(rep.t_final > 0))
    throw Error("transition_rate_bounds: no finite observation time (zeta+ <= zeta-), set t_obs");
  std::vector<double> ts;
  for (int i = 1; i <= o.nt; ++i) ts.push_back(rep.t_final * double(i) / double(o.nt));
  BranchFlow f = branch_flow(b, geo, ts, o.quant, o.h_max);
  SampledField packet;
  if (w0) {
    packet = *w0;
  } else {
    double r = geo.rx / 4;
    Vec x0 = geo.x0;
    int d = geo.d;
    packet = SampledField::scalar(geo.local, [=](const Vec& x) {
      double q = norm2(diffv(x, x0), d) / r;
      return cd(std::exp(-0.5 * q * q));
    });
  }
  CVec z0 = f.Pi * band_vector(packet, f.modes);
  CVec loc = f.Psi * z0;
  double n0 = z0.norm(), nl = loc.norm();
  if (!(n0 > 0) || !(nl > 1e-14 * n0)) throw Error("transition_rate_bounds: empty initial packet");
  double slack = std::pow(2.0, -double(j) * rep.theta_star);
  rep.times.push_back(0.0);
  rep.log_norms.push_back(std::log(n0));
  rep.log_upper.push_back(std::log(n0));
  rep.log_lower.push_back(std::log(0.9 * nl));
  rep.C_upper = rep.C_lower = -std::numeric_limits<double>::infinity();
  std::vector<double> tfit, rel;
  double drift = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double t = ts[i], ln = std::log((f.U[i] * z0).norm());
    double q = 0.5 * t * t;
    rep.times.push_back(t);
    rep.log_norms.push_back(ln);
    rep.log_upper.push_back(std::log(n0) + q * rep.zeta_plus + o.C * slack * t);
    rep.log_lower.push_back(std::log(0.9 * nl) + q * rep.zeta_minus - o.C * slack * t);
    rep.C_upper = std::max(rep.C_upper, (ln - std::log(n0) - q * rep.zeta_plus) / (t * slack));
    rep.C_lower = std::max(rep.C_lower, (std::log(0.9 * nl) + q * rep.zeta_minus - ln) / (t * slack));
    tfit.push_back(t);
    rel.push_back(ln - std::log(n0));
    drift = std::max(drift, std::abs(ln - std::log(n0)));
  }
  rep.upper_ok = rep.C_upper <= o.C + 1e-9;
  rep.lower_ok = rep.C_lower <= o.C + 1e-9;
  // ln ||w(t)|| / ||w(0)|| = zeta t^2 / 2
  rep.fitted_rate = 2.0 * fit_quadratic_coeff(tfit, rel);
  rep.drift = drift;
  if (flow_out) *flow_out = std::move(f);
  return rep;
}

// ---------------------------------------------------------------- remainders

RemainderOps remainder_ops(const SystemSpec& sys, const FullDatum& u, const PipelineGeometry& geo,
                           double theta, Quant gen_quant, Quant rem_quant) {
  RemainderOps R;
  R.j = geo.j;
  R.theta = theta;
  R.theta_p = theta_prime(theta);
  R.eps = mollifier_epsilon(geo.j, theta);
  int N = sys.N;
  EllipticSymbols S = elliptic_symbols(sys, u, geo, R.eps);
  {
    EllipticRateOpts eo;
    eo.measure = false;
    R.gamma_E = elliptic_rate_bounds(S, geo, eo).gamma_E;
  }
  const Grid& g = geo.local;
  QuantOpts qg{geo.j, gen_quant, DyadicFamily{}};
  QuantOpts qr{geo.j, rem_quant, DyadicFamily{}};
  R.AE = assemble_dense(S.ME, g, qg);
  R.AH = assemble_dense(S.MH, g, qg);
  R.PE = assemble_dense(S.P_E, g, qr);
  R.PH = assemble_dense(S.P_H, g, qr);
  CMat A = assemble_dense(S.A, g, qr);
  CMat M = assemble_dense(S.M, g, qr);
  CMat Sharp = assemble_dense(geo.psi_sharp.symbol(N), g, qr);
  CMat Psi = assemble_dense(geo.psi.symbol(N), g, qr);
  CMat ME = assemble_dense(S.ME, g, qr), MH = assemble_dense(S.MH, g, qr);
  CMat dE = assemble_dense(S.dtP_E, g, qr), dH = assemble_dense(S.dtP_H, g, qr);
  double pre = std::pow(2.0, double(geo.j) * R.theta_p);
  CMat K = M - A * Sharp;  // op(psi_sharp A~) - op(A~) op(psi_sharp)
  CMat commE = R.PE * K, commH = R.PH * K;
  CMat rE = R.PE * M - ME * R.PE, rH = R.PH * M - MH * R.PH;
  R.GE = -pre * (commE + rE + dE);
  R.GH = -pre * (commH + rH + dH);
  R.comm = pre * op_norm(commE);
  R.rstar = pre * op_norm(rE);
  R.dtp = pre * op_norm(dE);
  CVec ut = vec_of(band_limited_datum(u, g));
  CVec inner = A * (Sharp * (Psi * ut) - Psi * ut) + (Psi * (A * ut) - A * (Psi * ut));
  R.outE = -(R.PE * inner);
  R.outH = -(R.PH * inner);
  R.v0 = vec_of(localized_datum(u, geo, rem_quant));
  return R;
}

RemainderAudit remainder_audit(const SystemSpec& sys, const DatumRecipe& dr, double s, double theta,
                               const std::vector<int>& js, double delta, double rx, double t) {
  RemainderAudit A;
  A.s = s;
  A.t = t;
  A.target_slope = -(2 * s - 1 - 0.5 * sys.d);
  FullDatum u = build_datum(sys, dr);
  std::vector<double> gs, outs;
  auto [x, w] = gauss_rule(8);
  for (int j : js) {
    PipelineGeometry geo = make_geometry(sys.d, sys.x0, sys.xi0, j, delta, rx);
    RemainderOps ops = remainder_ops(sys, u, geo, theta);
    const Grid& g = geo.local;
    RemainderRow r;
    r.j = j;
    r.G_E = op_norm(ops.GE);
    r.G_H = op_norm(ops.GH);
    r.comm = ops.comm;
    r.rstar = ops.rstar;
    r.dtp = ops.dtp;
    r.out_E = l2_vec(ops.outE, g);
    r.out_H = l2_vec(ops.outH, g);
    Propagator SE(-ops.AE);
    CVec acc = CVec::Zero(ops.outE.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double t1 = 0.5 * t * (1 + x[i]);
      acc += (0.5 * t * w[i]) * SE.apply(t - t1, ops.outE);
    }
    r.out_E1 = l2_vec(acc, g);
    r.out_bound = std::pow(2.0, A.target_slope * j) * std::exp(t * ops.gamma_E);
    gs.push_back(r.G_E);
    outs.push_back(r.out_E);
    A.rows.push_back(r);
  }
  A.G_spread = spread(gs);
  A.flat_ok = A.G_spread <= 3.0;
  if (js.size() >= 2) {
    A.out_slope = fit_log2(js, outs).slope;
    A.slope_ok = std::abs(A.out_slope - A.target_slope) <= 0.5;
  }
  return A;
}

// ---------------------------------------------------------------- Duhamel iterations

DuhamelReport duhamel_iterate(const RemainderOps& ops, double t, int kmax, int nodes) {
  if (kmax < 1 || kmax > 3) throw Error("duhamel_iterate: k must lie in 1..3");
  DuhamelReport rep;
  rep.j = ops.j;
  rep.t = t;
  rep.nodes = nodes;
  rep.scale = std::pow(2.0, -double(ops.j) * ops.theta_p);
  double sc = rep.scale;
  auto [gx, gw] = gauss_rule(nodes);
  Eigen::Index n = ops.AE.rows();
  Propagator SE(-ops.AE), SH(-ops.AH);
  // direct solve of d_t v_* + op(M_*) v_* = 2^{-j theta'} G_* v + G^out_*
  CMat C = CMat::Zero(2 * n + 1, 2 * n + 1);
  C.block(0, 0, n, n) = -ops.AE + sc * ops.GE;
  C.block(0, n, n, n) = sc * ops.GE;
  C.block(n, 0, n, n) = sc * ops.GH;
  C.block(n, n, n, n) = -ops.AH + sc * ops.GH;
  C.block(0, 2 * n, n, 1) = ops.outE;
  C.block(n, 2 * n, n, 1) = ops.outH;
  Propagator Z(C);
  CVec vE0 = ops.PE * ops.v0, vH0 = ops.PH * ops.v0;
  CVec z0(2 * n + 1);
  z0 << vE0, vH0, cd(1.0);
  auto direct = [&](double tau) {
    CVec z = Z.apply(tau, z0);
    return std::make_pair(CVec(z.head(n)), CVec(z.segment(n, n)));
  };
  using Fn = std::function<CVec(double)>;
  auto quad = [&](double a, double b, const std::function<CVec(double)>& f) {
    CVec acc = CVec::Zero(n);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double s = 0.5 * (a + b) + 0.5 * (b - a) * gx[i];
      acc += (0.5 * (b - a) * gw[i]) * f(s);
    }
    return acc;
  };
  // (Q f)(tau) = int_0^tau (S_E(s; tau) G_E + S_H(s; tau) G_H) f(s) ds
  auto Q = [&](Fn f) -> Fn {
    return [&, f](double tau) {
      return quad(0.0, tau, [&](double s) {
        CVec fs = f(s);
        return CVec(SE.apply(tau - s, ops.GE * fs) + SH.apply(tau - s, ops.GH * fs));
      });
    };
  };
  // int_{D_k(t)} S_Ek(T; t) f(t_k) dT
  std::function<CVec(int, Fn)> chain = [&](int k, Fn f) -> CVec {
    if (k == 1) return quad(0.0, t, [&](double s) { return CVec(SE.apply(t - s, ops.GE * f(s))); });
    return chain(k - 1, Q(f));
  };
  Fn v_of = [&](double tau) {
    auto [e, h] = direct(tau);
    return CVec(e + h);
  };
  Fn free_src = [&](double tau) { return CVec(SH.apply(tau, vH0) + SE.apply(tau, vE0)); };
  Fn out_src = [&](double tau) {
    return quad(0.0, tau, [&](double s) {
      return CVec(SH.apply(tau - s, ops.outH) + SE.apply(tau - s, ops.outE));
    });
  };
  CVec vE = direct(t).first;
  double nv = std::max(vE.norm(), 1e-300);
  CVec vf = SE.apply(t, vE0);
  CVec out = quad(0.0, t, [&](double s) { return CVec(SE.apply(t - s, ops.outE)); });
  for (int k = 1; k <= kmax; ++k) {
    if (k >= 2) {
      vf += std::pow(sc, k - 1) * chain(k - 1, free_src);
      out += std::pow(sc, k - 1) * chain(k - 1, out_src);
    }
    CVec trunc = vE - vf - out;
    CVec rem = std::pow(sc, k) * chain(k, v_of);
    rep.truncation.push_back(trunc.norm() / nv);
    rep.reconstruction.push_back((trunc - rem).norm() / nv);
  }
  if (rep.truncation.size() >= 2 && rep.truncation[0] > 0)
    rep.contraction = rep.truncation[1] / rep.truncation[0];
  rep.predicted = sc * t * std::max(op_norm(ops.GE), op_norm(ops.GH));
  return rep;
}

// ---------------------------------------------------------------- endgames

namespace {

using clk = std::chrono::steady_clock;

double since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::vector<double> uniform_times(double tf, int nt) {
  std::vector<double> ts;
  for (int i = 1; i <= nt; ++i) ts.push_back(tf * double(i) / double(nt));
  return ts;
}

void finish_margins(EndgameReport& R) {
  std::vector<double> m;
  for (const auto& r : R.rows) m.push_back(r.margin);
  R.increasing = strictly_increasing(m);
  R.above_one = !m.empty() && m.back() > 1.0;
  R.flat = !m.empty() && *std::max_element(m.begin(), m.end()) <= 3.0 * m.front();
}

}  // namespace

EndgameReport endgame_elliptic(const EllipticEndgameOpts& o, const std::vector<int>& js) {
  SystemSpec sys = make_preset(o.preset);
  int d = sys.d;
  EndgameReport R;
  R.kind = "elliptic";
  R.preset = o.preset;
  R.control = o.control;
  R.s = o.s;
  R.sigma = o.sigma;
  R.theta = resolve_theta(o.theta, o.s, d);
  R.theta_p = theta_prime(R.theta);
  R.theta_star = theta_star(R.theta, d);
  if (!o.control) check_elliptic_window(o.s, o.sigma, d);
  DatumRecipe dr = o.datum;
  dr.sigma = o.sigma;
  if (o.control) dr.repair_polarization = false;
  FullDatum u = build_datum(sys, dr);
  double hd = 0.5 * d;
  for (int j : js) {
    auto t0 = clk::now();
    EndgameRow row;
    row.j = j;
    row.a_j = amplitude(j, o.sigma);
    double eps = mollifier_epsilon(j, R.theta);
    if (o.control) {
      auto it = o.t_final.find(j);
      if (it == o.t_final.end()) throw Error("endgame_elliptic: control needs t_final for j = " + std::to_string(j));
      row.delta = o.delta;
      row.t_obs = it->second;
      PipelineGeometry geo = make_geometry(d, sys.x0, sys.xi0, j, o.delta, o.rx);
      auto raw = std::make_shared<DatumCoefficients>(std::make_shared<FullDatum>(u), geo.local);
      double sj = std::ldexp(1.0, -j);
      TensorCutoff sharp = geo.psi_sharp;
      int N = sys.N;
      SymbolSpec M;
      M.name = "M";
      M.d = d;
      M.N = N;
      M.eval = [=](const Vec& x, const Vec& xi) -> Mat {
        double c = sharp(x, xi);
        if (c == 0) return Mat::Zero(N, N);
        auto [uu, vv] = raw->at(x);
        return c * (kI * principal_symbol(sys, 0.0, x, uu, vv, xi) + sj * dF_du(sys, 0.0, x, uu, vv));
      };
      QuantOpts q{j, Quant::pdo, DyadicFamily{}};
      auto modes = band_modes(geo.local, j, geo.psi_sharp);
      CMat A = band_matrix(M, geo.local, q, modes).block();
      CMat Pi = band_matrix(geo.psi_flat.symbol(N), geo.local, q, modes).block();
      CMat Psi = band_matrix(geo.psi_tilde.symbol(N), geo.local, q, modes).full;
      row.times = uniform_times(row.t_obs, o.nt);
      auto fw = flow_norms(A, row.times, -1.0, nullptr, &Pi);
      auto bw = flow_norms(A, row.times, 1.0, &Psi, &Pi);
      for (std::size_t i = 0; i < fw.size(); ++i) {
        row.log_F.push_back(std::log(fw[i]));
        row.log_B.push_back(std::log(bw[i]));
      }
      row.F = fw.back();
      row.B = bw.back();
      SampledField v0 = localized_datum(u, geo, Quant::para);
      row.lhs = ball_l2(localized_cutoff_op(geo.psi_tilde, j, v0, Quant::para), geo.x0, geo.rx);
    } else {
      // delta selection: e^{-t_final gamma_E^-} <= 2^{-j(sigma - s + 1/100)}
      double delta = o.delta, rx = o.rx;
      EllipticRateOpts eo;
      eo.measure = false;
      double target = p2(-double(j) * (o.sigma - o.s + 0.01));
      int h = 0;
      bool ok = false;
      double tf = 0, gE = 0, gm = 0;
      for (;; ++h) {
        PipelineGeometry geo = make_geometry(d, sys.x0, sys.xi0, j, delta, rx);
        EllipticRates er = elliptic_rate_bounds(elliptic_symbols(sys, u, geo, eps), geo, eo);
        gE = er.gamma_E;
        gm = er.gamma_E_minus;
        tf = tfinal_elliptic(j, o.s, d, o.sigma, gE - gm);
        ok = std::isfinite(tf) && std::exp(-tf * gm) <= target;
        if (ok || h == o.max_halvings) break;
        delta /= 2;
        if (o.scale_rx) rx /= 2;
      }
      row.delta_ok = ok;
      if (!ok) {
        delta = o.delta;
        rx = o.rx;
        h = 0;
        PipelineGeometry geo = make_geometry(d, sys.x0, sys.xi0, j, delta, rx);
        EllipticRates er = elliptic_rate_bounds(elliptic_symbols(sys, u, geo, eps), geo, eo);
        gE = er.gamma_E;
        gm = er.gamma_E_minus;
        tf = tfinal_elliptic(j, o.s, d, o.sigma, gE - gm);
        R.notes.push_back("j = " + std::to_string(j) + ": delta condition unmet after " +
                          std::to_string(o.max_halvings) + " halvings, kept delta = " + num(delta));
      }
      row.delta = delta;
      row.halvings = h;
      row.rate_hi = gE;
      row.rate_lo = gm;
      row.t_star = tstar_rates(j, R.theta_star, o.eps_a, gE - gm);
      row.t_obs = tf;
      row.tstar_ok = tf <= row.t_star;
      if (!std::isfinite(tf) || !(tf > 0))
        throw Error("endgame_elliptic: no finite t_final (gamma_E <= gamma_E^-) at j = " + std::to_string(j));
      PipelineGeometry geo = make_geometry(d, sys.x0, sys.xi0, j, delta, rx);
      EllipticSymbols S = elliptic_symbols(sys, u, geo, eps);
      EllipticRateOpts mo;
      mo.times = uniform_times(tf, o.nt);
      EllipticRates er = elliptic_rate_bounds(S, geo, mo);
      row.times = er.times;
      for (std::size_t i = 0; i < er.times.size(); ++i) {
        row.log_F.push_back(std::log(er.fwd_E[i]));
        row.log_B.push_back(std::log(er.bwd_E[i]));
      }
      row.F = er.fwd_E.back();
      row.B = er.bwd_E.back();
      row.lhs = elliptic_component_bound(sys, u, geo, eps).norm;
    }
    row.term_s = p2(-j * o.s) * row.B;
    row.term_theta = p2(-j * (o.sigma + R.theta_p)) * row.B * row.F;
    row.term_out = p2(-j * (2 * o.s - 1 - hd)) * row.B * row.F;
    row.term_k = p2(-j * (o.s + o.k)) * row.B * row.F;
    row.rhs = row.term_s + row.term_theta + row.term_out + row.term_k;
    row.margin = row.lhs / row.rhs;
    row.seconds = since(t0);
    R.rows.push_back(row);
  }
  finish_margins(R);
  R.pass = o.control ? R.flat : (R.increasing && R.above_one);
  return R;
}

EndgameReport endgame_transition(const TransitionEndgameOpts& o, const std::vector<int>& js) {
  SystemSpec sys = make_preset(o.preset);
  int d = sys.d;
  EndgameReport R;
  R.kind = "transition";
  R.preset = o.preset;
  R.control = o.control;
  R.s = o.s;
  R.sigma = o.sigma;
  R.theta = resolve_theta(o.theta, o.s, d);
  R.theta_p = theta_prime(R.theta);
  R.theta_star = theta_star(R.theta, d);
  if (!o.control) check_transition_window(o.s, o.sigma, d);
  DatumRecipe dr = o.datum;
  dr.sigma = o.sigma;
  dr.real = true;
  dr.repair_polarization = false;
  FullDatum u = build_datum(sys, dr);
  double hd = 0.5 * d;
  for (int j : js) {
    auto t0 = clk::now();
    EndgameRow row;
    row.j = j;
    row.delta = o.delta;
    row.a_j = amplitude(j, o.sigma);
    PipelineGeometry geo = make_geometry(d, sys.x0, sys.xi0, j, o.delta, o.rx);
    TransitionSymbols T = transition_symbols(sys, u, geo);
    // most unstable branch: largest d_t Im mu at (x0, xi0)
    std::size_t m = 0;
    for (std::size_t i = 1; i < T.branches.size(); ++i)
      if (T.branches[i].zeta_center > T.branches[m].zeta_center) m = i;
    const BranchSymbols& b = T.branches[m];
    row.zeta_class = T.double_root ? T.rates.zeta : std::abs(b.zeta_center);
    TransitionRateOpts to;
    to.theta = R.theta;
    to.eps_a = o.eps_a;
    to.nt = o.nt;
    to.obs_fraction = o.obs_fraction;
    to.h_max = o.h_max;
    if (o.control) {
      auto it = o.t_obs.find(j);
      if (it == o.t_obs.end()) throw Error("endgame_transition: control needs t_obs for j = " + std::to_string(j));
      to.t_obs = it->second;
    }
    // initial state: branch m of op_j(psi) u_in, filtered by op_j(psi_flat)
    SampledField v0 = localized_datum(u, geo, Quant::para);
    SampledField wm(geo.local, 1);
    {
      auto& wv = wm.values_mut();
      std::size_t np = geo.local.size();
      for (std::size_t p = 0; p < np; ++p) {
        cd a = 0;
        for (int c = 0; c < sys.N; ++c) a += b.left(c) * v0.value(c, p);
        wv[p] = a;
      }
    }
    BranchFlow f;
    RateReport rr = transition_rate_bounds(b, geo, &wm, to, &f);
    row.rate_hi = rr.zeta_plus;
    row.rate_lo = rr.zeta_minus;
    row.t_star = rr.t_star;
    row.t_obs = rr.t_final;
    row.tstar_ok = row.t_obs <= row.t_star;
    row.zeta_fit = rr.fitted_rate;
    CVec w0 = f.Pi * band_vector(wm, f.modes);
    row.lhs = (f.Psi * w0).norm();
    row.times = f.times;
    double drift = 0, band = 0;
    for (std::size_t i = 0; i < f.U.size(); ++i) {
      CMat Ui = f.U[i].inverse();
      double Fn = op_norm(f.U[i] * f.Pi), Bn = op_norm(f.Psi * (Ui * f.Pi));
      row.log_F.push_back(std::log(Fn));
      row.log_B.push_back(std::log(Bn));
      row.log_w.push_back(std::log((f.U[i] * w0).norm()));
      drift = std::max({drift, std::log(Fn), std::log(Bn)});
      band = std::max({band, std::abs(std::log(op_norm(f.U[i]))), std::abs(std::log(op_norm(Ui)))});
      if (i + 1 == f.U.size()) {
        row.F = Fn;
        row.B = Bn;
      }
    }
    row.drift = drift;
    row.drift_band = band;
    double tol = 1e-6;
    bool inside = row.zeta_fit >= rr.zeta_minus - tol && row.zeta_fit <= rr.zeta_plus + tol;
    bool close = row.zeta_class > 0 && std::abs(row.zeta_fit - row.zeta_class) <= 0.1 * row.zeta_class;
    row.fit_ok = inside && close;
    row.term_s = p2(-j * o.s) * row.B;
    row.term_theta = p2(-j * (o.sigma + R.theta_p)) * row.B * row.F;
    row.term_out = p2(-j * (2 * o.s - 1.5 - hd)) * row.B * row.F;
    row.term_k = p2(-j * (o.s + o.k)) * row.B * row.F;
    row.rhs = row.term_s + row.term_theta + row.term_out + row.term_k;
    row.margin = row.lhs / row.rhs;
    row.seconds = since(t0);
    R.rows.push_back(row);
  }
  finish_margins(R);
  R.fit_ok = true;
  R.real_flat = true;
  for (const auto& r : R.rows) {
    R.fit_ok = R.fit_ok && r.fit_ok;
    R.real_flat = R.real_flat && r.drift <= o.drift_tol;
  }
  R.pass = o.control ? (R.flat && R.real_flat) : (R.increasing && R.fit_ok);
  return R;
}

}  // namespace mlab
