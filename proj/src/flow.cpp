#include "mlab/flow.hpp"

#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "mlab/calculus.hpp"

namespace mlab {

const char* sign_tag_name(SignTag t) { return t == SignTag::decay ? "decay" : "growth"; }

Generator symbol_generator(const SymbolSpec& a, const Grid& g, const QuantOpts& o, SignTag tag,
                           std::size_t dense_limit) {
  Generator G;
  G.name = a.name;
  double sgn = tag == SignTag::decay ? -1.0 : 1.0;
  G.apply = [a, o, sgn](double, const SampledField& z) {
    SampledField r = apply_op(a, z, o);
    r *= sgn;
    return r;
  };
  if (std::size_t(a.N) * g.size() <= dense_limit) G.dense = sgn * assemble_dense(a, g, o);
  return G;
}

Generator scaled_generator(Generator g, std::function<double(double)> factor,
                           std::function<double(double)> integral) {
  Generator s = g;
  s.name = g.name + "*f(t)";
  auto base = g.apply;
  s.apply = [base, factor](double t, const SampledField& z) {
    SampledField r = base(t, z);
    r *= factor(t);
    return r;
  };
  s.factor = factor;
  s.factor_integral = integral;
  return s;
}

double probe_norm(const Generator& g, const SampledField& like, double t, int probes,
                  unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double best = 0;
  for (int k = 0; k < probes; ++k) {
    SampledField z(like.grid(), like.N());
    for (auto& v : z.values_mut()) v = cd(nd(rng), nd(rng));
    double nz = l2_norm(z);
    double r = l2_norm(g.apply(t, z)) / nz;
    if (!std::isfinite(r)) return r;
    best = std::max(best, r);
  }
  return best;
}

namespace {

SampledField rk4_step(const Generator& G, double t, const SampledField& y, double h) {
  SampledField k1 = G.apply(t, y);
  SampledField k2 = G.apply(t + h / 2, y + cd(h / 2) * k1);
  SampledField k3 = G.apply(t + h / 2, y + cd(h / 2) * k2);
  SampledField k4 = G.apply(t + h, y + cd(h) * k3);
  SampledField out = y;
  out += cd(h / 6) * (k1 + cd(2) * k2 + cd(2) * k3 + k4);
  return out;
}

}  // namespace

Trajectory flow_solve(const FlowProblem& p) {
  if (!p.gen.apply) throw Error("flow_solve: empty generator");
  for (std::size_t i = 0; i < p.times.size(); ++i)
    if (p.times[i] < 0 || (i > 0 && p.times[i] < p.times[i - 1]))
      throw Error("flow_solve: output times must be increasing and nonnegative");
  Trajectory tr;
  tr.probe = probe_norm(p.gen, p.z0, 0.0, 3, p.seed);
  if (!p.times.empty() && p.times.back() > 0)
    tr.probe = std::max(tr.probe, probe_norm(p.gen, p.z0, p.times.back(), 3, p.seed + 1));
  if (!std::isfinite(tr.probe) || tr.probe > p.probe_limit)
    throw Error("flow_solve: generator fails the order-zero probe (norm " +
                std::to_string(tr.probe) + ")");

  SampledField y = p.z0;
  double t = 0.0, h = std::min(p.h0, p.h_max);
  for (double tout : p.times) {
    while (t < tout) {
      double step = std::min(h, tout - t);
      bool last = step == tout - t;
      SampledField big = rk4_step(p.gen, t, y, step);
      SampledField half = rk4_step(p.gen, t, y, step / 2);
      SampledField two = rk4_step(p.gen, t + step / 2, half, step / 2);
      SampledField diff = two - big;
      double err = l2_norm(diff) / 15.0;
      double scale = std::max(l2_norm(two), 1e-300);
      double tol = p.rtol * scale;
      if (err <= tol || step <= p.h_min) {
        if (err > tol) throw Error("flow_solve: step size underflow");
        y = two;
        y += cd(1.0 / 15.0) * diff;
        t = last ? tout : t + step;
        ++tr.steps;
      } else {
        ++tr.rejected;
      }
      double fac = err > 0 ? 0.9 * std::pow(tol / err, 0.2) : 4.0;
      double hn = step * std::clamp(fac, 0.2, 4.0);
      if (!last || err > tol) h = std::min(hn, p.h_max);
      if (h < p.h_min) throw Error("flow_solve: step size underflow");
    }
    tr.times.push_back(tout);
    tr.states.push_back(y);
    tr.norms.push_back(l2_norm(y));
  }

  if (p.dense_oracle && p.gen.dense) {
    const CMat& L0 = *p.gen.dense;
    CVec z0 = to_vector(p.z0);
    double worst = 0;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      double s = p.gen.factor_integral ? p.gen.factor_integral(tr.times[i]) : tr.times[i];
      CMat E = (s * L0).exp();
      CVec ex = E * z0;
      double e = (to_vector(tr.states[i]) - ex).norm() / std::max(ex.norm(), 1e-300);
      worst = std::max(worst, e);
    }
    tr.oracle_err = worst;
    tr.oracle_ok = worst <= p.oracle_tol;
  }
  return tr;
}

double theta_prime(double theta) { return theta / (1.0 + theta); }

double tstar_rates(int j, double theta_star, double eps_a, double g) {
  if (!(g > 0)) return std::numeric_limits<double>::infinity();
  return double(j) * (theta_star * std::log(2.0) - eps_a) / g;
}

double tstar_transition(int j, double theta_star, double eps_a, double dzeta) {
  if (!(dzeta > 0)) return std::numeric_limits<double>::infinity();
  return std::sqrt(2.0 * double(j) * (theta_star * std::log(2.0) - eps_a) / dzeta);
}

double tfinal_elliptic(int j, double s, int d, double sigma, double gap) {
  if (!(gap > 0)) return std::numeric_limits<double>::infinity();
  return 7.0 * double(j) / 8.0 * (2 * s - 1 - 0.5 * d - sigma) * std::log(2.0) / gap;
}

RealPartRange sample_real_parts(const std::function<Mat(const Vec&, const Vec&)>& a,
                                const std::vector<Vec>& xs, const std::vector<Vec>& xis,
                                const std::function<double(const Vec&, const Vec&)>& w) {
  RealPartRange r;
  for (const auto& x : xs)
    for (const auto& xi : xis) {
      Mat m = a(x, xi);
      Mat h = (m + m.adjoint()) / 2.0;
      Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
      r.max = std::max(r.max, es.eigenvalues().maxCoeff());
      if (!w || w(x, xi) > 0) r.min = std::min(r.min, es.eigenvalues().minCoeff());
    }
  return r;
}

namespace {

std::vector<Vec> box_samples(int d, const Vec& c, double r, int per_axis) {
  std::vector<Vec> out;
  per_axis = std::max(per_axis, 2);
  for (int a = 0; a < per_axis; ++a) {
    double ta = -r + 2 * r * double(a) / double(per_axis - 1);
    if (d == 1) {
      out.push_back({c[0] + ta, 0.0});
      continue;
    }
    for (int b = 0; b < per_axis; ++b) {
      double tb = -r + 2 * r * double(b) / double(per_axis - 1);
      out.push_back({c[0] + ta, c[1] + tb});
    }
  }
  return out;
}

}  // namespace

// slightly inside the support so the samples see positive cutoff values
std::vector<Vec> cutoff_x_samples(const TensorCutoff& c, int per_axis) {
  return box_samples(c.d, c.x0, 0.999 * c.rx, per_axis);
}

std::vector<Vec> cutoff_xi_samples(const TensorCutoff& c, int per_axis) {
  return box_samples(c.d, c.xi0, 0.999 * c.rxi, per_axis);
}

RateReport garding_rates(const SymbolSpec& Q, int j, const SampledField& u0, double tfinal,
                         const RateOpts& o) {
  RateReport rep;
  rep.kind = "garding";
  rep.tag = o.tag;
  const Grid& g = u0.grid();
  double sgn = o.tag == SignTag::decay ? -1.0 : 1.0;
  auto growth = [&](const Vec& x, const Vec& xi) -> Mat { return sgn * Q.eval(x, xi); };

  // global samples on the grid band, local ones on supp psi~
  double sc = std::ldexp(1.0, -j);
  std::vector<Vec> gx, gxi;
  std::size_t stride = std::max<std::size_t>(1, g.size() / std::size_t(o.samples * (g.d == 2 ? o.samples : 1)));
  for (std::size_t p = 0; p < g.size(); p += stride) gx.push_back(g.point(p));
  for (std::size_t k = 0; k < g.size(); k += stride) gxi.push_back(scaled(g.freq(k), sc));
  auto lx = cutoff_x_samples(o.psi_tilde, o.samples);
  auto lxi = cutoff_xi_samples(o.psi_tilde, o.samples);
  auto glob = sample_real_parts(growth, gx, gxi, nullptr);
  auto loc = sample_real_parts(growth, lx, lxi, [&](const Vec& x, const Vec& xi) { return o.psi_tilde(x, xi); });
  rep.gamma_plus = o.gamma_plus.value_or(std::max(glob.max, loc.max));
  rep.gamma_minus = o.gamma_minus.value_or(loc.min);
  if (glob.max > rep.gamma_plus + 1e-12 || loc.max > rep.gamma_plus + 1e-12)
    rep.notes.push_back("sampled Re Q exceeds the declared gamma_plus");
  if (loc.min < rep.gamma_minus - 1e-12)
    rep.notes.push_back("sampled Re Q on supp psi~ falls below the declared gamma_minus");

  rep.theta_star = theta_star(o.theta, g.d);
  rep.t_star = tstar_rates(j, rep.theta_star, o.eps_a, rep.gamma_plus - rep.gamma_minus);
  rep.t_final = std::min(tfinal, rep.t_star);
  if (!(rep.t_final > 0)) throw Error("garding_rates: empty time window (t* <= 0)");

  SampledField loc0 = localized_cutoff_op(o.psi_tilde, j, u0, o.quant.kind, o.quant.fam);
  double n0 = l2_norm(u0), nl = l2_norm(loc0);
  if (!(nl > 1e-14 * n0)) throw Error("garding_rates: op_j(psi~) u0 = 0, no lower bound");

  QuantOpts q = o.quant;
  q.j = j;
  FlowProblem fp;
  fp.gen = symbol_generator(Q, g, q, o.tag);
  fp.j = j;
  fp.z0 = u0;
  fp.dense_oracle = o.dense_oracle;
  for (int i = 1; i <= o.nt; ++i) fp.times.push_back(rep.t_final * double(i) / double(o.nt));
  Trajectory tr = flow_solve(fp);
  if (!tr.oracle_ok) rep.notes.push_back("dense oracle mismatch");

  double slack = std::ldexp(1.0, 0) * std::pow(2.0, -double(j) * rep.theta_star);
  rep.times.push_back(0.0);
  rep.log_norms.push_back(std::log(n0));
  rep.log_upper.push_back(std::log(n0));
  rep.log_lower.push_back(std::log(0.9 * nl));
  rep.C_upper = rep.C_lower = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    double t = tr.times[i], ln = std::log(tr.norms[i]);
    rep.times.push_back(t);
    rep.log_norms.push_back(ln);
    rep.log_upper.push_back(std::log(n0) + t * (rep.gamma_plus + o.C * slack));
    rep.log_lower.push_back(std::log(0.9 * nl) + t * (rep.gamma_minus - o.C * slack));
    rep.C_upper = std::max(rep.C_upper, (ln - std::log(n0) - t * rep.gamma_plus) / (t * slack));
    rep.C_lower =
        std::max(rep.C_lower, (std::log(0.9 * nl) + t * rep.gamma_minus - ln) / (t * slack));
  }
  rep.upper_ok = rep.C_upper <= o.C + 1e-9;
  rep.lower_ok = rep.C_lower <= o.C + 1e-9;
  rep.fitted_rate = fit_line(rep.times, rep.log_norms).slope;
  return rep;
}

// ---------------------------------------------------------------- band operators

std::vector<std::size_t> band_modes(const Grid& g, int j, const TensorCutoff& c) {
  std::vector<std::size_t> out;
  double sc = std::ldexp(1.0, -j);
  for (std::size_t k = 0; k < g.size(); ++k)
    if (c.psi2(scaled(g.freq(k), sc)) > 0) out.push_back(k);
  return out;
}

BandMatrix band_matrix(const SymbolSpec& a, const Grid& g, const QuantOpts& o,
                       const std::vector<std::size_t>& modes) {
  BandMatrix B;
  B.g = g;
  B.N = a.N;
  B.modes = modes;
  std::size_t np = g.size(), nm = modes.size();
  int N = a.N;
  B.full = CMat::Zero(Eigen::Index(N * np), Eigen::Index(N * nm));
  double unit = std::pow(g.volume(), -0.5), back = std::sqrt(g.volume());
  for (std::size_t i = 0; i < nm; ++i)
    for (int c = 0; c < N; ++c) {
      std::vector<cd> co(std::size_t(N) * np, cd(0));
      co[c * np + modes[i]] = unit;
      SampledField f = SampledField::from_coeffs(g, N, co);
      SampledField res = apply_op(a, f, o);
      const auto& out = res.coeffs();
      for (std::size_t r = 0; r < out.size(); ++r) B.full(Eigen::Index(r), Eigen::Index(c * nm + i)) = out[r] * back;
    }
  return B;
}

CMat BandMatrix::block() const {
  std::size_t np = g.size(), nm = modes.size();
  CMat b(Eigen::Index(N * nm), Eigen::Index(N * nm));
  for (int r = 0; r < N; ++r)
    for (std::size_t i = 0; i < nm; ++i) b.row(Eigen::Index(r * nm + i)) = full.row(Eigen::Index(r * np + modes[i]));
  return b;
}

Propagator::Propagator(CMat A) : A_(std::move(A)) {
  if (A_.rows() == 0) return;
  norm1_ = A_.cwiseAbs().colwise().sum().maxCoeff();
  Eigen::ComplexEigenSolver<CMat> es(A_);
  if (es.info() != Eigen::Success) return;
  V_ = es.eigenvectors();
  lam_ = es.eigenvalues();
  Eigen::PartialPivLU<CMat> lu(V_);
  Vinv_ = lu.inverse();
  double scale = std::max(A_.norm(), 1e-300);
  double res = (V_ * lam_.asDiagonal() * Vinv_ - A_).norm() / scale;
  double inv = (Vinv_ * V_ - CMat::Identity(V_.rows(), V_.cols())).norm();
  diag_ = std::isfinite(res) && res < 1e-9 && inv < 1e-8;
}

CMat Propagator::at(double t) const {
  if (A_.rows() == 0) return A_;
  if (!diag_) return (t * A_).exp();
  Eigen::VectorXcd e = (t * lam_.array()).exp().matrix();
  return V_ * e.asDiagonal() * Vinv_;
}

CVec Propagator::apply(double t, const CVec& v) const {
  if (A_.rows() == 0) return v;
  if (diag_) {
    Eigen::VectorXcd e = (t * lam_.array()).exp().matrix();
    return V_ * e.cwiseProduct(Vinv_ * v);
  }
  // truncated Taylor series on substeps with |t| ||A||_1 / steps <= 1
  double a1 = std::abs(t) * norm1_;
  int steps = std::max(1, int(std::ceil(a1)));
  double h = t / steps;
  CVec y = v;
  for (int s = 0; s < steps; ++s) {
    CVec term = y, acc = y;
    double base = std::max(y.norm(), 1e-300);
    for (int k = 1; k <= 60; ++k) {
      term = (h / k) * (A_ * term);
      acc += term;
      if (term.norm() <= 1e-17 * base) break;
    }
    y = std::move(acc);
  }
  return y;
}

double op_norm(const CMat& X, int iters) {
  if (X.size() == 0) return 0.0;
  if (std::min(X.rows(), X.cols()) <= 2048) {
    CMat G = X.cols() <= X.rows() ? CMat(X.adjoint() * X) : CMat(X * X.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(G, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  CVec v = CVec::Ones(X.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 0.01 * std::sin(double(i));
  v.normalize();
  double s = 0;
  for (int k = 0; k < iters; ++k) {
    CVec w = X.adjoint() * (X * v);
    s = std::sqrt(w.norm());
    if (w.norm() == 0) return 0.0;
    v = w / w.norm();
  }
  return s;
}

std::vector<CMat> exp_series(const CMat& A, const std::vector<double>& times, double sign) {
  std::vector<CMat> out;
  CMat U = CMat::Identity(A.rows(), A.cols());
  double prev = 0.0, last_dt = -1.0;
  CMat step;
  for (double t : times) {
    if (t < prev) throw Error("exp_series: times must be increasing and >= 0");
    double dt = t - prev;
    if (dt > 0) {
      if (std::abs(dt - last_dt) > 1e-12 * std::max(1.0, dt)) {
        step = (sign * dt * A).exp();
        last_dt = dt;
      }
      U = step * U;
    }
    out.push_back(U);
    prev = t;
  }
  return out;
}

std::vector<double> flow_norms(const CMat& A, const std::vector<double>& times, double sign,
                               const CMat* left, const CMat* right) {
  std::vector<double> out;
  for (const CMat& U : exp_series(A, times, sign)) {
    CMat X = right ? CMat(U * *right) : U;
    if (left) X = *left * X;
    out.push_back(op_norm(X));
  }
  return out;
}

BlockFlows band_flows(const SymbolSpec& EE, const SymbolSpec& HH, const PipelineGeometry& geo,
                      const QuantOpts& q) {
  BlockFlows b;
  b.modes = band_modes(geo.local, geo.j, geo.psi_sharp);
  b.AE = band_matrix(EE, geo.local, q, b.modes).block();
  b.AH = band_matrix(HH, geo.local, q, b.modes).block();
  b.PiE = band_matrix(geo.psi_flat.symbol(EE.N), geo.local, q, b.modes).block();
  b.PiH = band_matrix(geo.psi_flat.symbol(HH.N), geo.local, q, b.modes).block();
  b.PsiE = band_matrix(geo.psi_tilde.symbol(EE.N), geo.local, q, b.modes).full;
  return b;
}

// ---------------------------------------------------------------- elliptic rates

Mat ordered_schur_basis(const Mat& M, const Mat& P, int& rank) {
  int n = int(M.rows());
  Eigen::ColPivHouseholderQR<CMat> qr{CMat(P)};
  qr.setThreshold(1e-8);
  rank = int(qr.rank());
  CMat Q = qr.householderQ() * CMat::Identity(n, n);
  CMat K = Q;
  auto refine = [&](int off, int len) {
    if (len == 0) return;
    CMat B = Q.middleCols(off, len).adjoint() * CMat(M) * Q.middleCols(off, len);
    Eigen::ComplexSchur<CMat> cs(B, true);
    K.middleCols(off, len) = Q.middleCols(off, len) * cs.matrixU();
  };
  refine(0, rank);
  refine(rank, n - rank);
  return Mat(K);
}

EllipticRates elliptic_rate_bounds(const EllipticSymbols& S, const PipelineGeometry& geo,
                                   const EllipticRateOpts& o) {
  EllipticRates R;
  R.delta = geo.delta;
  R.lambda0 = S.base.lambda0;
  R.growth = S.base.growth;
  R.half_gap = S.base.separation / 2;
  Mat M0 = S.M.eval(geo.x0, geo.xi0);
  Mat P0 = S.P_E.eval(geo.x0, geo.xi0);
  int r = 0;
  Mat K = ordered_schur_basis(M0, P0, r);
  int n = int(M0.rows());
  if (r == 0 || r == n) throw Error("elliptic_rate_bounds: degenerate elliptic range");
  Mat Kd = Mat::Zero(n, n), Kdi = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    Kd(i, i) = std::pow(geo.delta, i);
    Kdi(i, i) = std::pow(geo.delta, -i);
  }
  Mat Kinv = K.adjoint();
  auto tri = [&](const Mat& X) -> Mat { return Mat(Kdi * Kinv * X * K * Kd); };
  {
    Mat T = tri(M0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b) R.max_offdiag = std::max(R.max_offdiag, std::abs(T(a, b)));
  }
  auto herm_range = [](const Mat& X, double& mx, double& mn) {
    Mat h = -(X + X.adjoint()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
    mx = std::max(mx, es.eigenvalues().maxCoeff());
    mn = std::min(mn, es.eigenvalues().minCoeff());
  };
  double gE = -1e300, gEf = -1e300, gH = -1e300, gEm = 1e300, dummy = 1e300, dmx = -1e300;
  // forward rates over supp psi_flat, where the projected data live and psi_sharp = 1
  auto sx = cutoff_x_samples(geo.psi_flat, o.samples);
  auto sxi = cutoff_xi_samples(geo.psi_flat, o.samples);
  for (const auto& x : sx)
    for (const auto& xi : sxi) {
      Mat TE = tri(S.ME.eval(x, xi));
      Mat TH = tri(S.MH.eval(x, xi));
      herm_range(TE.topLeftCorner(r, r), gE, dummy);
      herm_range(TE, gEf, dummy);
      herm_range(TH.bottomRightCorner(n - r, n - r), gH, dummy);
    }
  auto tx = cutoff_x_samples(geo.psi_tilde, o.samples);
  auto txi = cutoff_xi_samples(geo.psi_tilde, o.samples);
  for (const auto& x : tx)
    for (const auto& xi : txi) {
      if (geo.psi_tilde(x, xi) <= 0) continue;
      Mat TE = tri(S.ME.eval(x, xi));
      herm_range(TE.topLeftCorner(r, r), dmx, gEm);
    }
  R.gamma_E = gE;
  R.gamma_E_full = gEf;
  R.gamma_H = gH;
  R.gamma_E_minus = gEm;
  if (!o.measure) return R;

  QuantOpts q = o.quant;
  q.j = geo.j;
  // flows of the E and H blocks in the triangularizing coordinates
  auto block = [&](const SymbolSpec& src, bool E) {
    SymbolSpec b;
    b.name = src.name + (E ? "_EE" : "_HH");
    b.d = src.d;
    b.N = E ? r : n - r;
    auto f = src.eval;
    b.eval = [f, K, Kd, Kdi, Kinv, r, n, E](const Vec& x, const Vec& xi) -> Mat {
      Mat T = Kdi * Kinv * f(x, xi) * K * Kd;
      return E ? Mat(T.topLeftCorner(r, r)) : Mat(T.bottomRightCorner(n - r, n - r));
    };
    return b;
  };
  R.bands = band_flows(block(S.ME, true), block(S.MH, false), geo, q);
  R.band = R.bands.modes.size();
  R.times = o.times.empty() ? std::vector<double>{1, 2, 4, 8} : o.times;
  R.fwd_E = flow_norms(R.bands.AE, R.times, -1.0, nullptr, &R.bands.PiE);
  R.fwd_H = flow_norms(R.bands.AH, R.times, -1.0, nullptr, &R.bands.PiH);
  R.bwd_E = flow_norms(R.bands.AE, R.times, 1.0, &R.bands.PsiE, &R.bands.PiE);
  auto slope = [&](const std::vector<double>& v) {
    std::vector<double> l;
    for (double a : v) l.push_back(std::log(std::max(a, 1e-300)));
    return fit_line(R.times, l).slope;
  };
  R.meas_E = slope(R.fwd_E);
  R.meas_H = slope(R.fwd_H);
  R.meas_E_minus = -slope(R.bwd_E);
  return R;
}

}  // namespace mlab
