#include "mlab/datum.hpp"

#include <unordered_map>

#include "mlab/parallel.hpp"

namespace mlab {

double amplitude(int j, double sigma) {
  if (j < 1) throw Error("amplitude: j must be >= 1");
  return std::pow(2.0, -double(j) * sigma) / (1.0 + j);
}

// ---------------------------------------------------------------- sparse spectra

Vec SparseSpectrum::freq(const LatticeIndex& m) const {
  double w = spacing();
  return {w * double(m[0]), d == 2 ? w * double(m[1]) : 0.0};
}

cd SparseSpectrum::operator()(const Vec& x) const {
  Vec y = diffv(x, origin);
  cd s = 0;
  for (const auto& [m, v] : c) s += v * std::exp(kI * dot(y, freq(m), d));
  return s;
}

cd SparseSpectrum::derivative(const Vec& x, int axis) const {
  Vec y = diffv(x, origin);
  cd s = 0;
  for (const auto& [m, v] : c) {
    Vec k = freq(m);
    s += kI * k[axis] * v * std::exp(kI * dot(y, k, d));
  }
  return s;
}

void SparseSpectrum::add_shifted(const SparseSpectrum& w, const LatticeIndex& shift, cd a) {
  if (w.d != d || std::abs(w.L - L) > 1e-12 * L) throw Error("SparseSpectrum: lattice mismatch");
  for (const auto& [m, v] : w.c) c[{m[0] + shift[0], m[1] + shift[1]}] += a * v;
}

SparseSpectrum SparseSpectrum::multiplied(const std::function<cd(const Vec&)>& m) const {
  SparseSpectrum out = *this;
  for (auto& [k, v] : out.c) v *= m(freq(k));
  return out;
}

SparseSpectrum SparseSpectrum::real_part() const {
  SparseSpectrum out = *this;
  out.c.clear();
  for (const auto& [m, v] : c) {
    out.c[m] += 0.5 * v;
    out.c[{-m[0], -m[1]}] += 0.5 * std::conj(v);
  }
  return out;
}

double SparseSpectrum::l2() const {
  double s = 0;
  for (const auto& [m, v] : c) s += std::norm(v);
  return std::sqrt(s * std::pow(L, d));
}

LatticeIndex SparseSpectrum::index_of(const Vec& k) const {
  LatticeIndex m{0, 0};
  for (int a = 0; a < d; ++a) {
    double t = k[a] / spacing();
    m[a] = std::lround(t);
    if (std::abs(t - double(m[a])) > 1e-9 * std::max(1.0, std::abs(t)))
      throw Error("SparseSpectrum: frequency off the lattice");
  }
  return m;
}

SampledField SparseSpectrum::sample(const Grid& g) const {
  if (g.d != d) throw Error("SparseSpectrum::sample: dimension mismatch");
  SampledField out(g, 1);
  auto& ov = out.values_mut();
  long n = g.n;
  double h = g.step();
  Vec cf = g.carrier_freq();
  // per-axis phase tables e^{i (x_a - origin_a) (k_a - carrier_a)}
  auto axis_table = [&](int a, double k) {
    std::vector<cd> t(n);
    double x0 = g.origin[a] - origin[a];
    cd base = std::exp(kI * (x0 * k - 0.0));
    cd step = std::exp(kI * h * (k - cf[a]));
    cd cur = base;
    for (long i = 0; i < n; ++i) {
      t[i] = cur;
      cur *= step;
      if ((i & 63) == 63) cur = base * std::exp(kI * double(i + 1) * h * (k - cf[a]));
    }
    return t;
  };
  std::vector<std::pair<LatticeIndex, cd>> modes(c.begin(), c.end());
  int T = thread_count();
  std::vector<std::vector<cd>> bufs(T, std::vector<cd>(ov.size(), cd(0)));
  parallel_for(modes.size(), [&](std::size_t b, std::size_t e, int t) {
    auto& buf = bufs[t];
    for (std::size_t i = b; i < e; ++i) {
      Vec k = freq(modes[i].first);
      cd v = modes[i].second;
      auto t0 = axis_table(0, k[0]);
      if (d == 1) {
        for (long p = 0; p < n; ++p) buf[p] += v * t0[p];
      } else {
        auto t1 = axis_table(1, k[1]);
        for (long p = 0; p < n; ++p) {
          cd a = v * t0[p];
          for (long q = 0; q < n; ++q) buf[p * n + q] += a * t1[q];
        }
      }
    }
  });
  for (auto& b : bufs)
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += b[i];
  return out;
}

SparseSpectrum bump_envelope(int d, double R, double L, const Vec& x0) {
  if (!(R > 0) || !(L > 0)) throw Error("bump_envelope: R and L must be positive");
  SparseSpectrum w;
  w.d = d;
  w.L = L;
  w.origin = x0;
  long mmax = long(std::ceil(R / w.spacing()));
  if (mmax < 2) throw Error("bump_envelope: box too small to resolve the bump");
  double total = 0;
  for (long a = -mmax; a <= mmax; ++a)
    for (long b = (d == 2 ? -mmax : 0); b <= (d == 2 ? mmax : 0); ++b) {
      Vec k = w.freq({a, b});
      double v = Mollifier::profile(norm2(k, d) / R);
      if (v <= 0) continue;
      w.c[{a, b}] = v;
      total += v;
    }
  for (auto& [m, v] : w.c) v /= total;
  return w;
}

// ---------------------------------------------------------------- oscillatory sum

OscillatoryDatum oscillatory_sum(const SparseSpectrum& w, OscillatoryOpts o,
                                 const DyadicFamily& fam) {
  fam.validate();
  if (o.J < 0) throw Error("oscillatory_sum: J must be >= 0");
  if (o.j0 < 1) throw Error("oscillatory_sum: j0 must be >= 1");
  double R = 0;
  for (const auto& [m, v] : w.c) R = std::max(R, norm2(w.freq(m), w.d));
  if (R > o.R * (1 + 1e-12) + 1e-15)
    throw Error("oscillatory_sum: envelope spectrum exceeds the declared radius R");
  if (!(std::ldexp(o.R, -o.j0) < fam.eps1 - 0.5) ||
      !(std::ldexp(o.R, -(o.j0 - 1)) + fam.eps2 < 1.0))
    throw Error("oscillatory_sum: separation conditions on R, j0 and the dyadic radii fail");
  OscillatoryDatum out;
  out.w = w;
  double xin = norm2(o.xi0, w.d);
  if (std::abs(xin - 1.0) > 1e-12) throw Error("oscillatory_sum: xi0 must be a unit vector");
  if (o.max_freq > 0) {
    int J = o.J;
    while (J > 0 && std::ldexp(xin, J) + o.R > o.max_freq) --J;
    if (J < o.J) {
      out.warnings.push_back("J truncated from " + std::to_string(o.J) + " to " +
                             std::to_string(J) + ": modulation outside the grid band");
      o.J = J;
    }
  }
  out.a.assign(std::size_t(o.J) + 1, 0.0);
  double tail = 0;
  for (int j = 1; j <= o.J; ++j) {
    out.a[j] = amplitude(j, o.sigma);
    tail += out.a[j];
  }
  double wmax = 0;
  for (const auto& [m, v] : w.c) wmax += std::abs(v);
  double wx0 = std::abs(w(w.origin));
  if (wx0 <= 0) throw Error("oscillatory_sum: envelope vanishes at x0");
  if (o.a0 < 0) o.a0 = 2.0 * tail * wmax / wx0;
  out.a[0] = o.a0;
  out.w_in.d = w.d;
  out.w_in.L = w.L;
  out.w_in.origin = w.origin;
  for (int j = 0; j <= o.J; ++j) {
    LatticeIndex sh = w.index_of(scaled(o.xi0, std::ldexp(1.0, j)));
    out.w_in.add_shifted(w, sh, out.a[j]);
  }
  out.opts = o;
  return out;
}

namespace {

double block_norm(const SparseSpectrum& s, const DyadicFamily& fam, int k) {
  double acc = 0;
  for (const auto& [m, v] : s.c) {
    double f = fam.phi(k, norm2(s.freq(m), s.d));
    acc += f * f * std::norm(v);
  }
  return std::sqrt(acc * std::pow(s.L, s.d));
}

}  // namespace

BlockReport block_norms(const OscillatoryDatum& osc, int jlo, int jhi, const DyadicFamily& fam) {
  jhi = std::min(jhi, osc.opts.J);
  if (jlo < 1 || jlo > jhi) throw Error("block_norms: empty index range");
  BlockReport r;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (int j = jlo; j <= jhi; ++j) {
    double nb = block_norm(osc.w_in, fam, j + 1);
    SparseSpectrum rest = osc.w_in;
    rest.add_shifted(osc.w, osc.w.index_of(scaled(osc.opts.xi0, std::ldexp(1.0, j))), -osc.a[j]);
    r.js.push_back(j);
    r.norms.push_back(nb);
    r.ratios.push_back(nb / osc.a[j]);
    r.leak.push_back(block_norm(rest, fam, j + 1) / osc.a[j]);
    lo = std::min(lo, r.ratios.back());
    hi = std::max(hi, r.ratios.back());
  }
  r.spread = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  return r;
}

SharpnessReport sharpness_witness(const OscillatoryDatum& osc, double exponent,
                                  const DyadicFamily& fam) {
  SharpnessReport r;
  r.exponent = exponent;
  int j0 = osc.opts.j0, J = osc.opts.J;
  for (int lo = j0; 2 * lo - 1 <= J; lo *= 2) {
    double s = 0;
    for (int j = lo; j < 2 * lo; ++j) {
      double b = block_norm(osc.w_in, fam, j + 1) * std::pow(2.0, j * exponent);
      s += b * b;
    }
    r.chunk_end.push_back(2 * lo - 1);
    r.chunk_sums.push_back(s);
  }
  if (r.chunk_sums.size() < 2) throw Error("sharpness_witness: need J >= 4 j0 - 1");
  r.bounded = r.growing = true;
  for (std::size_t i = 1; i < r.chunk_sums.size(); ++i) {
    r.bounded = r.bounded && r.chunk_sums[i] < r.chunk_sums[i - 1];
    r.growing = r.growing && r.chunk_sums[i] > r.chunk_sums[i - 1];
  }
  return r;
}

// ---------------------------------------------------------------- polarization

Mat principal_M(const SystemSpec& sys, const SpectralPoint& pt, const CVec& u) {
  return kI * principal_symbol(sys, pt.t, pt.x, u, pt.v, pt.xi);
}

Mat elliptic_projector(const SystemSpec& sys, const SpectralPoint& pt, const SpectralSplit& base,
                       const CVec& u) {
  return contour_projectors(principal_M(sys, pt, u), base.C_E, base.C_H).P_E;
}

PolarizationResult polarization_select(const SystemSpec& sys, const SpectralPoint& pt,
                                       double tol_rel, double alpha0) {
  if (!ellipticity_classify(sys, pt).elliptic)
    throw Error("polarization_select: base point is not elliptic");
  PolarizationResult r;
  const CVec& u0 = pt.u;
  int N = sys.N;
  r.split = elliptic_split(principal_M(sys, pt, u0));
  r.tol = tol_rel * std::max(1.0, u0.norm());
  CVec pu0 = r.split.P_E * u0;
  if (pu0.norm() > r.tol) {
    r.u1 = u0;
    r.proj_norm = pu0.norm();
    r.branch = "unchanged";
    return r;
  }
  r.repaired = true;
  // unitary elliptic eigenvectors of M0
  Mat M0 = principal_M(sys, pt, u0);
  Eigen::ComplexEigenSolver<Mat> es(M0);
  std::vector<CVec> cand;
  for (int i = 0; i < N; ++i) {
    cd l = es.eigenvalues()(i);
    bool inE = false;
    for (const auto& c : r.split.C_E) inE = inE || std::abs(l - c.center) < c.radius;
    if (inE) cand.push_back(es.eigenvectors().col(i).normalized());
  }
  const double h = 1e-6;
  auto cond_of = [&](const CVec& e) -> CVec {
    Mat dP = (elliptic_projector(sys, pt, r.split, u0 + h * e) -
              elliptic_projector(sys, pt, r.split, u0 - h * e)) /
             (2 * h);
    return e + dP * u0;
  };
  auto accept = [&](const CVec& e, const std::string& branch) {
    CVec cv = cond_of(e);
    if (cv.norm() <= 1e-8) return false;
    double a = alpha0;
    for (int k = 0; k < 40; ++k, a /= 2) {
      CVec u1 = u0 + a * e;
      SpectralPoint p1 = pt;
      p1.u = u1;
      if (!ellipticity_classify(sys, p1).elliptic) continue;
      double pn;
      try {
        pn = (elliptic_projector(sys, pt, r.split, u1) * u1).norm();
      } catch (const Error&) {
        continue;
      }
      if (pn > r.tol) {
        r.u1 = u1;
        r.alpha = a;
        r.halvings = k;
        r.e = e;
        r.condition = cv;
        r.proj_norm = pn;
        r.branch = branch;
        return true;
      }
    }
    return false;
  };
  for (const auto& e : cand)
    if (accept(e, "eigenvector")) return r;
  // rescaled branch: e along (d_u P_E . e_k) u0
  for (const auto& ek : cand) {
    CVec w = cond_of(ek) - ek;
    if (w.norm() <= 1e-12) continue;
    for (cd lam : {cd(1), kI})
      if (accept(lam * w.normalized(), "rescaled")) return r;
  }
  throw Error("polarization_select: no admissible elliptic direction");
}

// ---------------------------------------------------------------- assembled datum

double FullDatum::psi1(const Vec& x) const {
  return smooth_cut(norm2(diffv(x, x0), d), psi_radius / 2, psi_radius);
}

CVec FullDatum::corrector(const Vec& x) const {
  CVec out = CVec::Zero(N);
  double p = psi1(x);
  if (p == 0) return out;
  for (int k = 0; k < d; ++k) out += (x[k] - x0[k]) * p * corr[k];
  return out;
}

CVec FullDatum::value(const Vec& x) const { return u1 * (osc.w_in(x) / anchor) + corrector(x); }

Grad FullDatum::gradient(const Vec& x) const {
  Grad g;
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) g[k] = CVec::Zero(N);
  for (int k = 0; k < d; ++k) {
    g[k] = u1 * (osc.w_in.derivative(x, k) / anchor);
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] += (corrector(xp) - corrector(xm)) / (2 * h);
  }
  return g;
}

SampledField FullDatum::sample(const Grid& g) const {
  SampledField w = osc.w_in.sample(g);
  SampledField out(g, N);
  auto& ov = out.values_mut();
  std::size_t np = g.size();
  Vec cf = g.carrier_freq();
  for (std::size_t p = 0; p < np; ++p) {
    Vec x = g.point(p);
    CVec cr = corrector(x);
    cd demod = std::exp(-kI * dot(diffv(x, g.origin), cf, d));
    for (int c = 0; c < N; ++c) ov[c * np + p] = u1(c) * w.value(0, p) / anchor + cr(c) * demod;
  }
  return out;
}

FullDatum assemble_datum(const CVec& u1, const Grad& v0, const OscillatoryDatum& osc,
                         const Vec& x0, double psi_radius, double tol) {
  FullDatum u;
  u.d = osc.w_in.d;
  u.N = int(u1.size());
  u.x0 = x0;
  u.u1 = u1;
  u.osc = osc;
  u.psi_radius = psi_radius;
  cd w0 = osc.w_in(x0);
  u.anchor = std::abs(w0);
  double scale = 0;
  for (const auto& [m, v] : osc.w_in.c) scale += std::abs(v);
  if (u.anchor <= tol * scale) throw Error("assemble_datum: |w_in(x0)| too small, increase a0");
  for (int k = 0; k < 2; ++k) {
    u.v0[k] = (k < int(v0.size()) && v0[k].size() == u.N) ? v0[k] : CVec::Zero(u.N);
    u.corr[k] = CVec::Zero(u.N);
  }
  for (int k = 0; k < u.d; ++k) u.corr[k] = u.v0[k] - u1 * (osc.w_in.derivative(x0, k) / u.anchor);
  // the phase of w_in(x0) is absorbed so that u_in(x0) = u1 when w_in(x0) > 0
  return u;
}

Grad matched_gradient(const CVec& u1, const OscillatoryDatum& osc, const Vec& x0) {
  double anchor = std::abs(osc.w_in(x0));
  if (anchor == 0.0) throw Error("matched_gradient: w_in(x0) = 0");
  Grad g;
  for (int k = 0; k < 2; ++k)
    g[k] = k < osc.w_in.d ? CVec(u1 * (osc.w_in.derivative(x0, k) / anchor)) : CVec::Zero(u1.size());
  return g;
}

AnchorCheck check_anchors(const FullDatum& u) {
  AnchorCheck a;
  a.value_err = (u.value(u.x0) - u.u1).norm();
  Grad g = u.gradient(u.x0);
  for (int k = 0; k < u.d; ++k) a.grad_err = std::max(a.grad_err, (g[k] - u.v0[k]).norm());
  return a;
}

// ---------------------------------------------------------------- geometry and symbols

PipelineGeometry make_geometry(int d, const Vec& x0, const Vec& xi0, int j, double delta,
                               double rx, long n) {
  if (!(delta > 0) || delta >= 0.25) throw Error("make_geometry: delta must lie in (0, 1/4)");
  if (!(rx > 0)) throw Error("make_geometry: rx must be positive");
  PipelineGeometry g;
  g.d = d;
  g.j = j;
  g.x0 = x0;
  g.xi0 = xi0;
  g.delta = delta;
  g.rx = rx;
  g.psi = TensorCutoff{d, x0, xi0, rx, delta, 0.0};
  g.psi_flat = g.psi.widened(2);
  g.psi_sharp = g.psi.widened(4);
  g.psi_tilde = g.psi;
  long m = long(std::ceil((4 * rx + 0.5) / kPi));
  g.local.d = d;
  g.local.L = 2 * kPi * double(m);
  for (int a = 0; a < 2; ++a) g.local.origin[a] = a < d ? x0[a] - g.local.L / 2 : 0.0;
  for (int a = 0; a < d; ++a) {
    double c = std::ldexp(xi0[a], j) * double(m);
    g.local.carrier[a] = std::lround(c);
    if (std::abs(c - double(g.local.carrier[a])) > 1e-9)
      throw Error("make_geometry: 2^j xi0 is not on the local lattice");
  }
  if (n == 0) {
    double need = (2 * delta * std::ldexp(1.0, j) + 48.0) * double(m);
    n = 64;
    while (double(n) < 2 * need) n *= 2;
  }
  g.local.n = n;
  g.local.validate();
  return g;
}

FullDatum mollified_datum(const FullDatum& u, double eps) {
  FullDatum out = u;
  if (eps > 0) {
    Mollifier k;
    int d = u.d;
    out.osc.w_in = u.osc.w_in.multiplied([&](const Vec& xi) { return cd(k.hat(scaled(xi, eps), d)); });
  }
  return out;
}

DatumCoefficients::DatumCoefficients(std::shared_ptr<const FullDatum> u, const Grid& g)
    : u_(std::move(u)), g_(g) {
  std::size_t np = g_.size();
  uv_.resize(np);
  gv_.resize(np);
  const FullDatum& src = *u_;
  parallel_for(np, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t p = b; p < e; ++p) {
      Vec x = g_.point(p);
      uv_[p] = src.value(x);
      gv_[p] = src.gradient(x);
    }
  });
}

std::pair<CVec, Grad> DatumCoefficients::at(const Vec& x) const {
  double h = g_.step();
  std::array<long, 2> idx{0, 0};
  bool node = true;
  for (int a = 0; a < g_.d; ++a) {
    double t = (x[a] - g_.origin[a]) / h;
    idx[a] = std::lround(t);
    node = node && std::abs(t - double(idx[a])) < 1e-9 && idx[a] >= 0 && idx[a] < g_.n;
  }
  if (node) {
    std::size_t p = g_.flat(idx[0], idx[1]);
    return {uv_[p], gv_[p]};
  }
  return {u_->value(x), u_->gradient(x)};
}

std::pair<CVec, Grad> datum_time_derivative(const SystemSpec& sys, const DatumCoefficients& c,
                                            const Vec& x, double h) {
  const FullDatum& u = c.datum();
  auto ut = [&](const Vec& y) {
    return CVec(-sys.F(0.0, y, u.value(y), u.gradient(y)));
  };
  auto [u0, v0] = c.at(x);
  CVec a = -sys.F(0.0, x, u0, v0);
  Grad g;
  for (int k = 0; k < 2; ++k) {
    if (k >= sys.d) {
      g[k] = CVec::Zero(sys.N);
      continue;
    }
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (ut(xp) - ut(xm)) / (2 * h);
  }
  return {a, g};
}

EllipticSymbols elliptic_symbols(const SystemSpec& sys, const FullDatum& u,
                                 const PipelineGeometry& geo, double eps) {
  if (sys.N != u.N || sys.d != u.d) throw Error("elliptic_symbols: system/datum size mismatch");
  EllipticSymbols S;
  S.j = geo.j;
  S.eps = eps;
  int d = sys.d, N = sys.N;
  double sj = std::ldexp(1.0, -geo.j);
  auto raw = std::make_shared<DatumCoefficients>(std::make_shared<FullDatum>(u), geo.local);
  auto moll = std::make_shared<DatumCoefficients>(std::make_shared<FullDatum>(mollified_datum(u, eps)),
                                                  geo.local);
  auto full = [sys, sj](const Vec& x, const std::pair<CVec, Grad>& c, const Vec& xi) -> Mat {
    return kI * principal_symbol(sys, 0.0, x, c.first, c.second, xi) +
           sj * dF_du(sys, 0.0, x, c.first, c.second);
  };
  // base split of the unlocalized mollified symbol
  Mat M0 = full(geo.x0, moll->at(geo.x0), geo.xi0);
  S.base = elliptic_split(M0);
  // E = the rE eigenvalues of smallest real part, enclosed per point by one circle
  std::size_t rE = S.base.mu_E.size();
  auto proj = [=](const Vec& x, const Vec& xi, bool elliptic) -> Mat {
    Mat m = full(x, moll->at(x), xi);
    Mat PE = cluster_projector(m, rE);
    return elliptic ? PE : Mat(Mat::Identity(N, N) - PE);
  };
  TensorCutoff sharp = geo.psi_sharp, flat = geo.psi_flat;
  S.A.name = "A~";
  S.A.d = d;
  S.A.N = N;
  S.A.order = 1.0;
  S.A.eval = [=](const Vec& x, const Vec& xi) -> Mat { return full(x, raw->at(x), xi); };
  S.M.name = "M";
  S.M.d = d;
  S.M.N = N;
  S.M.eval = [=](const Vec& x, const Vec& xi) -> Mat {
    double c = sharp(x, xi);
    if (c == 0) return Mat::Zero(N, N);
    return c * full(x, raw->at(x), xi);
  };
  // x-independence probe of the projector over the sharp support
  double var = 0;
  {
    for (int a = -2; a <= 2; ++a)
      for (int b = -1; b <= 1; ++b) {
        Vec x = geo.x0, xi = geo.xi0;
        x[0] += 0.45 * sharp.rx * a;
        xi[0] += 0.9 * sharp.rxi * b;
        if (d == 2) xi[1] += 0.3 * sharp.rxi * b;
        Vec x2 = x;
        x2[0] = geo.x0[0];
        var = std::max(var, (proj(x, xi, true) - proj(x2, xi, true)).norm());
      }
  }
  S.projector_x_independent = var < 1e-12;
  auto make_P = [&](bool elliptic) {
    SymbolSpec P;
    P.name = elliptic ? "P_E" : "P_H";
    P.d = d;
    P.N = N;
    P.eval = [=](const Vec& x, const Vec& xi) -> Mat {
      double c = flat(x, xi);
      if (c == 0) return Mat::Zero(N, N);
      return c * proj(x, xi, elliptic);
    };
    if (S.projector_x_independent) {
      Vec x0 = geo.x0;
      P.terms = {SepTerm{[flat](const Vec& x) { return cd(flat.psi1(x)); },
                         [=](const Vec& xi) -> Mat {
                           double c = flat.psi2(xi);
                           if (c == 0) return Mat::Zero(N, N);
                           return c * proj(x0, xi, elliptic);
                         }}};
    }
    SymbolSpec MP;
    MP.name = elliptic ? "M_E" : "M_H";
    MP.d = d;
    MP.N = N;
    MP.eval = [=](const Vec& x, const Vec& xi) -> Mat {
      double c = sharp(x, xi);
      if (c == 0) return Mat::Zero(N, N);
      return proj(x, xi, elliptic) * (c * full(x, raw->at(x), xi));
    };
    return std::make_pair(P, MP);
  };
  std::tie(S.P_E, S.ME) = make_P(true);
  std::tie(S.P_H, S.MH) = make_P(false);
  // d_t P^eps along d_t u = -F at the mollified coefficients, centered in the time step
  auto dtab = std::make_shared<std::vector<std::pair<CVec, Grad>>>(geo.local.size());
  parallel_for(geo.local.size(), [&](std::size_t b, std::size_t e, int) {
    for (std::size_t p = b; p < e; ++p) (*dtab)[p] = datum_time_derivative(sys, *moll, geo.local.point(p));
  });
  Grid lg = geo.local;
  auto time_derivative = [=](const Vec& x) {
    double hs = lg.step();
    std::array<long, 2> idx{0, 0};
    bool node = true;
    for (int a = 0; a < lg.d; ++a) {
      double t = (x[a] - lg.origin[a]) / hs;
      idx[a] = std::lround(t);
      node = node && std::abs(t - double(idx[a])) < 1e-9 && idx[a] >= 0 && idx[a] < lg.n;
    }
    if (node) return (*dtab)[lg.flat(idx[0], idx[1])];
    return datum_time_derivative(sys, *moll, x);
  };
  auto make_dtP = [=](bool elliptic) {
    SymbolSpec P;
    P.name = elliptic ? "dtP_E" : "dtP_H";
    P.d = d;
    P.N = N;
    P.eval = [=](const Vec& x, const Vec& xi) -> Mat {
      double c = flat(x, xi);
      if (c == 0) return Mat::Zero(N, N);
      auto [u0, v0] = moll->at(x);
      auto [ut, vt] = time_derivative(x);
      const double h = 1e-4;
      auto at = [&](double s) {
        Grad v = v0;
        for (int k = 0; k < d; ++k) v[k] = v0[k] + s * vt[k];
        Mat m = full(x, {CVec(u0 + s * ut), v}, xi);
        Mat PE = cluster_projector(m, rE);
        return elliptic ? PE : Mat(Mat::Identity(N, N) - PE);
      };
      return (c * sj / (2 * h)) * (at(h) - at(-h));
    };
    return P;
  };
  S.dtP_E = make_dtP(true);
  S.dtP_H = make_dtP(false);
  return S;
}

namespace {

// pdo_j(psi2-type multiplier) applied to the corrector, sampled on the local grid
SampledField filtered_corrector(const FullDatum& u, const PipelineGeometry& geo,
                                const std::function<double(const Vec&)>& mult, bool window_psi1) {
  int d = geo.d;
  Grid aux;
  aux.d = d;
  aux.L = geo.local.L;
  aux.origin = geo.local.origin;
  double top = std::ldexp(norm2(geo.xi0, d) * (1 + 4 * geo.delta), geo.j) * aux.L / (2 * kPi) + 64;
  long cap = d == 1 ? (1L << 15) : 256;
  aux.n = 64;
  while (double(aux.n) < 2 * top && aux.n < cap) aux.n *= 2;
  SampledField c = SampledField::from_function(aux, u.N, [&](const Vec& x) { return u.corrector(x); });
  double sj = std::ldexp(1.0, -geo.j);
  c = fourier_multiplier(c, [&](const Vec& xi) { return cd(mult(scaled(xi, sj))); });
  if (window_psi1) {
    auto& cv = c.values_mut();
    for (std::size_t p = 0; p < aux.size(); ++p) {
      double w = geo.psi.psi1(aux.point(p));
      for (int k = 0; k < u.N; ++k) cv[k * aux.size() + p] *= w;
    }
  }
  return resample(c, geo.local, 1e-15);
}

SampledField filtered_oscillation(const FullDatum& u, const PipelineGeometry& geo,
                                  const std::function<double(const Vec&)>& mult,
                                  const std::function<double(const Vec&)>& window) {
  double sj = std::ldexp(1.0, -geo.j);
  SparseSpectrum f = u.osc.w_in.multiplied([&](const Vec& k) { return cd(mult(scaled(k, sj))); });
  SampledField s = f.sample(geo.local);
  std::size_t np = geo.local.size();
  SampledField out(geo.local, u.N);
  auto& ov = out.values_mut();
  for (std::size_t p = 0; p < np; ++p) {
    double w = window(geo.local.point(p));
    for (int c = 0; c < u.N; ++c) ov[c * np + p] = u.u1(c) * s.value(0, p) * (w / u.anchor);
  }
  return out;
}

}  // namespace

SampledField localized_datum(const FullDatum& u, const PipelineGeometry& geo, Quant kind,
                             const DyadicFamily& fam) {
  if (geo.d != u.d) throw Error("localized_datum: dimension mismatch");
  TensorCutoff psi = geo.psi, flat = geo.psi_flat;
  if (kind == Quant::pdo) {
    auto m = [psi](const Vec& z) { return psi.psi2(z); };
    SampledField osc = filtered_oscillation(u, geo, m, [psi](const Vec& x) { return psi.psi1(x); });
    return osc + filtered_corrector(u, geo, m, true);
  }
  // para: the psi2 factor only reads frequencies where psi_flat2 = 1
  double half = geo.local.L / 2;
  Vec x0 = geo.x0;
  int d = geo.d;
  auto chi = [=](const Vec& x) { return smooth_cut(norm2(diffv(x, x0), d), half - 1.6, half - 0.2); };
  auto m = [flat](const Vec& z) { return flat.psi2(z); };
  SampledField f = filtered_oscillation(u, geo, m, chi) + filtered_corrector(u, geo, m, false);
  return apply_para(geo.psi.symbol(u.N), geo.j, f, fam);
}

double ball_l2(const SampledField& f, const Vec& x0, double r) {
  const Grid& g = f.grid();
  std::size_t np = g.size();
  double s = 0;
  for (std::size_t p = 0; p < np; ++p) {
    if (norm2(diffv(g.point(p), x0), g.d) > r) continue;
    for (int c = 0; c < f.N(); ++c) s += std::norm(f.value(c, p));
  }
  return std::sqrt(s * g.cell());
}

ComponentBound elliptic_component_bound(const SystemSpec& sys, const FullDatum& u,
                                        const PipelineGeometry& geo, double eps, Quant kind,
                                        const DyadicFamily& fam) {
  ComponentBound b;
  b.j = geo.j;
  b.a_j = amplitude(geo.j, u.osc.opts.sigma);
  b.precondition_ok = geo.psi_tilde.psi1(geo.x0) == 1.0 && geo.psi_tilde.psi2(geo.xi0) == 1.0;
  EllipticSymbols S = elliptic_symbols(sys, u, geo, eps);
  SampledField v = localized_datum(u, geo, kind, fam);
  QuantOpts o;
  o.j = geo.j;
  o.kind = kind;
  o.fam = fam;
  b.vE0 = apply_op(S.P_E, v, o);
  SampledField z = localized_cutoff_op(geo.psi_tilde, geo.j, b.vE0, kind, fam);
  b.norm = ball_l2(z, geo.x0, geo.rx);
  b.ratio = b.norm / b.a_j;
  TensorCutoff psi = geo.psi;
  SampledField cr =
      filtered_corrector(u, geo, [psi](const Vec& zz) { return psi.psi2(zz); }, true);
  b.corrector_norm = l2_norm(cr) / b.a_j;
  return b;
}

double approx_datum_error(const SparseSpectrum& w, const CVec& u1,
                          const std::function<Mat(const Vec&)>& P, const PipelineGeometry& geo,
                          long n) {
  int d = geo.d;
  Grid g;
  g.d = d;
  g.n = n;
  g.L = 2 * kPi;
  for (int a = 0; a < d; ++a) g.origin[a] = geo.x0[a] - kPi;
  g.validate();
  double sj = std::ldexp(1.0, -geo.j);
  Vec xi0 = geo.xi0;
  TensorCutoff psi = geo.psi, flat = geo.psi_flat;
  SparseSpectrum ws = w.multiplied([&](const Vec& k) { return cd(psi.psi2(added(xi0, scaled(k, sj)))); });
  SampledField s = ws.sample(g);
  int N = int(u1.size());
  SampledField wt(g, N);
  auto& wv = wt.values_mut();
  std::size_t np = g.size();
  for (std::size_t p = 0; p < np; ++p) {
    double c = psi.psi1(g.point(p));
    for (int k = 0; k < N; ++k) wv[k * np + p] = u1(k) * s.value(0, p) * c;
  }
  SampledField lhs = matrix_multiplier(wt, [&](const Vec& xi) -> Mat {
    Vec z = added(xi0, scaled(xi, sj));
    double c = flat.psi2(z);
    if (c == 0) return Mat::Zero(N, N);
    return c * P(z);
  });
  Mat P0 = P(xi0);
  SampledField rhs = pointwise(wt, [&](const Vec&) { return P0; });
  return ball_l2(lhs - rhs, geo.x0, 1.0);
}

}  // namespace mlab
