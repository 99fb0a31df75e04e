#include "mlab/quantize.hpp"

#include <mutex>

#include "mlab/parallel.hpp"

namespace mlab {

namespace {

struct Roots {
  std::vector<cd> w;
  explicit Roots(long n) : w(n) {
    for (long t = 0; t < n; ++t) w[t] = std::polar(1.0, 2 * kPi * double(t) / double(n));
  }
  cd operator()(long t) const { return w[t]; }
};

long phase_index(const Grid& g, std::size_t p, std::size_t m) {
  auto a = g.multi(p), b = g.multi(m);
  long t = (a[0] * b[0] + (g.d == 2 ? a[1] * b[1] : 0)) % g.n;
  return t;
}

std::vector<std::size_t> active_columns(const SampledField& f, double tol) {
  const auto& F = f.coeffs();
  std::size_t np = f.npts();
  double mx = 0;
  for (auto& v : F) mx = std::max(mx, std::abs(v));
  std::vector<std::size_t> act;
  for (std::size_t m = 0; m < np; ++m) {
    double v = 0;
    for (int c = 0; c < f.N(); ++c) v = std::max(v, std::abs(F[c * np + m]));
    if (v > 0 && v > tol * mx) act.push_back(m);
  }
  return act;
}

// symbol column a(x_p, zeta) with optional x-spectral filter, layout [(r N + c) np + p]
void column_table(const SymbolSpec& a, const Grid& g, const Vec& zeta, int j,
                  const ColumnFilter* filt, std::vector<cd>& tab, std::vector<cd>& scratch) {
  std::size_t np = g.size();
  int N = a.N;
  tab.assign(std::size_t(N * N) * np, cd(0));
  for (std::size_t p = 0; p < np; ++p) {
    Mat v = a.eval(g.point(p), zeta);
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < N; ++c) tab[(r * N + c) * np + p] = v(r, c);
  }
  if (!filt) return;
  double br = jbracket(zeta, g.d), sc = std::ldexp(1.0, -j);
  std::vector<double> fv(np);
  for (std::size_t q = 0; q < np; ++q) fv[q] = (*filt)(sc * norm2(g.rel_freq(q), g.d), br);
  scratch.resize(np);
  Grid plain = g;
  for (int e = 0; e < N * N; ++e) {
    cd* col = tab.data() + std::size_t(e) * np;
    fft_forward(plain, col, scratch.data());
    for (std::size_t q = 0; q < np; ++q) scratch[q] *= fv[q];
    fft_inverse(plain, scratch.data(), col);
  }
}

SampledField column_engine(const SymbolSpec& a, int j, const SampledField& f,
                           const ColumnFilter* filt, double tol) {
  const Grid& g = f.grid();
  if (a.N != f.N()) throw Error("quantize: symbol/field size mismatch");
  if (a.d != g.d) throw Error("quantize: dimension mismatch");
  std::size_t np = g.size();
  int N = a.N;
  const auto& F = f.coeffs();
  auto act = active_columns(f, tol);
  Roots w(g.n);
  double sc = std::ldexp(1.0, -j);
  int T = thread_count();
  std::vector<std::vector<cd>> bufs(T, std::vector<cd>(std::size_t(N) * np, cd(0)));
  parallel_for(act.size(), [&](std::size_t b, std::size_t e, int t) {
    std::vector<cd> tab, scratch;
    auto& out = bufs[t];
    for (std::size_t i = b; i < e; ++i) {
      std::size_t m = act[i];
      Vec zeta = scaled(g.freq(m), sc);
      column_table(a, g, zeta, j, filt, tab, scratch);
      for (std::size_t p = 0; p < np; ++p) {
        cd ph = w(phase_index(g, p, m));
        for (int r = 0; r < N; ++r) {
          cd s = 0;
          for (int c = 0; c < N; ++c) s += tab[(r * N + c) * np + p] * F[c * np + m];
          out[r * np + p] += ph * s;
        }
      }
    }
  });
  SampledField res(g, N);
  auto& rv = res.values_mut();
  for (auto& bf : bufs)
    for (std::size_t i = 0; i < rv.size(); ++i) rv[i] += bf[i];
  return res;
}

SampledField multiplier_path(const SymbolSpec& a, int j, const SampledField& f, Quant kind,
                             const DyadicFamily& fam) {
  const Grid& g = f.grid();
  double sc = std::ldexp(1.0, -j);
  Vec x0 = g.origin;
  return matrix_multiplier(f, [&](const Vec& xi) -> Mat {
    Vec z = scaled(xi, sc);
    Mat m = a.eval(x0, z);
    if (kind == Quant::para) m *= fam.phi_adm(0.0, jbracket(z, g.d));
    return m;
  });
}

SampledField separable_path(const SymbolSpec& a, int j, const SampledField& f, Quant kind,
                            const DyadicFamily& fam) {
  const Grid& g = f.grid();
  std::size_t np = g.size();
  int N = a.N;
  double sc = std::ldexp(1.0, -j);
  SampledField out(g, N);
  auto& ov = out.values_mut();
  Grid plain = g;
  int klo = 1 << 30, khi = 0;
  if (kind == Quant::para) {
    for (std::size_t m = 0; m < np; ++m) {
      auto r = fam.active(jbracket(scaled(g.freq(m), sc), g.d));
      klo = std::min(klo, r.first);
      khi = std::max(khi, r.second);
    }
  }
  for (auto& t : a.terms) {
    std::vector<cd> bv(np), bh(np), tmp(np);
    for (std::size_t p = 0; p < np; ++p) bv[p] = t.b(g.point(p));
    if (kind == Quant::pdo) {
      SampledField gk = matrix_multiplier(f, [&](const Vec& xi) { return t.c(scaled(xi, sc)); });
      for (int r = 0; r < N; ++r)
        for (std::size_t p = 0; p < np; ++p) ov[r * np + p] += bv[p] * gk.value(r, p);
      continue;
    }
    fft_forward(plain, bv.data(), bh.data());
    for (int k = klo; k <= khi; ++k) {
      for (std::size_t q = 0; q < np; ++q)
        tmp[q] = bh[q] * fam.phi0(std::ldexp(sc * norm2(g.rel_freq(q), g.d), fam.N0 - k));
      std::vector<cd> bk(np);
      fft_inverse(plain, tmp.data(), bk.data());
      SampledField gk = matrix_multiplier(f, [&](const Vec& xi) -> Mat {
        Vec z = scaled(xi, sc);
        return t.c(z) * fam.phi(k, jbracket(z, g.d));
      });
      for (int r = 0; r < N; ++r)
        for (std::size_t p = 0; p < np; ++p) ov[r * np + p] += bk[p] * gk.value(r, p);
    }
  }
  return out;
}

}  // namespace

SampledField apply_filtered(const SymbolSpec& a, int j, const SampledField& f,
                            const ColumnFilter& filt, double column_tol) {
  return column_engine(a, j, f, &filt, column_tol);
}

SampledField apply_op(const SymbolSpec& a, const SampledField& f, const QuantOpts& o) {
  if (a.N != f.N()) throw Error("quantize: symbol/field size mismatch");
  if (o.fast_paths && a.x_independent) return multiplier_path(a, o.j, f, o.kind, o.fam);
  if (o.fast_paths && !a.terms.empty()) return separable_path(a, o.j, f, o.kind, o.fam);
  if (o.kind == Quant::pdo) return column_engine(a, o.j, f, nullptr, o.column_tol);
  const DyadicFamily fam = o.fam;
  ColumnFilter adm = [fam](double eta, double br) { return fam.phi_adm(eta, br); };
  return column_engine(a, o.j, f, &adm, o.column_tol);
}

SampledField apply_pdo(const SymbolSpec& a, int j, const SampledField& f) {
  QuantOpts o;
  o.j = j;
  o.kind = Quant::pdo;
  return apply_op(a, f, o);
}

SampledField apply_para(const SymbolSpec& a, int j, const SampledField& f,
                        const DyadicFamily& fam) {
  fam.validate();
  QuantOpts o;
  o.j = j;
  o.kind = Quant::para;
  o.fam = fam;
  return apply_op(a, f, o);
}

CMat assemble_dense(const SymbolSpec& a, const Grid& g, const QuantOpts& o) {
  std::size_t np = g.size();
  int N = a.N;
  if (std::size_t(N) * np > 8192) throw Error("assemble_dense: matrix too large");
  Roots w(g.n);
  double sc = std::ldexp(1.0, -o.j);
  const DyadicFamily fam = o.fam;
  ColumnFilter adm = [fam](double eta, double br) { return fam.phi_adm(eta, br); };
  const ColumnFilter* filt = o.kind == Quant::para ? &adm : nullptr;
  std::vector<CMat> T(N * N, CMat(np, np));
  CMat E(np, np);
  for (std::size_t q = 0; q < np; ++q)
    for (std::size_t m = 0; m < np; ++m) E(q, m) = w(phase_index(g, q, m));
  parallel_for(np, [&](std::size_t b, std::size_t e, int) {
    std::vector<cd> tab, scratch;
    for (std::size_t m = b; m < e; ++m) {
      column_table(a, g, scaled(g.freq(m), sc), o.j, filt, tab, scratch);
      for (int rc = 0; rc < N * N; ++rc)
        for (std::size_t p = 0; p < np; ++p) T[rc](p, m) = tab[rc * np + p] * E(p, m);
    }
  });
  CMat M(N * np, N * np);
  CMat EH = E.adjoint() / double(np);
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < N; ++c) M.block(r * np, c * np, np, np).noalias() = T[r * N + c] * EH;
  return M;
}

CVec to_vector(const SampledField& f) {
  CVec v(f.values().size());
  for (std::size_t i = 0; i < f.values().size(); ++i) v(i) = f.values()[i];
  return v;
}

SampledField from_vector(const Grid& g, int N, const CVec& v) {
  SampledField f(g, N);
  auto& fv = f.values_mut();
  for (std::size_t i = 0; i < fv.size(); ++i) fv[i] = v(i);
  return f;
}

SampledField apply_dense(const CMat& M, const SampledField& f) {
  return from_vector(f.grid(), f.N(), M * to_vector(f));
}

double filter_R(const DyadicFamily& fam, double eta, double br) {
  auto pe = fam.active(eta), pb = fam.active(br);
  double s = 0;
  for (int p = pe.first; p <= pe.second; ++p) {
    double fp = fam.phi(p, eta);
    if (fp == 0) continue;
    for (int q = pb.first; q <= pb.second; ++q)
      if (std::abs(p - q) < fam.N0) s += fp * fam.phi(q, br);
  }
  return s * (1.0 - fam.phi0_tilde(eta));
}

double filter_2(const DyadicFamily& fam, double eta, double br) {
  auto pe = fam.active(eta);
  double s = 0;
  for (int p = pe.first; p <= pe.second; ++p)
    s += fam.phi(p, eta) * fam.phi0(std::ldexp(br, fam.N0 - p));
  return s * (1.0 - fam.phi0_tilde(eta));
}

double filter_LF(const DyadicFamily& fam, double eta, double br) {
  double s = 0;
  for (int q = 0; q < fam.N0; ++q) s -= fam.phi0(std::ldexp(eta, fam.N0 - q)) * fam.phi(q, br);
  for (int p = 0; p < fam.N0; ++p) s -= fam.phi(p, eta) * fam.phi0(std::ldexp(br, fam.N0 - p));
  return s * (1.0 - fam.phi0_tilde(eta));
}

ParaPdoDifference para_pdo_difference(const SymbolSpec& a, int j, const SampledField& f,
                                      const DyadicFamily& fam) {
  fam.validate();
  ParaPdoDifference out;
  QuantOpts o;
  o.j = j;
  o.fam = fam;
  o.fast_paths = false;
  o.kind = Quant::pdo;
  SampledField pdo = apply_op(a, f, o);
  o.kind = Quant::para;
  SampledField para = apply_op(a, f, o);
  out.residual = pdo - para;
  out.part_R = apply_filtered(a, j, f, [&](double e, double b) { return filter_R(fam, e, b); });
  out.part_2 = apply_filtered(a, j, f, [&](double e, double b) { return filter_2(fam, e, b); });
  out.part_LF = apply_filtered(a, j, f, [&](double e, double b) { return filter_LF(fam, e, b); });
  SampledField diff = out.residual - out.part_R - out.part_2 - out.part_LF;
  out.identity_residual = l2_norm(diff);
  return out;
}

double periodic_distance(const Vec& x, const Vec& y, int d, double period) {
  double s = 0;
  for (int a = 0; a < d; ++a) {
    double t = x[a] - y[a];
    if (period > 0) t -= period * std::round(t / period);
    s += t * t;
  }
  return std::sqrt(s);
}

double TensorCutoff::psi1(const Vec& x) const {
  return smooth_cut(periodic_distance(x, x0, d, period), rx / 2, rx);
}

double TensorCutoff::psi2(const Vec& xi) const {
  return smooth_cut(norm2(diffv(xi, xi0), d), rxi / 2, rxi);
}

TensorCutoff TensorCutoff::widened(double f) const {
  TensorCutoff c = *this;
  c.rx *= f;
  c.rxi *= f;
  return c;
}

SymbolSpec TensorCutoff::symbol(int N) const {
  TensorCutoff me = *this;
  SymbolSpec s = separable_symbol(
      d, N,
      {SepTerm{[me](const Vec& x) { return cd(me.psi1(x)); },
               [me, N](const Vec& xi) -> Mat { return me.psi2(xi) * Mat::Identity(N, N); }}});
  s.name = "cutoff";
  s.support = SymbolSupport{x0, xi0, rx + rxi};
  return s;
}

SampledField localized_cutoff_op(const TensorCutoff& psi, int j, const SampledField& f, Quant kind,
                                 const DyadicFamily& fam) {
  if (psi.rxi >= 1.0) throw Error("localized_cutoff_op: delta >= 1");
  if (kind == Quant::pdo) {
    double sc = std::ldexp(1.0, -j);
    SampledField h = fourier_multiplier(f, [&](const Vec& xi) { return cd(psi.psi2(scaled(xi, sc))); });
    const Grid& g = f.grid();
    auto& hv = h.values_mut();
    for (std::size_t p = 0; p < g.size(); ++p) {
      double w = psi.psi1(g.point(p));
      for (int c = 0; c < f.N(); ++c) hv[c * g.size() + p] *= w;
    }
    return h;
  }
  return apply_para(psi.symbol(f.N()), j, f, fam);
}

}  // namespace mlab
