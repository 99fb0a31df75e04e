#include "mlab/calculus.hpp"

#include <Eigen/Eigenvalues>
#include <limits>
#include <random>

namespace mlab {

namespace {

std::vector<std::array<int, 2>> indices_of_order(int d, int k) {
  std::vector<std::array<int, 2>> out;
  if (d == 1) {
    out.push_back({k, 0});
    return out;
  }
  for (int a = k; a >= 0; --a) out.push_back({a, k - a});
  return out;
}

double factorial(int k) {
  double r = 1;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

cd minus_i_pow(int k) {
  static const cd tab[4] = {1.0, -kI, -1.0, kI};
  return tab[k % 4];
}

double regularity(const SymbolSpec& a) {
  if (a.x_independent) return std::numeric_limits<double>::infinity();
  return a.k + a.theta;
}

SampledField zero_like(const SampledField& f) { return SampledField(f.grid(), f.N()); }

// multiply each component's coefficients by tab[k]
SampledField apply_table(const SampledField& f, const std::vector<cd>& tab) {
  std::vector<cd> c = f.coeffs();
  std::size_t np = f.npts();
  for (int comp = 0; comp < f.N(); ++comp)
    for (std::size_t k = 0; k < np; ++k) c[comp * np + k] *= tab[k];
  return SampledField::from_coeffs(f.grid(), f.N(), std::move(c));
}

// scalar field s times every component of f
SampledField scalar_times(const SampledField& s, const SampledField& f) {
  SampledField out(f.grid(), f.N());
  auto& o = out.values_mut();
  std::size_t np = f.npts();
  for (int c = 0; c < f.N(); ++c)
    for (std::size_t p = 0; p < np; ++p) o[c * np + p] = s.value(0, p) * f.value(c, p);
  return out;
}

SampledField conj_field(const SampledField& f) {
  SampledField out = f;
  for (auto& v : out.values_mut()) v = std::conj(v);
  return out;
}

SampledField derivative(const SampledField& f, std::array<int, 2> al) {
  SampledField out = f;
  for (int a = 0; a < 2; ++a)
    for (int t = 0; t < al[a]; ++t) out = gradient(out, a);
  return out;
}

void require_plain(const Grid& g, const char* who) {
  if (g.carrier[0] != 0 || g.carrier[1] != 0)
    throw Error(std::string(who) + ": modulated grids are not supported");
}

struct CommutatorParts {
  std::vector<cd> chi_tab;
  std::vector<std::vector<cd>> dchi_tab;
  std::vector<SampledField> df;
  std::vector<cd> coef;
};

CommutatorParts commutator_parts(const ChiFn& chi, const SampledField& f, int j, int order,
                                 double hxi) {
  const Grid& g = f.grid();
  std::size_t np = g.size();
  double sc = std::ldexp(1.0, -j);
  SymbolSpec schi = scalar_multiplier(g.d, chi);
  CommutatorParts P;
  P.chi_tab.resize(np);
  for (std::size_t k = 0; k < np; ++k) P.chi_tab[k] = chi(scaled(g.freq(k), sc));
  for (int m = 1; m <= order; ++m) {
    for (auto al : indices_of_order(g.d, m)) {
      std::vector<cd> tab(np);
      for (std::size_t k = 0; k < np; ++k)
        tab[k] = symbol_derivative(schi, {0, 0}, scaled(g.freq(k), sc), {0, 0}, al, hxi, hxi)(0, 0);
      double afac = factorial(al[0]) * factorial(al[1]);
      P.dchi_tab.push_back(std::move(tab));
      P.df.push_back(derivative(f, al));
      P.coef.push_back(std::ldexp(1.0, -j * m) * minus_i_pow(m) / afac);
    }
  }
  return P;
}

std::vector<cd> conj_table(const std::vector<cd>& t) {
  std::vector<cd> o(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) o[k] = std::conj(t[k]);
  return o;
}

}  // namespace

SymbolSpec expansion_symbol(const SymbolSpec& a1, const SymbolSpec& a2, int k, double hx,
                            double hxi) {
  if (a1.d != a2.d || a1.N != a2.N) throw Error("expansion_symbol: shape mismatch");
  int d = a1.d, N = a1.N;
  SymbolSpec out;
  out.name = "expansion_" + std::to_string(k) + "(" + a1.name + "," + a2.name + ")";
  out.d = d;
  out.N = N;
  out.order = a1.order + a2.order - k;
  out.x_independent = a1.x_independent && a2.x_independent;
  out.k = std::max(0, std::min(a1.k, a2.k) - k);
  out.theta = std::min(a1.theta, a2.theta);
  if (k == 0) {
    out.eval = [a1, a2](const Vec& x, const Vec& xi) -> Mat { return a1(x, xi) * a2(x, xi); };
    return out;
  }
  if (a2.x_independent) {
    out.x_independent = true;
    out.eval = [N](const Vec&, const Vec&) -> Mat { return Mat::Zero(N, N); };
    return out;
  }
  auto idx = indices_of_order(d, k);
  cd pre = minus_i_pow(k);
  out.eval = [a1, a2, idx, pre, hx, hxi, N](const Vec& x, const Vec& xi) -> Mat {
    Mat acc = Mat::Zero(N, N);
    for (auto al : idx) {
      double afac = factorial(al[0]) * factorial(al[1]);
      Mat d1 = symbol_derivative(a1, x, xi, {0, 0}, al, hx, hxi);
      Mat d2 = symbol_derivative(a2, x, xi, al, {0, 0}, hx, hxi);
      acc += (pre / afac) * (d1 * d2);
    }
    return acc;
  };
  return out;
}

CompositionReport compose_expand(const SymbolSpec& a1, const SymbolSpec& a2, int r, int j,
                                 const SampledField& f, Quant kind, const DyadicFamily& fam) {
  if (r < 1) throw Error("compose_expand: r must be positive");
  double reg = std::min(regularity(a1), regularity(a2));
  if (r > reg)
    throw Error("compose_expand: order " + std::to_string(r) + " exceeds declared regularity " +
                std::to_string(reg));
  QuantOpts o;
  o.j = j;
  o.kind = kind;
  o.fam = fam;
  CompositionReport rep;
  rep.r = r;
  rep.j = j;
  rep.lhs = apply_op(a1, apply_op(a2, f, o), o);
  SampledField sum = zero_like(rep.lhs);
  for (int k = 0; k < r; ++k) {
    SampledField t = apply_op(expansion_symbol(a1, a2, k), f, o);
    t *= std::ldexp(1.0, -j * k);
    sum += t;
    rep.terms.push_back(std::move(t));
  }
  rep.remainder = rep.lhs - sum;
  double fn = l2_norm(f);
  rep.remainder_norm = fn > 0 ? l2_norm(rep.remainder) / fn : 0.0;
  double ln = l2_norm(rep.lhs);
  rep.identity_residual = l2_norm(rep.lhs - sum - rep.remainder) / (ln > 0 ? ln : 1.0);
  return rep;
}

CommutatorReport multiplier_commutator(const ChiFn& chi, const SampledField& f, int j,
                                       const SampledField& g, int order, double theta,
                                       double hxi) {
  if (f.N() != 1) throw Error("multiplier_commutator: f must be scalar");
  if (!f.grid().same_as(g.grid())) throw Error("multiplier_commutator: grid mismatch");
  require_plain(g.grid(), "multiplier_commutator");
  CommutatorParts P = commutator_parts(chi, f, j, order, hxi);
  CommutatorReport rep;
  rep.commutator = apply_table(scalar_times(f, g), P.chi_tab) - scalar_times(f, apply_table(g, P.chi_tab));
  SampledField sum = zero_like(g);
  for (std::size_t a = 0; a < P.df.size(); ++a) {
    SampledField t = scalar_times(P.df[a], apply_table(g, P.dchi_tab[a]));
    t *= P.coef[a];
    sum += t;
    rep.terms.push_back(std::move(t));
  }
  rep.remainder = rep.commutator - sum;
  double gn = l2_norm(g);
  rep.remainder_norm = gn > 0 ? l2_norm(rep.remainder) / gn : 0.0;
  double cn = l2_norm(rep.commutator);
  rep.identity_residual = l2_norm(rep.commutator - sum - rep.remainder) / (cn > 0 ? cn : 1.0);
  rep.holder_factor = holder_factor(f, theta > 0 ? theta : order + 0.5);
  return rep;
}

double commutator_remainder_norm(const ChiFn& chi, const SampledField& f, int j, int order,
                                 int iters, unsigned seed, double hxi) {
  if (f.N() != 1) throw Error("commutator_remainder_norm: f must be scalar");
  require_plain(f.grid(), "commutator_remainder_norm");
  CommutatorParts P = commutator_parts(chi, f, j, order, hxi);
  SampledField fc = conj_field(f);
  std::vector<cd> chi_c = conj_table(P.chi_tab);
  std::vector<SampledField> dfc;
  for (auto& d : P.df) dfc.push_back(conj_field(d));

  auto R = [&](const SampledField& g) {
    SampledField out = apply_table(scalar_times(f, g), P.chi_tab) - scalar_times(f, apply_table(g, P.chi_tab));
    for (std::size_t a = 0; a < P.df.size(); ++a) {
      SampledField t = scalar_times(P.df[a], apply_table(g, P.dchi_tab[a]));
      t *= P.coef[a];
      out -= t;
    }
    return out;
  };
  auto Radj = [&](const SampledField& h) {
    SampledField out = scalar_times(fc, apply_table(h, chi_c)) - apply_table(scalar_times(fc, h), chi_c);
    for (std::size_t a = 0; a < P.df.size(); ++a) {
      SampledField t = apply_table(scalar_times(dfc[a], h), conj_table(P.dchi_tab[a]));
      t *= std::conj(P.coef[a]);
      out -= t;
    }
    return out;
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SampledField x(f.grid(), 1);
  for (auto& v : x.values_mut()) v = cd(nd(rng), nd(rng));
  x *= 1.0 / l2_norm(x);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    SampledField y = Radj(R(x));
    double ny = l2_norm(y);
    if (ny == 0) return 0.0;
    sigma = std::sqrt(ny);
    x = (1.0 / ny) * y;
  }
  return sigma;
}

double holder_factor(const SampledField& f, double theta) {
  const Grid& g = f.grid();
  int k = int(std::floor(theta));
  double frac = theta - k;
  if (frac <= 0) {
    k -= 1;
    frac = 1.0;
  }
  double best = 0.0;
  for (int axis = 0; axis < g.d; ++axis) {
    std::array<int, 2> al{0, 0};
    al[axis] = std::max(k, 0);
    SampledField df = derivative(f, al);
    for (long h = 1; h <= g.n / 2; h *= 2) {
      double dist = std::pow(h * g.step(), frac);
      for (std::size_t p = 0; p < g.size(); ++p) {
        auto m = g.multi(p);
        m[axis] += h;
        std::size_t q = g.flat(m[0], m[1]);
        for (int c = 0; c < f.N(); ++c)
          best = std::max(best, std::abs(df.value(c, q) - df.value(c, p)) / dist);
      }
    }
  }
  return best;
}

double theta_star(double theta, int d) { return theta / (theta + 3.0 + d); }

GardingReport garding_check(const SymbolSpec& Q, int j, const Grid& g, double theta, Quant kind,
                            const DyadicFamily& fam, const std::vector<SampledField>& probes) {
  GardingReport rep;
  rep.theta_star = theta_star(theta, g.d);

  // precondition on a subsample of (x, 2^{-j} xi)
  double sc = std::ldexp(1.0, -j);
  std::size_t stride = std::max<std::size_t>(1, g.size() / 256);
  double smin = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < g.size(); p += stride)
    for (std::size_t k = 0; k < g.size(); k += stride) {
      Mat q = Q(g.point(p), scaled(g.freq(k), sc));
      Mat h = (q + q.adjoint()) / 2.0;
      Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
      smin = std::min(smin, es.eigenvalues()(0));
    }
  rep.symbol_min = smin;
  rep.precondition_ok = smin >= -1e-12;

  QuantOpts o;
  o.j = j;
  o.kind = kind;
  o.fam = fam;
  CMat M = assemble_dense(Q, g, o);
  CMat H = (M + M.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<CMat> es(H, Eigen::EigenvaluesOnly);
  rep.min_quotient = es.eigenvalues()(0);
  rep.defect = std::max(0.0, -rep.min_quotient);
  rep.implied_C = rep.defect * std::pow(2.0, j * rep.theta_star);

  rep.probe_min = std::numeric_limits<double>::infinity();
  for (const auto& u : probes) {
    CVec v = to_vector(u);
    double nn = v.squaredNorm();
    if (nn == 0) continue;
    rep.probe_min = std::min(rep.probe_min, (v.adjoint() * M * v)(0, 0).real() / nn);
  }
  if (probes.empty()) rep.probe_min = rep.min_quotient;
  return rep;
}

SampledField paraproduct(const std::vector<SampledField>& a, const SampledField& b,
                         const DyadicFamily& fam) {
  const Grid& g = b.grid();
  require_plain(g, "paraproduct");
  int N = b.N();
  if (int(a.size()) != N * N) throw Error("paraproduct: need N*N coefficient fields");
  double brmax = 1.0;
  for (std::size_t k = 0; k < g.size(); ++k) brmax = std::max(brmax, jbracket(g.freq(k), g.d));
  int K = int(std::ceil(std::log2(brmax))) + 2;
  SampledField out(g, N);
  auto& o = out.values_mut();
  std::size_t np = g.size();
  double bn = l2_norm(b);
  for (int k = 0; k <= K; ++k) {
    SampledField db = fourier_multiplier(b, [&](const Vec& xi) { return cd(fam.phi(k, jbracket(xi, g.d))); });
    if (l2_norm(db) <= 1e-15 * bn) continue;
    double sk = std::ldexp(1.0, fam.N0 - k);
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < N; ++c) {
        SampledField sa = fourier_multiplier(a[r * N + c], [&](const Vec& eta) {
          return cd(fam.phi0(sk * norm2(eta, g.d)));
        });
        for (std::size_t p = 0; p < np; ++p) o[r * np + p] += sa.value(0, p) * db.value(c, p);
      }
  }
  return out;
}

ParalinReport paralinearize_residual(const SystemSpec& sys, const SampledField& u, int j,
                                     double s, const DyadicFamily& fam) {
  const Grid& g = u.grid();
  require_plain(g, "paralinearize_residual");
  int N = sys.N, d = sys.d;
  if (u.N() != N || g.d != d) throw Error("paralinearize_residual: shape mismatch");
  std::size_t np = g.size();
  double sj = std::ldexp(1.0, j);
  std::vector<SampledField> v;
  for (int k = 0; k < d; ++k) {
    SampledField vk = gradient(u, k);
    vk *= sj;
    v.push_back(std::move(vk));
  }
  SampledField Fu(g, N);
  std::vector<SampledField> a3(N * N, SampledField(g, 1));
  std::vector<std::vector<SampledField>> a4(d, std::vector<SampledField>(N * N, SampledField(g, 1)));
  {
    auto& fv = Fu.values_mut();
    std::vector<std::vector<cd>*> a3v, a4v[2];
    for (auto& e : a3) a3v.push_back(&e.values_mut());
    for (int k = 0; k < d; ++k)
      for (auto& e : a4[k]) a4v[k].push_back(&e.values_mut());
    for (std::size_t p = 0; p < np; ++p) {
      CVec up(N);
      Grad vp = sys.zero_grad();
      for (int c = 0; c < N; ++c) {
        up[c] = u.value(c, p);
        for (int k = 0; k < d; ++k) vp[k][c] = v[k].value(c, p);
      }
      Vec x = scaled(g.point(p), 1.0 / sj);
      CVec Fp = sys.F(0.0, x, up, vp);
      Mat A3 = dF_du(sys, 0.0, x, up, vp);
      for (int r = 0; r < N; ++r) {
        fv[r * np + p] = Fp[r];
        for (int c = 0; c < N; ++c) (*a3v[r * N + c])[p] = A3(r, c);
      }
      for (int k = 0; k < d; ++k) {
        Mat A4 = dF_dv(sys, 0.0, x, up, vp, k);
        for (int r = 0; r < N; ++r)
          for (int c = 0; c < N; ++c) (*a4v[k][r * N + c])[p] = A4(r, c);
      }
    }
  }
  ParalinReport rep;
  rep.residual = Fu - paraproduct(a3, u, fam);
  for (int k = 0; k < d; ++k) rep.residual -= paraproduct(a4[k], v[k], fam);
  rep.residual_norm = sobolev_norm(rep.residual, 2 * (s - 1) - d / 2.0);
  double in2 = std::pow(sobolev_norm(u, s - 1), 2);
  rep.input_sup = sup_norm(u);
  for (int k = 0; k < d; ++k) {
    in2 += std::pow(sobolev_norm(v[k], s - 1), 2);
    rep.input_sup = std::max(rep.input_sup, sup_norm(v[k]));
  }
  rep.input_norm = std::sqrt(in2);
  return rep;
}

}  // namespace mlab
