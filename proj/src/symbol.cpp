#include "mlab/symbol.hpp"

#include <limits>
#include <random>

#include "mlab/dyadic.hpp"
#include "mlab/expr.hpp"

namespace mlab {

SymbolSpec identity_symbol(int d, int N) {
  return multiplier_symbol(d, N, [N](const Vec&) -> Mat { return Mat::Identity(N, N); });
}

SymbolSpec multiplier_symbol(int d, int N, std::function<Mat(const Vec&)> m, double order) {
  SymbolSpec s;
  s.name = "multiplier";
  s.d = d;
  s.N = N;
  s.order = order;
  s.x_independent = true;
  s.eval = [m](const Vec&, const Vec& xi) { return m(xi); };
  s.terms.push_back({[](const Vec&) { return cd(1); }, m});
  return s;
}

SymbolSpec scalar_multiplier(int d, std::function<cd(const Vec&)> m, double order) {
  return multiplier_symbol(
      d, 1,
      [m](const Vec& xi) -> Mat {
        Mat r(1, 1);
        r(0, 0) = m(xi);
        return r;
      },
      order);
}

SymbolSpec function_symbol(int d, int N, std::function<Mat(const Vec&)> a, int k, double theta) {
  SymbolSpec s;
  s.name = "function";
  s.d = d;
  s.N = N;
  s.k = k;
  s.theta = theta;
  s.eval = [a](const Vec& x, const Vec&) { return a(x); };
  if (N == 1) {
    s.terms.push_back({[a](const Vec& x) { return a(x)(0, 0); },
                       [](const Vec&) -> Mat { return Mat::Identity(1, 1); }});
  }
  return s;
}

SymbolSpec separable_symbol(int d, int N, std::vector<SepTerm> terms, double order) {
  SymbolSpec s;
  s.name = "separable";
  s.d = d;
  s.N = N;
  s.order = order;
  s.terms = terms;
  s.eval = [terms, N](const Vec& x, const Vec& xi) {
    Mat r = Mat::Zero(N, N);
    for (auto& t : terms) r += t.b(x) * t.c(xi);
    return r;
  };
  return s;
}

namespace {

void set_regularity(SymbolSpec& s, double sob, int d) {
  double r = sob - 0.5 * d;
  if (r <= 0) throw Error("composed symbol: carrier index must exceed d/2");
  s.k = int(std::floor(r));
  s.theta = r - s.k;
}

}  // namespace

SymbolSpec composed_symbol(int d, int N, SigmaFn sigma, const SampledField& carrier, double sob,
                           double order) {
  auto comp = std::make_shared<Composed>();
  comp->sigma = sigma;
  comp->carrier = std::make_shared<FieldSampler>(carrier);
  comp->s = sob;
  SymbolSpec s;
  s.name = "composed";
  s.d = d;
  s.N = N;
  s.order = order;
  set_regularity(s, sob, d);
  auto car = comp->carrier;
  s.eval = [sigma, car](const Vec& x, const Vec& xi) { return sigma((*car)(x), xi); };
  s.composed = comp;
  return s;
}

SymbolSpec composed_separable(int d, int N, std::function<cd(const CVec&)> g,
                              std::function<Mat(const Vec&)> m, const SampledField& carrier,
                              double sob, double order) {
  SigmaFn sigma = [g, m](const CVec& u, const Vec& xi) -> Mat { return g(u) * m(xi); };
  SymbolSpec s = composed_symbol(d, N, sigma, carrier, sob, order);
  auto car = s.composed->carrier;
  s.terms.push_back({[g, car](const Vec& x) { return g((*car)(x)); }, m});
  s.name = "composed-separable";
  return s;
}

SymbolSpec parse_multiplier(const std::string& text, int d) {
  auto e = std::make_shared<Expr>(Expr::parse(text));
  SymbolSpec s = scalar_multiplier(d, [e, d](const Vec& xi) {
    std::map<std::string, cd> v{{"xi", xi[0]},
                                {"xi1", xi[0]},
                                {"xi2", xi[1]},
                                {"r", norm2(xi, d)},
                                {"br", jbracket(xi, d)}};
    return e->eval(v);
  });
  s.name = "multiplier:" + text;
  return s;
}

SymbolSpec sum_symbols(const SymbolSpec& a, const SymbolSpec& b, cd ca, cd cb) {
  if (a.d != b.d || a.N != b.N) throw Error("sum_symbols: shape mismatch");
  SymbolSpec s;
  s.name = a.name + "+" + b.name;
  s.d = a.d;
  s.N = a.N;
  s.order = std::max(a.order, b.order);
  s.k = std::min(a.k, b.k);
  s.theta = a.k < b.k ? a.theta : (b.k < a.k ? b.theta : std::min(a.theta, b.theta));
  s.x_independent = a.x_independent && b.x_independent;
  auto ea = a.eval, eb = b.eval;
  s.eval = [ea, eb, ca, cb](const Vec& x, const Vec& xi) -> Mat {
    return ca * ea(x, xi) + cb * eb(x, xi);
  };
  if (!a.terms.empty() && !b.terms.empty()) {
    for (auto t : a.terms) {
      auto c = t.c;
      s.terms.push_back({t.b, [c, ca](const Vec& xi) -> Mat { return ca * c(xi); }});
    }
    for (auto t : b.terms) {
      auto c = t.c;
      s.terms.push_back({t.b, [c, cb](const Vec& xi) -> Mat { return cb * c(xi); }});
    }
  }
  return s;
}

SymbolSpec product_symbols(const SymbolSpec& a, const SymbolSpec& b) {
  if (a.d != b.d || a.N != b.N) throw Error("product_symbols: shape mismatch");
  SymbolSpec s;
  s.name = a.name + "*" + b.name;
  s.d = a.d;
  s.N = a.N;
  s.order = a.order + b.order;
  s.k = std::min(a.k, b.k);
  s.theta = std::min(a.theta, b.theta);
  s.x_independent = a.x_independent && b.x_independent;
  auto ea = a.eval, eb = b.eval;
  s.eval = [ea, eb](const Vec& x, const Vec& xi) -> Mat { return ea(x, xi) * eb(x, xi); };
  return s;
}

SymbolSampling default_sampling(const Grid& g, int nx, int max_octave) {
  SymbolSampling smp;
  long stride = std::max<long>(1, g.n / nx);
  for (long i = 0; i < g.n; i += stride) {
    if (g.d == 1) {
      smp.xs.push_back(g.point(std::size_t(i)));
    } else {
      for (long k = 0; k < g.n; k += stride) smp.xs.push_back(g.point(g.flat(i, k)));
    }
  }
  smp.hx = g.step() / 4;
  std::vector<double> rs{0.0};
  for (int o = -2; o <= max_octave; ++o) rs.push_back(std::ldexp(1.0, o));
  int ndir = g.d == 1 ? 2 : 8;
  for (double r : rs) {
    for (int a = 0; a < ndir; ++a) {
      double ang = 2 * kPi * a / ndir;
      smp.xis.push_back(g.d == 1 ? Vec{a == 0 ? r : -r, 0.0} : Vec{r * std::cos(ang), r * std::sin(ang)});
      if (r == 0) break;
    }
  }
  return smp;
}

namespace {

Mat diff_rec(const SymbolSpec& a, const Vec& x, const Vec& xi, std::array<int, 2> al,
             std::array<int, 2> be, double hx, double hxi) {
  for (int ax = 0; ax < 2; ++ax) {
    if (al[ax] > 0) {
      auto a2 = al;
      a2[ax] -= 1;
      auto at = [&](double t) {
        Vec y = x;
        y[ax] += t;
        return diff_rec(a, y, xi, a2, be, hx, hxi);
      };
      return (-at(2 * hx) + 8.0 * at(hx) - 8.0 * at(-hx) + at(-2 * hx)) / (12.0 * hx);
    }
  }
  for (int ax = 0; ax < 2; ++ax) {
    if (be[ax] > 0) {
      auto b2 = be;
      b2[ax] -= 1;
      auto at = [&](double t) {
        Vec z = xi;
        z[ax] += t;
        return diff_rec(a, x, z, al, b2, hx, hxi);
      };
      return (-at(2 * hxi) + 8.0 * at(hxi) - 8.0 * at(-hxi) + at(-2 * hxi)) / (12.0 * hxi);
    }
  }
  return a.eval(x, xi);
}

double opnorm(const Mat& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

std::vector<std::array<int, 2>> multi_indices(int d, int maxorder) {
  std::vector<std::array<int, 2>> out;
  for (int a = 0; a <= maxorder; ++a)
    for (int b = 0; b <= (d == 2 ? maxorder - a : 0); ++b) out.push_back({a, b});
  return out;
}

}  // namespace

Mat symbol_derivative(const SymbolSpec& a, const Vec& x, const Vec& xi, std::array<int, 2> alpha,
                      std::array<int, 2> beta, double hx, double hxi) {
  return diff_rec(a, x, xi, alpha, beta, hx, hxi);
}

double symbol_norm(const SymbolSpec& a, double m, int k1, int k2, const SymbolSampling& smp) {
  if (k1 > a.k + 1) throw Error("symbol_norm: k1 exceeds the declared regularity");
  double best = 0;
  auto als = multi_indices(a.d, k1), bes = multi_indices(a.d, k2);
  for (auto& x : smp.xs)
    for (auto& xi : smp.xis) {
      double br = jbracket(xi, a.d);
      for (auto& al : als)
        for (auto& be : bes) {
          double hxi = smp.hxi_rel * br;
          Mat dv = diff_rec(a, x, xi, al, be, smp.hx, hxi);
          double w = std::pow(br, double(be[0] + be[1]) - m);
          best = std::max(best, w * opnorm(dv));
        }
    }
  return best;
}

double symbol_holder_seminorm(const SymbolSpec& a, double m, int k1, int k2, double theta,
                              const SymbolSampling& smp) {
  double best = 0;
  auto bes = multi_indices(a.d, k2);
  std::vector<std::array<int, 2>> als;
  for (auto& al : multi_indices(a.d, k1))
    if (al[0] + al[1] == k1) als.push_back(al);
  for (auto& x : smp.xs)
    for (auto& xi : smp.xis) {
      double br = jbracket(xi, a.d);
      for (auto& al : als)
        for (auto& be : bes) {
          double hxi = smp.hxi_rel * br;
          Mat base = diff_rec(a, x, xi, al, be, smp.hx, hxi);
          double w = std::pow(br, double(be[0] + be[1]) - m);
          for (int ax = 0; ax < a.d; ++ax)
            for (int e = 2; e < 12; ++e) {
              double h = smp.hx * std::ldexp(1.0, e);
              Vec y = x;
              y[ax] += h;
              Mat other = diff_rec(a, y, xi, al, be, smp.hx, hxi);
              best = std::max(best, w * opnorm(other - base) / std::pow(h, theta));
            }
        }
    }
  return best;
}

double Mollifier::profile(double y) {
  if (std::abs(y) >= 1) return 0.0;
  return std::exp(-1.0 / (1.0 - y * y));
}

double Mollifier::mass() {
  static const double m = [] {
    const int M = 4000;
    double s = 0;
    for (int i = 1; i < M; ++i) s += profile(-1.0 + 2.0 * i / M);
    return s * 2.0 / M;
  }();
  return m;
}

double Mollifier::kernel(const Vec& y, int d, double eps) const {
  double v = 1;
  for (int a = 0; a < d; ++a) v *= profile(y[a] / eps) / (mass() * eps);
  return v;
}

double Mollifier::hat1(double w) const {
  // trapezoid is spectrally accurate for the flat-ended profile
  int M = 256 + int(8 * std::abs(w));
  double s = 0;
  for (int i = 1; i < M; ++i) {
    double y = -1.0 + 2.0 * i / M;
    s += profile(y) * std::cos(w * y);
  }
  return s * 2.0 / M / mass();
}

MollifiedSymbol mollify(const SymbolSpec& a, double eps, MollifyMode mode, double box) {
  if (!(eps > 0)) throw Error("mollify: eps must be positive");
  if (eps >= box / 2) throw Error("mollify: eps larger than the box");
  MollifiedSymbol out;
  out.eps = eps;
  out.kernel = Mollifier::tag();
  if (mode == MollifyMode::carrier) {
    if (!a.composed) throw Error("mollify: carrier mode requires a composed symbol");
    const SampledField& car = a.composed->carrier->field();
    if (eps >= car.grid().L / 2) throw Error("mollify: eps larger than the box");
    SampledField sm = mollify_field(car, eps);
    out.sym = composed_symbol(a.d, a.N, a.composed->sigma, sm, a.composed->s, a.order);
    out.sym.name = a.name + "@carrier-eps";
    return out;
  }
  const int Q = 32;
  std::vector<Vec> nodes;
  std::vector<double> wts;
  Mollifier k;
  double tot = 0;
  for (int i = 1; i < Q; ++i) {
    for (int l = (a.d == 2 ? 1 : 0); l < (a.d == 2 ? Q : 1); ++l) {
      Vec y{eps * (-1.0 + 2.0 * i / Q), a.d == 2 ? eps * (-1.0 + 2.0 * l / Q) : 0.0};
      double w = k.kernel(y, a.d, eps);
      if (w <= 0) continue;
      nodes.push_back(y);
      wts.push_back(w);
      tot += w;
    }
  }
  for (auto& w : wts) w /= tot;
  out.sym = a;
  out.sym.name = a.name + "@direct-eps";
  out.sym.terms.clear();
  out.sym.composed.reset();
  auto ev = a.eval;
  int N = a.N;
  out.sym.eval = [ev, nodes, wts, N](const Vec& x, const Vec& xi) -> Mat {
    Mat r = Mat::Zero(N, N);
    for (std::size_t q = 0; q < nodes.size(); ++q) r += wts[q] * ev(diffv(x, nodes[q]), xi);
    return r;
  };
  return out;
}

SampledField mollify_field(const SampledField& f, double eps) {
  Mollifier k;
  int d = f.grid().d;
  return fourier_multiplier(f, [&](const Vec& xi) { return cd(k.hat(scaled(xi, eps), d)); });
}

double mollifier_epsilon(int j, double theta) {
  if (!(theta > 0)) throw Error("mollifier_epsilon: theta must be positive");
  return std::pow(2.0, -double(j) / (1.0 + theta));
}

SobolevCheck nonlinear_sobolev_check(const NonlinearMap& sigma, const SampledField& u, double s,
                                     const Vec& xi, double m, unsigned seed) {
  const Grid& g = u.grid();
  int N = u.N();
  CVec zero = CVec::Zero(N);
  if (sigma(zero, xi).norm() > 1e-12) throw Error("nonlinear_sobolev_check: sigma(0, xi) != 0");
  int No = int(sigma(zero, xi).size());
  SampledField out(g, No);
  auto& ov = out.values_mut();
  std::size_t np = g.size();
  double rmax = 0;
  for (std::size_t p = 0; p < np; ++p) {
    CVec v = u.physical(p);
    rmax = std::max(rmax, v.norm());
    CVec w = sigma(v, xi);
    cd ph = std::exp(-kI * dot(diffv(g.point(p), g.origin), g.carrier_freq(), g.d));
    for (int c = 0; c < No; ++c) ov[c * np + p] = w(c) * ph;
  }
  SobolevCheck res;
  res.lhs = sobolev_norm(out, s);
  double wxi = std::pow(jbracket(xi, g.d), -m);
  // envelope C(r) from sampled directional derivatives on the ball of radius r
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  int K = int(std::ceil(s)) + 1;
  std::vector<double> dk(K + 1, 0.0);
  auto rnd = [&](double rad) {
    CVec v(N);
    for (int c = 0; c < N; ++c) v(c) = cd(nd(rng), 0.0);
    if (v.norm() > 0) v *= rad / v.norm();
    return v;
  };
  for (int t = 0; t < 48; ++t) {
    CVec base = t == 0 ? zero : rnd(rmax * double(t % 8) / 7.0);
    CVec e = rnd(1.0);
    double h = 1e-2 * (1 + rmax);
    for (int k = 1; k <= K; ++k) {
      // k-th central difference along e
      CVec acc = CVec::Zero(No);
      double binom = 1;
      for (int i = 0; i <= k; ++i) {
        if (i > 0) binom = binom * double(k - i + 1) / double(i);
        double sh = (double(k) / 2 - i) * h;
        acc += ((i % 2) ? -binom : binom) * sigma(base + sh * e, xi);
      }
      double val = acc.norm() / std::pow(h, k) * wxi;
      double fact = 1;
      for (int i = 2; i <= k; ++i) fact *= i;
      dk[k] = std::max(dk[k], val * std::pow(double(k), k) / fact);
    }
  }
  double C = dk[1];
  for (int k = 2; k <= K; ++k) C += dk[k] * std::pow(1 + rmax, k - 1);
  res.envelope = C;
  res.rhs = std::pow(jbracket(xi, g.d), m) * C * sobolev_norm(u, s);
  return res;
}

}  // namespace mlab
