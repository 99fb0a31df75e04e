#include "mlab/dyadic.hpp"

namespace mlab {

double smooth_step(double t) {
  if (t <= 0) return 0.0;
  if (t >= 1) return 1.0;
  double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

double smooth_cut(double r, double a, double b) {
  if (r <= a) return 1.0;
  if (r >= b) return 0.0;
  return smooth_step((b - r) / (b - a));
}

void DyadicFamily::validate() const {
  if (!(0 < eps1 && eps1 < eps2 && eps2 < 1 && 1 < 2 * eps1))
    throw Error("dyadic: need 0 < eps1 < eps2 < 1 < 2 eps1");
  if (N0 < 3) throw Error("dyadic: N0 >= 3 required");
  if (J < 1) throw Error("dyadic: J >= 1 required");
}

double DyadicFamily::phi(int k, double r) const {
  if (k == 0) return phi0(r);
  return phi0(std::ldexp(r, -k)) - phi0(std::ldexp(r, -k + 1));
}

std::pair<int, int> DyadicFamily::active(double r) const {
  if (r <= 0) return {0, 0};
  int lo = std::max(0, int(std::floor(std::log2(r / eps2))));
  int hi = std::max(0, int(std::ceil(std::log2(r / eps1))) + 1);
  return {lo, hi};
}

double DyadicFamily::phi_adm(double eta, double br) const {
  auto [lo, hi] = active(br);
  double s = 0;
  for (int k = lo; k <= hi; ++k) {
    double pk = phi(k, br);
    if (pk != 0.0) s += phi0(std::ldexp(eta, N0 - k)) * pk;
  }
  return s;
}

SampledField lp_project(const SampledField& f, const DyadicFamily& fam, int j) {
  if (j < 0 || j > fam.J) throw Error("lp_project: index out of range");
  int d = f.grid().d;
  return fourier_multiplier(f, [&](const Vec& xi) { return cd(fam.phi(j, norm2(xi, d))); });
}

SampledField lp_low(const SampledField& f, const DyadicFamily& fam, int j) {
  int d = f.grid().d;
  return fourier_multiplier(
      f, [&](const Vec& xi) { return cd(fam.phi0(std::ldexp(norm2(xi, d), -j))); });
}

namespace {

RescaleResult same_box(const SampledField& f, int j, Direction dir) {
  const Grid& g = f.grid();
  if (g.carrier[0] != 0 || g.carrier[1] != 0)
    throw Error("rescale: same_box mode needs an unmodulated grid");
  std::size_t np = g.size();
  const auto& co = f.coeffs();
  std::vector<cd> out(co.size(), cd(0));
  double lost = 0;
  long f2 = 1L << j;
  for (std::size_t k = 0; k < np; ++k) {
    auto m = g.multi(k);
    long s0 = g.signed_index(m[0]), s1 = g.d == 2 ? g.signed_index(m[1]) : 0;
    long t0, t1;
    bool ok = true;
    if (dir == Direction::forward) {
      // frequency xi -> 2^{-j} xi
      ok = (s0 % f2 == 0) && (s1 % f2 == 0);
      t0 = s0 / f2;
      t1 = s1 / f2;
    } else {
      t0 = s0 * f2;
      t1 = s1 * f2;
      ok = t0 >= -g.n / 2 && t0 < g.n / 2 && t1 >= -g.n / 2 && t1 < g.n / 2;
    }
    for (int c = 0; c < f.N(); ++c) {
      cd v = co[c * np + k];
      if (!ok) {
        lost += std::norm(v);
        continue;
      }
      out[c * np + g.flat(t0, t1)] += v;
    }
  }
  return {SampledField::from_coeffs(g, f.N(), std::move(out)), std::sqrt(lost * g.volume())};
}

}  // namespace

RescaleResult hyperbolic_rescale(const SampledField& f, int j, Direction dir, RescaleMode mode) {
  if (j == 0) return {f, 0.0};
  if (mode == RescaleMode::same_box) return same_box(f, j, dir);
  Grid g = f.grid();
  double fac = std::ldexp(1.0, dir == Direction::forward ? j : -j);
  g.L *= fac;
  g.origin = scaled(g.origin, fac);
  SampledField out(g, f.N());
  out.values_mut() = f.values();
  return {out, 0.0};
}

RescaleResult H_rescale(const SampledField& f, int j, Direction dir, RescaleMode mode) {
  auto r = hyperbolic_rescale(f, j, dir, mode);
  double e = dir == Direction::forward ? -0.5 * j * f.grid().d : 0.5 * j * f.grid().d;
  r.field *= cd(std::pow(2.0, e));
  return r;
}

}  // namespace mlab
