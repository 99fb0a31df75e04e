#include "mlab/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <sstream>

namespace mlab {

namespace {

struct PointJets {
  CVec u, ut, utt;
  Grad v, vt, vtt;
};

PointJets at_point(const SystemSpec& sys, const DatumJets& J, const Vec& x) {
  PointJets P;
  P.u = interpolate(J.u, x);
  P.ut = interpolate(J.ut, x);
  P.utt = interpolate(J.utt, x);
  P.v = sys.zero_grad();
  P.vt = sys.zero_grad();
  P.vtt = sys.zero_grad();
  for (int k = 0; k < sys.d; ++k) {
    P.v[k] = interpolate(J.v[k], x);
    P.vt[k] = interpolate(J.vt[k], x);
    P.vtt[k] = interpolate(J.vtt[k], x);
  }
  return P;
}

Mat pulled(const SystemSpec& sys, const PointJets& P, const Vec& x, const Vec& xi, double t) {
  CVec u = P.u + t * P.ut + 0.5 * t * t * P.utt;
  Grad v = sys.zero_grad();
  for (int k = 0; k < sys.d; ++k) v[k] = P.v[k] + t * P.vt[k] + 0.5 * t * t * P.vtt[k];
  return principal_symbol(sys, t, x, u, v, xi);
}

// P(lambda) = prod (mu_i - lambda) and its first two lambda-derivatives
std::array<cd, 3> poly_jet(const std::vector<cd>& mu, cd lambda) {
  int n = int(mu.size());
  cd P = 1, d1 = 0, d2 = 0;
  for (int i = 0; i < n; ++i) P *= mu[i] - lambda;
  for (int i = 0; i < n; ++i) {
    cd p = -1;
    for (int k = 0; k < n; ++k)
      if (k != i) p *= mu[k] - lambda;
    d1 += p;
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      cd p = 1;
      for (int l = 0; l < n; ++l)
        if (l != i && l != k) p *= mu[l] - lambda;
      d2 += p;
    }
  return {P, d1, d2};
}

SampledField pointwise_map(const SampledField& like, int N,
                           const std::function<CVec(std::size_t)>& f) {
  SampledField out(like.grid(), N);
  auto& o = out.values_mut();
  std::size_t np = like.npts();
  for (std::size_t p = 0; p < np; ++p) {
    CVec r = f(p);
    for (int c = 0; c < N; ++c) o[c * np + p] = r[c];
  }
  return out;
}

CVec column_at(const SampledField& f, std::size_t p) {
  CVec r(f.N());
  for (int c = 0; c < f.N(); ++c) r[c] = f.value(c, p);
  return r;
}

double opnorm2(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

std::string where(const Vec& x, const Vec& xi) {
  std::ostringstream os;
  os << "x=(" << x[0] << "," << x[1] << ") xi=(" << xi[0] << "," << xi[1] << ")";
  return os.str();
}

}  // namespace

Mat principal_symbol(const SystemSpec& sys, double t, const Vec& x, const CVec& u, const Grad& v,
                     const Vec& xi) {
  Mat A = Mat::Zero(sys.N, sys.N);
  for (int k = 0; k < sys.d; ++k) A += xi[k] * dF_dv(sys, t, x, u, v, k);
  return A;
}

SpectralPoint base_point(const SystemSpec& sys) {
  SpectralPoint p;
  p.x = sys.x0;
  p.u = sys.u0;
  p.v = sys.v0;
  p.xi = sys.xi0;
  return p;
}

std::vector<cd> eigenvalues(const Mat& m) {
  Eigen::ComplexEigenSolver<Mat> es(m, false);
  std::vector<cd> out(es.eigenvalues().data(), es.eigenvalues().data() + m.rows());
  return out;
}

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  auto s = svd.singularValues();
  double lo = s(s.size() - 1);
  return lo > 0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

EllipticityVerdict ellipticity_classify(const SystemSpec& sys, const SpectralPoint& pt, double tol) {
  Mat A = principal_symbol(sys, pt.t, pt.x, pt.u, pt.v, pt.xi);
  EllipticityVerdict v;
  v.spectrum = eigenvalues(A);
  for (auto l : v.spectrum) v.max_imag = std::max(v.max_imag, std::abs(l.imag()));
  v.elliptic = v.max_imag > tol * std::max(1.0, A.norm());
  return v;
}

DatumJets datum_jets(const SystemSpec& sys, const SampledField& datum) {
  const Grid& g = datum.grid();
  if (g.carrier[0] != 0 || g.carrier[1] != 0) throw Error("datum_jets: datum must be unmodulated");
  if (datum.N() != sys.N || g.d != sys.d) throw Error("datum_jets: shape mismatch");
  DatumJets J;
  J.u = datum;
  for (int k = 0; k < sys.d; ++k) J.v[k] = gradient(datum, k);
  auto grad_at = [&](const std::array<SampledField, 2>& v, std::size_t p) {
    Grad r = sys.zero_grad();
    for (int k = 0; k < sys.d; ++k) r[k] = column_at(v[k], p);
    return r;
  };
  J.ut = pointwise_map(datum, sys.N, [&](std::size_t p) -> CVec {
    return -sys.F(0.0, g.point(p), column_at(J.u, p), grad_at(J.v, p));
  });
  for (int k = 0; k < sys.d; ++k) J.vt[k] = gradient(J.ut, k);
  J.utt = pointwise_map(datum, sys.N, [&](std::size_t p) -> CVec {
    Vec x = g.point(p);
    CVec u = column_at(J.u, p);
    Grad v = grad_at(J.v, p);
    Grad vt = grad_at(J.vt, p);
    CVec r = dF_dt(sys, 0.0, x, u, v) + dF_du(sys, 0.0, x, u, v) * column_at(J.ut, p);
    for (int k = 0; k < sys.d; ++k) r += dF_dv(sys, 0.0, x, u, v, k) * vt[k];
    return -r;
  });
  for (int k = 0; k < sys.d; ++k) J.vtt[k] = gradient(J.utt, k);
  return J;
}

Mat pulled_symbol(const SystemSpec& sys, const DatumJets& J, const Vec& x, const Vec& xi, double t) {
  return pulled(sys, at_point(sys, J, x), x, xi, t);
}

Mat adjugate(const Mat& B) {
  int n = int(B.rows());
  Mat adj(n, n);
  if (n == 1) {
    adj(0, 0) = 1.0;
    return adj;
  }
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      Mat minor(n - 1, n - 1);
      for (int r = 0, rr = 0; r < n; ++r) {
        if (r == i) continue;
        for (int c = 0, cc = 0; c < n; ++c) {
          if (c == k) continue;
          minor(rr, cc++) = B(r, c);
        }
        ++rr;
      }
      // adj = transpose of the cofactor matrix
      adj(k, i) = ((i + k) % 2 ? -1.0 : 1.0) * minor.determinant();
    }
  return adj;
}

cd jacobi_derivative(const Mat& B, const Mat& dB) { return (adjugate(B) * dB).trace(); }

CharJet char_jet(const SystemSpec& sys, const DatumJets& J, const Vec& x, const Vec& xi, cd lambda) {
  PointJets P = at_point(sys, J, x);
  Mat Id = Mat::Identity(sys.N, sys.N);
  Mat A0 = pulled(sys, P, x, xi, 0.0);
  CharJet jet;
  auto pj = poly_jet(eigenvalues(A0), lambda);
  jet.P = (A0 - lambda * Id).determinant();
  jet.dl = pj[1];
  jet.dll = pj[2];

  const double h1 = 1e-4;
  Mat dA = (pulled(sys, P, x, xi, h1) - pulled(sys, P, x, xi, -h1)) / (2 * h1);
  jet.dt = jacobi_derivative(A0 - lambda * Id, dA);

  const double h2 = 1e-3;
  Mat Ap = pulled(sys, P, x, xi, h2), Am = pulled(sys, P, x, xi, -h2);
  cd Pp = (Ap - lambda * Id).determinant(), Pm = (Am - lambda * Id).determinant();
  jet.dtt = (Pp - 2.0 * jet.P + Pm) / (h2 * h2);
  jet.dtl = (poly_jet(eigenvalues(Ap), lambda)[1] - poly_jet(eigenvalues(Am), lambda)[1]) / (2 * h2);
  return jet;
}

CharJet char_jet(const SystemSpec& sys, const SampledField& datum, const Vec& x, const Vec& xi,
                 cd lambda) {
  return char_jet(sys, datum_jets(sys, datum), x, xi, lambda);
}

cd char_dt_oracle(const SystemSpec& sys, const SampledField& datum, const Vec& x, const Vec& xi,
                  cd lambda, double h) {
  const Grid& g = datum.grid();
  Mat Id = Mat::Identity(sys.N, sys.N);
  auto step = [&](double tau) {
    SampledField u = datum;
    std::array<SampledField, 2> v;
    for (int k = 0; k < sys.d; ++k) v[k] = gradient(datum, k);
    auto& uv = u.values_mut();
    std::size_t np = g.size();
    for (std::size_t p = 0; p < np; ++p) {
      Grad vp = sys.zero_grad();
      for (int k = 0; k < sys.d; ++k) vp[k] = column_at(v[k], p);
      CVec f = sys.F(0.0, g.point(p), column_at(datum, p), vp);
      for (int c = 0; c < sys.N; ++c) uv[c * np + p] -= tau * f[c];
    }
    Grad vx = sys.zero_grad();
    for (int k = 0; k < sys.d; ++k) vx[k] = interpolate(gradient(u, k), x);
    Mat A = principal_symbol(sys, tau, x, interpolate(u, x), vx, xi);
    return (A - lambda * Id).determinant();
  };
  return (step(h) - step(-h)) / (2 * h);
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

TransitionReport transition_classify(const SystemSpec& sys, const SampledField& datum,
                                     const TransitionRegion& region, double tol) {
  if (region.xs.empty() || region.xis.empty()) throw Error("transition_classify: empty region");
  TransitionReport rep;
  rep.tol = tol;
  DatumJets J = datum_jets(sys, datum);
  double best_gap = std::numeric_limits<double>::infinity();
  Vec best_x{}, best_xi{};
  cd best_l = 0;
  double scale = 1.0;
  for (const auto& x : region.xs) {
    PointJets P = at_point(sys, J, x);
    for (const auto& xi : region.xis) {
      Mat A = pulled(sys, P, x, xi, 0.0);
      scale = std::max(scale, A.norm());
      Eigen::ComplexEigenSolver<Mat> es(A, true);
      auto ev = es.eigenvalues();
      for (int i = 0; i < ev.size(); ++i) rep.max_imag = std::max(rep.max_imag, std::abs(ev(i).imag()));
      rep.max_condition = std::max(rep.max_condition, condition_number(es.eigenvectors()));
      for (int a = 0; a < ev.size(); ++a)
        for (int b = a + 1; b < ev.size(); ++b) {
          double gap = std::abs(ev(a) - ev(b));
          if (gap < best_gap) {
            best_gap = gap;
            best_x = x;
            best_xi = xi;
            best_l = 0.5 * (ev(a) + ev(b));
          }
        }
    }
  }
  double itol = tol * scale;
  rep.hyperbolic_at_0 = rep.max_imag <= itol ? Verdict::pass
                        : rep.max_imag <= 100 * itol ? Verdict::inconclusive
                                                     : Verdict::fail;
  rep.diagonalizable = rep.max_condition <= 1e4   ? Verdict::pass
                       : rep.max_condition <= 1e8 ? Verdict::inconclusive
                                                  : Verdict::fail;
  rep.root_gap = best_gap;
  rep.lambda = best_l;
  if (sys.N < 2) {
    rep.double_root = Verdict::fail;
    rep.transversal = Verdict::fail;
    return rep;
  }
  rep.jet = char_jet(sys, J, best_x, best_xi, best_l);
  double dl = std::abs(rep.jet.dl);
  rep.double_root = (best_gap <= 1e-6 * scale && dl <= 1e-6 * scale) ? Verdict::pass
                    : best_gap <= 1e-3 * scale                       ? Verdict::inconclusive
                                                                      : Verdict::fail;
  if (rep.double_root == Verdict::fail) {
    rep.transversal = Verdict::fail;
    return rep;
  }
  rep.margin = rep.jet.dtt.real() * rep.jet.dll.real() - std::pow(rep.jet.dtl.real(), 2);
  double mtol = 1e-6 * scale * scale;
  bool dt_small = std::abs(rep.jet.dt) <= 1e-6 * scale * scale;
  if (!dt_small || rep.margin < -mtol) rep.transversal = Verdict::fail;
  else if (rep.margin <= mtol) rep.transversal = Verdict::inconclusive;
  else rep.transversal = Verdict::pass;
  return rep;
}

Mat riesz_projector(const Mat& M, const std::vector<Circle>& cs, int nodes) {
  int n = int(M.rows());
  Mat P = Mat::Zero(n, n);
  Mat Id = Mat::Identity(n, n);
  for (const auto& c : cs)
    for (int k = 0; k < nodes; ++k) {
      cd w = std::exp(kI * (2 * kPi * (k + 0.5) / nodes));
      cd z = c.center + c.radius * w;
      Mat R = (z * Id - M).partialPivLu().inverse();
      P += (c.radius * w / double(nodes)) * R;
    }
  return P;
}

double contour_clearance(const Mat& M, const std::vector<Circle>& cs) {
  double best = std::numeric_limits<double>::infinity();
  for (auto l : eigenvalues(M))
    for (const auto& c : cs) best = std::min(best, std::abs(std::abs(l - c.center) - c.radius));
  return best;
}

SpectralSplit contour_projectors(const Mat& M, const std::vector<Circle>& CE,
                                 const std::vector<Circle>& CH, int nodes) {
  SpectralSplit S;
  S.C_E = CE;
  S.C_H = CH;
  auto inside = [](cd l, const std::vector<Circle>& cs) {
    for (const auto& c : cs)
      if (std::abs(l - c.center) < c.radius) return true;
    return false;
  };
  auto ev = eigenvalues(M);
  for (auto l : ev) {
    if (inside(l, CE)) S.mu_E.push_back(l);
    else S.mu_H.push_back(l);
  }
  double gap_io = std::numeric_limits<double>::infinity();
  for (auto a : S.mu_E)
    for (auto b : S.mu_H) gap_io = std::min(gap_io, std::abs(a - b));
  std::vector<Circle> all = CE;
  all.insert(all.end(), CH.begin(), CH.end());
  double clear = contour_clearance(M, all);
  double need = std::isfinite(gap_io) ? gap_io / 4 : 1e-6 * std::max(1.0, M.norm());
  if (clear < need)
    throw Error("contour_projectors: eigenvalue within margin of a contour (clearance " +
                std::to_string(clear) + ")");
  int n = int(M.rows());
  Mat Id = Mat::Identity(n, n);
  S.P_E = riesz_projector(M, CE, nodes);
  S.P_H = riesz_projector(M, CH, nodes);
  if (!S.mu_E.empty()) {
    S.lambda0 = *std::min_element(S.mu_E.begin(), S.mu_E.end(),
                                  [](cd a, cd b) { return a.real() < b.real(); });
    S.gamma = S.lambda0.real();
    S.growth = -S.gamma;
  }
  double maxE = -std::numeric_limits<double>::infinity(), minH = std::numeric_limits<double>::infinity();
  for (auto l : S.mu_E) maxE = std::max(maxE, l.real());
  for (auto l : S.mu_H) minH = std::min(minH, l.real());
  S.separation = minH - maxE;
  S.idempotence_err = std::max(opnorm2(S.P_E * S.P_E - S.P_E), opnorm2(S.P_H * S.P_H - S.P_H));
  S.completeness_err = opnorm2(S.P_E + S.P_H - Id);
  S.cross_err = std::max(opnorm2(S.P_E * S.P_H), opnorm2(S.P_H * S.P_E));
  S.commutator_err = opnorm2(S.P_E * M - M * S.P_E);
  return S;
}

Mat cluster_projector(const Mat& M, std::size_t r) {
  auto ev = eigenvalues(M);
  std::size_t n = ev.size();
  if (r == 0 || r >= n) throw Error("cluster_projector: need 0 < r < N");
  std::sort(ev.begin(), ev.end(), [](cd a, cd b) { return a.real() < b.real(); });
  double scale = std::max(1.0, std::abs(ev.back()) + std::abs(ev.front()));
  if (ev[r].real() - ev[r - 1].real() <= 1e-12 * scale)
    throw Error("cluster_projector: spectral separation fails (real parts meet)");
  cd c = 0;
  for (std::size_t i = 0; i < r; ++i) c += ev[i];
  c /= double(r);
  double rin = 0, rout = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r; ++i) rin = std::max(rin, std::abs(ev[i] - c));
  for (std::size_t i = r; i < n; ++i) rout = std::min(rout, std::abs(ev[i] - c));
  if (rout - rin <= 1e-9 * scale)
    throw Error("cluster_projector: spectral separation fails (no separating circle)");
  double R = rin > 0 ? std::sqrt(rin * rout) : rout / 2;
  double q = std::max(rin / R, R / rout);
  int nodes = int(std::clamp(std::ceil(40.0 / -std::log(q)), 64.0, 2048.0));
  return riesz_projector(M, {Circle{c, R}}, nodes);
}

SpectralSplit elliptic_split(const Mat& M, double cluster_tol) {
  auto ev = eigenvalues(M);
  cd l0 = *std::min_element(ev.begin(), ev.end(), [](cd a, cd b) { return a.real() < b.real(); });
  double ctol = cluster_tol * std::max(1.0, std::abs(l0));
  // distinct clusters
  std::vector<cd> centers;
  std::vector<int> count;
  for (auto l : ev) {
    bool placed = false;
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (std::abs(l - centers[c]) <= ctol) {
        placed = true;
        ++count[c];
        break;
      }
    if (!placed) {
      centers.push_back(l);
      count.push_back(1);
    }
  }
  auto radius_for = [&](std::size_t c) {
    double r = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < centers.size(); ++o)
      if (o != c) r = std::min(r, std::abs(centers[o] - centers[c]));
    return std::isfinite(r) ? r / 2 : 1.0 + std::abs(centers[c]);
  };
  std::vector<Circle> CE, CH;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    Circle circ{centers[c], radius_for(c)};
    if (std::abs(centers[c] - l0) <= ctol) CE.push_back(circ);
    else CH.push_back(circ);
  }
  return contour_projectors(M, CE, CH);
}

SymbolSpec projector_symbol(int d, int N, std::function<Mat(const Vec&, const Vec&)> M,
                            std::vector<Circle> contour, double min_clearance, int nodes) {
  SymbolSpec s;
  s.name = "riesz_projector";
  s.d = d;
  s.N = N;
  s.eval = [M, contour, min_clearance, nodes](const Vec& x, const Vec& xi) -> Mat {
    Mat m = M(x, xi);
    if (contour_clearance(m, contour) < min_clearance)
      throw Error("projector_symbol: eigenvalue too close to the contour at " + where(x, xi));
    return riesz_projector(m, contour, nodes);
  };
  return s;
}

PuiseuxFit puiseux_probe(const std::function<Mat(double)>& family, double z0, double h_max,
                         double h_min, double cluster_tol) {
  auto ev0 = eigenvalues(family(z0));
  // largest cluster at z0
  int best = -1, mult = 0;
  double ctol = std::max(cluster_tol, 1e-4);
  for (std::size_t i = 0; i < ev0.size(); ++i) {
    int c = 0;
    for (auto l : ev0)
      if (std::abs(l - ev0[i]) <= ctol) ++c;
    if (c > mult) {
      mult = c;
      best = int(i);
    }
  }
  cd mu0 = 0;
  int m0 = 0;
  for (auto l : ev0)
    if (std::abs(l - ev0[best]) <= ctol) {
      mu0 += l;
      ++m0;
    }
  mu0 /= double(m0);
  const int K = 9;
  std::vector<double> lx, ly;
  for (int k = 0; k < K; ++k) {
    double h = h_max * std::pow(h_min / h_max, double(k) / (K - 1));
    auto ev = eigenvalues(family(z0 + h));
    std::vector<double> dist;
    for (auto l : ev) dist.push_back(std::abs(l - mu0));
    std::sort(dist.begin(), dist.end());
    double dmax = dist[std::size_t(mult - 1)];
    if (dmax <= 0) continue;
    lx.push_back(std::log(h));
    ly.push_back(std::log(dmax));
  }
  if (lx.size() < 3) throw Error("puiseux_probe: no coalescence found");
  double n = double(lx.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  PuiseuxFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.p_prime = 1.0 / f.slope;
  f.multiplicity = mult;
  f.consistent = f.p_prime >= 0.95 * mult;
  return f;
}

BifurcationRates bifurcation_rates(const std::function<Mat(double)>& B, double h, double tol) {
  auto disc = [&](double t) {
    Mat b = B(t);
    if (b.rows() != 2) throw Error("bifurcation_rates: need a 2x2 block");
    cd tr = b.trace();
    return (tr * tr - 4.0 * b.determinant()).real();
  };
  BifurcationRates r;
  double scale = std::max(1.0, B(0.0).norm());
  double h2 = std::max(h, 1e-3);
  r.disc0 = disc(0.0);
  r.ddisc = (disc(h) - disc(-h)) / (2 * h);
  r.d2disc = (disc(h2) - 2 * r.disc0 + disc(-h2)) / (h2 * h2);
  if (std::abs(r.disc0) > tol * scale * scale || std::abs(r.ddisc) > 1e-6 * scale * scale)
    throw Error("bifurcation_rates: discriminant does not vanish to second order at 0");
  if (r.d2disc >= 0) throw Error("bifurcation_rates: d_t^2 Delta >= 0, not a transversal bifurcation");
  r.zeta = std::sqrt(-r.d2disc / 8);
  double hs = 1e-5;
  double im = 0;
  for (auto l : eigenvalues(B(hs))) im = std::max(im, std::abs(l.imag()));
  r.imag_slope_fd = im / hs;
  return r;
}

Diagonalizer diagonalizer(int d, int N, std::function<Mat(const Vec&, const Vec&)> M,
                          const TensorCutoff& patch, double max_cond) {
  // reference ordering and phase pivots at the patch center
  Eigen::ComplexEigenSolver<Mat> es0(M(patch.x0, patch.xi0), true);
  std::vector<cd> ref(es0.eigenvalues().data(), es0.eigenvalues().data() + N);
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b)
      if (std::abs(ref[a] - ref[b]) < 1e-8 * std::max(1.0, std::abs(ref[a])))
        throw Error("diagonalizer: eigenvalues not separated at the patch center " +
                    where(patch.x0, patch.xi0));
  std::vector<int> pivot(N);
  for (int c = 0; c < N; ++c) es0.eigenvectors().col(c).cwiseAbs().maxCoeff(&pivot[c]);

  auto V_at = [M, ref, pivot, N](const Vec& x, const Vec& xi) -> Mat {
    Eigen::ComplexEigenSolver<Mat> es(M(x, xi), true);
    Mat V(N, N);
    std::vector<bool> used(N, false);
    for (int c = 0; c < N; ++c) {
      int best = -1;
      double bd = std::numeric_limits<double>::infinity();
      for (int k = 0; k < N; ++k)
        if (!used[k] && std::abs(es.eigenvalues()(k) - ref[c]) < bd) {
          bd = std::abs(es.eigenvalues()(k) - ref[c]);
          best = k;
        }
      used[best] = true;
      CVec col = es.eigenvectors().col(best);
      col /= col.norm();
      cd pv = col[pivot[c]];
      if (std::abs(pv) > 0) col *= std::abs(pv) / pv;
      V.col(c) = col;
    }
    return V;
  };
  auto Q_at = [V_at, patch, N](const Vec& x, const Vec& xi) -> Mat {
    double chi = patch(x, xi);
    Mat Id = Mat::Identity(N, N);
    if (chi == 0) return Id;
    return chi * V_at(x, xi).inverse() + (1 - chi) * Id;
  };

  Diagonalizer D;
  D.Q.name = "diagonalizer";
  D.Q.d = d;
  D.Q.N = N;
  D.Q.eval = Q_at;
  D.Qinv.name = "diagonalizer_inverse";
  D.Qinv.d = d;
  D.Qinv.N = N;
  D.Qinv.eval = [Q_at](const Vec& x, const Vec& xi) -> Mat { return Q_at(x, xi).inverse(); };

  const int S = d == 1 ? 9 : 5;
  for (int a = 0; a < S; ++a)
    for (int b = 0; b < (d == 2 ? S : 1); ++b)
      for (int c = 0; c < S; ++c)
        for (int e = 0; e < (d == 2 ? S : 1); ++e) {
          double fa = -1 + 2.0 * a / (S - 1), fb = d == 2 ? -1 + 2.0 * b / (S - 1) : 0;
          double fc = -1 + 2.0 * c / (S - 1), fe = d == 2 ? -1 + 2.0 * e / (S - 1) : 0;
          Vec x{patch.x0[0] + fa * patch.rx, patch.x0[1] + fb * patch.rx};
          Vec xi{patch.xi0[0] + fc * patch.rxi, patch.xi0[1] + fe * patch.rxi};
          Mat q = Q_at(x, xi);
          double cond = condition_number(q);
          if (cond > max_cond)
            throw Error("diagonalizer: condition number " + std::to_string(cond) + " at " + where(x, xi));
          D.max_condition = std::max(D.max_condition, cond);
          if (patch(x, xi) == 1.0) {
            Mat m = M(x, xi);
            Mat t = q * m * q.inverse();
            Mat off = t;
            for (int i = 0; i < N; ++i) off(i, i) = 0;
            D.max_offdiag = std::max(D.max_offdiag, off.norm() / std::max(1e-300, m.norm()));
          }
        }
  return D;
}

Triangularized triangularize_scaled(const Mat& M0, double delta) {
  int n = int(M0.rows());
  Eigen::ComplexSchur<CMat> cs(CMat(M0), true);
  Triangularized T;
  T.K0 = cs.matrixU();
  T.Kdelta = Mat::Zero(n, n);
  Mat Kinv = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    T.Kdelta(i, i) = std::pow(delta, i);
    Kinv(i, i) = std::pow(delta, -i);
  }
  Mat Tm = cs.matrixT();
  T.Mt = Kinv * Tm * T.Kdelta;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      if (i != k) T.max_offdiag = std::max(T.max_offdiag, std::abs(T.Mt(i, k)));
  return T;
}

}  // namespace mlab
