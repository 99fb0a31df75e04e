#include "mlab/system.hpp"

namespace mlab {

namespace {
constexpr double kStep = 1e-5;
}

void SystemSpec::validate() const {
  if (d != 1 && d != 2) throw Error("system " + name + ": d must be 1 or 2");
  if (N < 1 || N > kMaxN) throw Error("system " + name + ": N out of range");
  if (!F) throw Error("system " + name + ": F missing");
  if (u0.size() != N) throw Error("system " + name + ": base point u0 has wrong size");
  for (int k = 0; k < d; ++k)
    if (v0[k].size() != N) throw Error("system " + name + ": base gradient has wrong size");
}

Grad SystemSpec::zero_grad() const {
  Grad g;
  for (auto& c : g) c = CVec::Zero(N);
  return g;
}

CVec dF_dt(const SystemSpec& s, double t, const Vec& x, const CVec& u, const Grad& v) {
  if (s.d1F) return s.d1F(t, x, u, v);
  return (s.F(t + kStep, x, u, v) - s.F(t - kStep, x, u, v)) / (2 * kStep);
}

Mat dF_du(const SystemSpec& s, double t, const Vec& x, const CVec& u, const Grad& v) {
  if (s.d3F) return s.d3F(t, x, u, v);
  Mat J(s.N, s.N);
  for (int c = 0; c < s.N; ++c) {
    CVec up = u, um = u;
    up[c] += kStep;
    um[c] -= kStep;
    J.col(c) = (s.F(t, x, up, v) - s.F(t, x, um, v)) / (2 * kStep);
  }
  return J;
}

Mat dF_dv(const SystemSpec& s, double t, const Vec& x, const CVec& u, const Grad& v, int k) {
  if (s.d4F) return s.d4F(t, x, u, v, k);
  Mat J(s.N, s.N);
  for (int c = 0; c < s.N; ++c) {
    Grad vp = v, vm = v;
    vp[k][c] += kStep;
    vm[k][c] -= kStep;
    J.col(c) = (s.F(t, x, u, vp) - s.F(t, x, u, vm)) / (2 * kStep);
  }
  return J;
}

}  // namespace mlab
