#pragma once

#include "mlab/field.hpp"

namespace mlab {

// exp(-1/t) based smooth step: 0 for t <= 0, 1 for t >= 1
double smooth_step(double t);
// radial bump: 1 on [0, a], 0 on [b, inf)
double smooth_cut(double r, double a, double b);

struct DyadicFamily {
  double eps1 = 0.6;
  double eps2 = 0.9;
  int J = 40;
  int N0 = 3;

  void validate() const;
  double phi0(double r) const { return smooth_cut(r, eps1, eps2); }
  // phi_k(r), r = |xi|
  double phi(int k, double r) const;
  // admissible cutoff sum_k phi0(2^{N0-k} |eta|) phi_k(br), br = <xi>
  double phi_adm(double eta, double br) const;
  // phi0(2^{N0} eps2 |eta|), vanishes for |eta| >= 2^{-N0}
  double phi0_tilde(double eta) const { return phi0(std::ldexp(eps2, N0) * eta); }
  // indices k with phi_k(r) possibly nonzero
  std::pair<int, int> active(double r) const;
};

SampledField lp_project(const SampledField& f, const DyadicFamily& fam, int j);
// phi0(2^{-j} D) f
SampledField lp_low(const SampledField& f, const DyadicFamily& fam, int j);

enum class Direction { forward, inverse };
enum class RescaleMode { box, same_box };

struct RescaleResult {
  SampledField field;
  double aliased = 0.0;  // l2 mass that could not be placed
};

// (h_j f)(x) = f(2^{-j} x); box mode rescales L by 2^j and keeps coefficients,
// same_box mode reindexes coefficients on the fixed lattice.
RescaleResult hyperbolic_rescale(const SampledField& f, int j, Direction dir,
                                 RescaleMode mode = RescaleMode::box);
// H_j = 2^{-jd/2} h_j
RescaleResult H_rescale(const SampledField& f, int j, Direction dir,
                        RescaleMode mode = RescaleMode::box);

}  // namespace mlab
