#pragma once

#include <optional>

#include "mlab/quantize.hpp"
#include "mlab/system.hpp"

namespace mlab {

// A = sum_k xi_k d_{v_k} F
Mat principal_symbol(const SystemSpec& sys, double t, const Vec& x, const CVec& u, const Grad& v,
                     const Vec& xi);

struct SpectralPoint {
  double t = 0.0;
  Vec x{0, 0};
  CVec u;
  Grad v;
  Vec xi{1, 0};
};
SpectralPoint base_point(const SystemSpec& sys);

struct EllipticityVerdict {
  bool elliptic = false;
  double max_imag = 0.0;  // max |Im lambda| over the spectrum of A
  std::vector<cd> spectrum;
};
EllipticityVerdict ellipticity_classify(const SystemSpec& sys, const SpectralPoint& pt,
                                        double tol = 1e-8);

std::vector<cd> eigenvalues(const Mat& m);
double condition_number(const Mat& m);

// d/dt of the datum along du/dt = -F, with first and second time derivatives as fields
struct DatumJets {
  SampledField u;                // u_in
  std::array<SampledField, 2> v;  // d_x u_in
  SampledField ut, utt;
  std::array<SampledField, 2> vt, vtt;
};
DatumJets datum_jets(const SystemSpec& sys, const SampledField& datum);

struct CharJet {
  cd P = 0, dl = 0, dll = 0, dt = 0, dtt = 0, dtl = 0;
};

// time-Taylor pullback A(t) = A(t, x, u(t, x), d_x u(t, x), xi) to second order
Mat pulled_symbol(const SystemSpec& sys, const DatumJets& J, const Vec& x, const Vec& xi, double t);
CharJet char_jet(const SystemSpec& sys, const SampledField& datum, const Vec& x, const Vec& xi,
                 cd lambda);
CharJet char_jet(const SystemSpec& sys, const DatumJets& J, const Vec& x, const Vec& xi, cd lambda);
// d_t P from one explicit Euler step of the datum, for cross checks
cd char_dt_oracle(const SystemSpec& sys, const SampledField& datum, const Vec& x, const Vec& xi,
                  cd lambda, double h = 1e-6);
// determinant derivative tr(adj(B) dB)
cd jacobi_derivative(const Mat& B, const Mat& dB);
Mat adjugate(const Mat& B);

enum class Verdict { pass, fail, inconclusive };
const char* verdict_name(Verdict v);

struct TransitionRegion {
  std::vector<Vec> xs;
  std::vector<Vec> xis;
};

struct TransitionReport {
  Verdict hyperbolic_at_0 = Verdict::fail;  // (i)
  double max_imag = 0.0;
  Verdict diagonalizable = Verdict::fail;  // (ii)
  double max_condition = 0.0;
  Verdict double_root = Verdict::fail;  // (iii)
  cd lambda = 0.0;
  double root_gap = 0.0;
  Verdict transversal = Verdict::fail;  // (iv)
  double margin = 0.0;  // d_t^2P d_l^2P - (d_tl P)^2 at the double root
  CharJet jet;
  double tol = 0.0;
  bool transitional() const {
    return hyperbolic_at_0 == Verdict::pass && diagonalizable == Verdict::pass &&
           double_root == Verdict::pass && transversal == Verdict::pass;
  }
};
TransitionReport transition_classify(const SystemSpec& sys, const SampledField& datum,
                                     const TransitionRegion& region, double tol = 1e-8);

struct Circle {
  cd center;
  double radius = 1.0;
};

// (1/2 pi i) sum over circles of the contour integral of (z - M)^{-1}
Mat riesz_projector(const Mat& M, const std::vector<Circle>& cs, int nodes = 64);
// Riesz projector onto the r eigenvalues of smallest real part through one circle around
// their centroid; throws when the real parts or the circle fail to separate them
Mat cluster_projector(const Mat& M, std::size_t r);
// smallest distance from an eigenvalue of M to any circle
double contour_clearance(const Mat& M, const std::vector<Circle>& cs);

struct SpectralSplit {
  cd lambda0 = 0.0;
  std::vector<cd> mu_E, mu_H;
  std::vector<Circle> C_E, C_H;
  Mat P_E, P_H;
  double gamma = 0.0;   // Re lambda0, negative on the unstable side
  double growth = 0.0;  // -Re lambda0
  double separation = 0.0;  // min Re mu_H - max Re mu_E
  double idempotence_err = 0.0, completeness_err = 0.0, cross_err = 0.0, commutator_err = 0.0;
};

SpectralSplit contour_projectors(const Mat& M, const std::vector<Circle>& CE,
                                 const std::vector<Circle>& CH, int nodes = 64);
// E = eigenvalues clustered at the one with smallest real part
SpectralSplit elliptic_split(const Mat& M, double cluster_tol = 1e-6);

// P_E(x, xi) over a patch through a fixed contour set, rejecting samples too close to it
SymbolSpec projector_symbol(int d, int N, std::function<Mat(const Vec&, const Vec&)> M,
                            std::vector<Circle> contour, double min_clearance, int nodes = 64);

struct PuiseuxFit {
  double slope = 0.0;     // fitted exponent 1/p'
  double p_prime = 0.0;   // 1/slope
  int multiplicity = 1;
  bool consistent = false;  // p' >= multiplicity (up to fitting slack)
};
PuiseuxFit puiseux_probe(const std::function<Mat(double)>& family, double z0,
                         double h_max = 1e-2, double h_min = 1e-6, double cluster_tol = 1e-6);

struct BifurcationRates {
  double disc0 = 0.0, ddisc = 0.0, d2disc = 0.0;  // discriminant jet at 0
  double zeta = 0.0;           // (-d_t^2 Delta / 8)^{1/2}
  double imag_slope_fd = 0.0;  // |d_t Im mu| at 0 by differences
};
BifurcationRates bifurcation_rates(const std::function<Mat(double)>& B, double h = 1e-4,
                                   double tol = 1e-8);

struct Diagonalizer {
  SymbolSpec Q, Qinv;
  double max_condition = 0.0;
  double max_offdiag = 0.0;  // of Q M Q^{-1} on patch samples
};
// Q = V^{-1} with V the eigenvector matrix on the patch, blended to Id by the cutoff
Diagonalizer diagonalizer(int d, int N, std::function<Mat(const Vec&, const Vec&)> M,
                          const TensorCutoff& patch, double max_cond = 50.0);

struct Triangularized {
  Mat K0, Kdelta, Mt;
  double max_offdiag = 0.0;
};
Triangularized triangularize_scaled(const Mat& M0, double delta);

}  // namespace mlab
