#pragma once

#include <map>
#include <memory>

#include "mlab/fit.hpp"
#include "mlab/spectral.hpp"

namespace mlab {

// a_j = 2^{-j sigma} (1 + j)^{-1}
double amplitude(int j, double sigma);

using LatticeIndex = std::array<long, 2>;

// Trigonometric polynomial f(x) = sum_m c_m e^{i (x - origin).k_m}, k_m = (2pi/L) m,
// kept sparse so that carriers far beyond any grid band stay exact.
struct SparseSpectrum {
  int d = 1;
  double L = 2 * kPi;
  Vec origin{0, 0};
  std::map<LatticeIndex, cd> c;

  double spacing() const { return 2 * kPi / L; }
  Vec freq(const LatticeIndex& m) const;
  cd operator()(const Vec& x) const;
  cd derivative(const Vec& x, int axis) const;
  void add_shifted(const SparseSpectrum& w, const LatticeIndex& shift, cd a);
  SparseSpectrum multiplied(const std::function<cd(const Vec&)>& m) const;
  // (f + conj f) / 2
  SparseSpectrum real_part() const;
  // continuous L2 norm over one period box
  double l2() const;
  // values on g, modulated grids get the carrier removed
  SampledField sample(const Grid& g) const;
  // lattice index of a frequency, throws when off lattice
  LatticeIndex index_of(const Vec& k) const;
};

// w^(k) proportional to the bump exp(-1/(1-(|k|/R)^2)), normalized to w(x0) = 1
SparseSpectrum bump_envelope(int d, double R, double L, const Vec& x0);

struct OscillatoryOpts {
  double sigma = 2.0;
  int J = 9;
  double a0 = -1.0;  // negative: 2 sum_{j>=1} a_j max|w| / |w(x0)|
  Vec xi0{1, 0};
  int j0 = 4;
  double R = 0.3;
  double max_freq = 0.0;  // band of the target grid, 0 = unlimited
};

struct OscillatoryDatum {
  SparseSpectrum w, w_in;
  OscillatoryOpts opts;
  std::vector<double> a;  // a[0] = a0
  std::vector<std::string> warnings;
};

// w_in = sum_j a_j e^{i (x - x0).2^j xi0} w, phase referenced at x0
OscillatoryDatum oscillatory_sum(const SparseSpectrum& w, OscillatoryOpts o,
                                 const DyadicFamily& fam = DyadicFamily{});

struct BlockReport {
  std::vector<int> js;
  std::vector<double> norms;   // ||phi_{j+1}(D) w_in||
  std::vector<double> ratios;  // norms / a_j
  std::vector<double> leak;    // ||phi_{j+1}(D)(w_in - a_j e_j w)|| / a_j
  double spread = 0.0;         // max ratio / min ratio
};
BlockReport block_norms(const OscillatoryDatum& osc, int jlo, int jhi,
                        const DyadicFamily& fam = DyadicFamily{});

struct SharpnessReport {
  double exponent = 0.0;
  std::vector<int> chunk_end;        // dyadic chunk upper ends
  std::vector<double> chunk_sums;    // sum over the chunk of (2^{j s'} ||phi_{j+1} w_in||)^2
  bool bounded = false;              // chunk sums decrease
  bool growing = false;              // chunk sums increase
};
SharpnessReport sharpness_witness(const OscillatoryDatum& osc, double exponent,
                                  const DyadicFamily& fam = DyadicFamily{});

struct PolarizationResult {
  CVec u1;
  bool repaired = false;
  double alpha = 0.0;
  int halvings = 0;
  CVec e;
  CVec condition;  // e + (d_u P_E . e) u0
  double proj_norm = 0.0;  // ||P_E(u1) u1||
  double tol = 0.0;
  std::string branch;  // "unchanged", "eigenvector", "rescaled"
  SpectralSplit split;  // at u0
};

// i A(0, x0, u, v0, xi0) at the point's data
Mat principal_M(const SystemSpec& sys, const SpectralPoint& pt, const CVec& u);
// P_E of principal_M(u) through the contours of the base split
Mat elliptic_projector(const SystemSpec& sys, const SpectralPoint& pt, const SpectralSplit& base,
                       const CVec& u);
PolarizationResult polarization_select(const SystemSpec& sys, const SpectralPoint& pt,
                                       double tol_rel = 1e-6, double alpha0 = 0.1);

struct FullDatum {
  int d = 1;
  int N = 1;
  Vec x0{0, 0};
  CVec u1;
  Grad v0;
  OscillatoryDatum osc;
  double psi_radius = 1.0;  // psi1 = 1 on half of it
  double anchor = 0.0;      // |w_in(x0)|
  Grad corr;                // v0 - u1 d w_in(x0) / |w_in(x0)|

  double psi1(const Vec& x) const;
  CVec value(const Vec& x) const;
  Grad gradient(const Vec& x) const;
  // only the compactly supported corrector (x - x0).corr psi1(x)
  CVec corrector(const Vec& x) const;
  SampledField sample(const Grid& g) const;
};

FullDatum assemble_datum(const CVec& u1, const Grad& v0, const OscillatoryDatum& osc,
                         const Vec& x0, double psi_radius = 1.0, double tol = 1e-12);

// w_in multiplied by the mollifier symbol at scale eps (the corrector is kept)
FullDatum mollified_datum(const FullDatum& u, double eps);

// u and d_x u at the nodes of a grid; direct evaluation off the nodes
class DatumCoefficients {
 public:
  DatumCoefficients(std::shared_ptr<const FullDatum> u, const Grid& g);
  std::pair<CVec, Grad> at(const Vec& x) const;
  const FullDatum& datum() const { return *u_; }

 private:
  std::shared_ptr<const FullDatum> u_;
  Grid g_;
  std::vector<CVec> uv_;
  std::vector<Grad> gv_;
};

// d_t u = -F(0, x, u, d_x u) and its x-gradient (centered differences) at x
std::pair<CVec, Grad> datum_time_derivative(const SystemSpec& sys, const DatumCoefficients& c,
                                            const Vec& x, double h = 1e-5);

struct AnchorCheck {
  double value_err = 0.0, grad_err = 0.0;
};
AnchorCheck check_anchors(const FullDatum& u);

// gradient u1 d w_in(x0) / |w_in(x0)| for which the corrector vanishes
Grad matched_gradient(const CVec& u1, const OscillatoryDatum& osc, const Vec& x0);

// Space-frequency cutoffs around (x0, xi0) and a local grid modulated at 2^j xi0.
struct PipelineGeometry {
  int d = 1;
  int j = 6;
  Vec x0{0, 0}, xi0{1, 0};
  double delta = 0.1;  // frequency radius of psi
  double rx = 1.0;     // spatial radius of psi
  TensorCutoff psi, psi_flat, psi_sharp, psi_tilde;
  Grid local;
};
// n = 0 picks the smallest power of two covering the psi_sharp band with margin
PipelineGeometry make_geometry(int d, const Vec& x0, const Vec& xi0, int j, double delta,
                               double rx = 1.0, long n = 0);

// Symbols of the localized system at t = 0 with coefficients from the datum.
struct EllipticSymbols {
  int j = 0;
  double eps = 0.0;
  SymbolSpec A;         // i A + 2^{-j} d3F, not localized
  SymbolSpec M;         // psi_sharp (i A + 2^{-j} d3F)
  SymbolSpec P_E, P_H;  // psi_flat times the projectors of the unlocalized, mollified M
  SymbolSpec ME, MH;  // P_E M, P_H M
  SymbolSpec dtP_E, dtP_H;  // psi_flat d_t P^eps, with the 2^{-j} time scale
  SpectralSplit base;   // at (x0, xi0), coefficients u1, v0
  bool projector_x_independent = false;
};
EllipticSymbols elliptic_symbols(const SystemSpec& sys, const FullDatum& u,
                                 const PipelineGeometry& geo, double eps);

// op_j(psi) u_in on the local grid
SampledField localized_datum(const FullDatum& u, const PipelineGeometry& geo,
                             Quant kind = Quant::para, const DyadicFamily& fam = DyadicFamily{});

double ball_l2(const SampledField& f, const Vec& x0, double r);

struct ComponentBound {
  int j = 0;
  double norm = 0.0;   // ||op_j(psi~) v_E(0)||_{L2(B(x0, r))}
  double a_j = 0.0;
  double ratio = 0.0;  // norm / a_j
  double corrector_norm = 0.0;  // ||op_j(psi) corrector|| / a_j
  bool precondition_ok = true;  // psi~1(x0) = 1 and psi~2(xi0) = 1
  SampledField vE0;
};
ComponentBound elliptic_component_bound(const SystemSpec& sys, const FullDatum& u,
                                        const PipelineGeometry& geo, double eps,
                                        Quant kind = Quant::para,
                                        const DyadicFamily& fam = DyadicFamily{});

// || pdo((psi2_flat P)(xi0 + 2^{-j} .)) w~ - P(xi0) w~ ||_{L2(B(x0,1))},
// w~ = u1 psi1 psi2(xi0 + 2^{-j} D) w, for an x-independent projector P(xi)
double approx_datum_error(const SparseSpectrum& w, const CVec& u1,
                          const std::function<Mat(const Vec&)>& P, const PipelineGeometry& geo,
                          long n = 64);

}  // namespace mlab
