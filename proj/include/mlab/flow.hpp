#pragma once

#include <optional>

#include "mlab/datum.hpp"

namespace mlab {

// decay: d_t z + op_j(M) z = 0.  growth: d_t u = op_j(Q) u.
enum class SignTag { decay, growth };
const char* sign_tag_name(SignTag t);

// d_t z = L(t) z, L of order zero
struct Generator {
  std::string name;
  std::function<SampledField(double t, const SampledField&)> apply;
  // L(t) = factor(t) L0 when set; exact flow exp(factor_integral(t) L0)
  std::function<double(double)> factor, factor_integral;
  std::optional<CMat> dense;  // L0 on sampled values
};

// L = -op_j(a) (decay) or op_j(a) (growth); dense copy when N npts <= dense_limit
Generator symbol_generator(const SymbolSpec& a, const Grid& g, const QuantOpts& o, SignTag tag,
                           std::size_t dense_limit = 256);
// factor(t) times a fixed generator
Generator scaled_generator(Generator g, std::function<double(double)> factor,
                           std::function<double(double)> integral);

// largest ||L(t) z|| / ||z|| over seeded random probes shaped like `like`
double probe_norm(const Generator& g, const SampledField& like, double t, int probes = 3,
                  unsigned seed = 5);

struct FlowProblem {
  Generator gen;
  int j = 0;
  std::vector<double> times;  // increasing, >= 0
  SampledField z0;
  double rtol = 1e-11;  // per-step error relative to the state norm
  double h0 = 0.05, h_min = 1e-9, h_max = 0.25;
  bool dense_oracle = true;
  double oracle_tol = 1e-6;
  double probe_limit = 1e6;
  unsigned seed = 5;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<SampledField> states;
  std::vector<double> norms;
  long steps = 0, rejected = 0;
  double probe = 0.0;
  double oracle_err = -1.0;  // max relative error against exp(tL), < 0 when not run
  bool oracle_ok = true;
};

// RK4 with step doubling; dense exponential oracle when a dense generator is present
Trajectory flow_solve(const FlowProblem& p);

double theta_prime(double theta);
// t* = j (theta* ln2 - eps_a) / g
double tstar_rates(int j, double theta_star, double eps_a, double g);
// t* = (2 j (theta* ln2 - eps_a) / dzeta)^{1/2}
double tstar_transition(int j, double theta_star, double eps_a, double dzeta);
// (7j/8) (2s - 1 - d/2 - sigma) ln2 / gap
double tfinal_elliptic(int j, double s, int d, double sigma, double gap);

struct RateOpts {
  double theta = 0.5;
  double eps_a = 0.01;
  double C = 1.0;  // slack constant of the envelopes
  TensorCutoff psi_tilde;
  int nt = 16;
  std::optional<double> gamma_plus, gamma_minus;  // sampled when unset
  SignTag tag = SignTag::growth;
  QuantOpts quant;
  int samples = 24;  // per axis
  bool dense_oracle = true;
};

struct RateReport {
  std::string kind;  // "garding", "transition"
  SignTag tag = SignTag::growth;
  std::vector<double> times, log_norms, log_upper, log_lower;
  double fitted_rate = 0.0;  // d ln||u|| / dt, or zeta for the Gaussian fit
  double gamma_plus = 0.0, gamma_minus = 0.0;
  double zeta_minus = 0.0, zeta_plus = 0.0, zeta_center = 0.0;
  double theta_star = 0.0, t_star = 0.0, t_final = 0.0;
  double C_upper = 0.0, C_lower = 0.0;  // smallest constants making the envelopes hold
  bool upper_ok = false, lower_ok = false;
  double drift = 0.0;  // real branches: max |ln ||u(t)|| - ln ||u(0)|| |
  std::vector<std::string> notes;
};

struct RealPartRange {
  double max = -1e300, min = 1e300;
};
// extremes of the eigenvalues of (a + a*)/2 over x in xs, xi in xis; min only where w(x, xi) > 0
RealPartRange sample_real_parts(const std::function<Mat(const Vec&, const Vec&)>& a,
                                const std::vector<Vec>& xs, const std::vector<Vec>& xis,
                                const std::function<double(const Vec&, const Vec&)>& w);

// sample points of the support of a cutoff, and of the grid band rescaled by 2^{-j}
std::vector<Vec> cutoff_x_samples(const TensorCutoff& c, int per_axis);
std::vector<Vec> cutoff_xi_samples(const TensorCutoff& c, int per_axis);

RateReport garding_rates(const SymbolSpec& Q, int j, const SampledField& u0, double tfinal,
                         const RateOpts& o);

// ---------------------------------------------------------------- elliptic rates

// Operator restricted to the Fourier modes where an input cutoff is nonzero.
// Unitary coefficients c_k L^{d/2}; `rows` are the full output.
struct BandMatrix {
  Grid g;
  int N = 1;
  std::vector<std::size_t> modes;  // column modes k (all components)
  CMat full;                       // (N npts) x (N |modes|)
  CMat block() const;              // rows restricted to the same modes
};
BandMatrix band_matrix(const SymbolSpec& a, const Grid& g, const QuantOpts& o,
                       const std::vector<std::size_t>& modes);
// modes of g whose frequency 2^{-j}(carrier + m) lies where c.psi2 > 0
std::vector<std::size_t> band_modes(const Grid& g, int j, const TensorCutoff& c);

// exp(tA) for a fixed A, by eigendecomposition when well conditioned
class Propagator {
 public:
  explicit Propagator(CMat A);
  CMat at(double t) const;
  CVec apply(double t, const CVec& v) const;
  bool diagonalized() const { return diag_; }

 private:
  CMat A_;
  bool diag_ = false;
  double norm1_ = 0.0;
  CMat V_, Vinv_;
  Eigen::VectorXcd lam_;
};

// 2-norm of a matrix; eigenvalues of X* X, power iteration above 2048 columns
double op_norm(const CMat& X, int iters = 60);

// exp(sign t A) at increasing times, one exponential per distinct step
std::vector<CMat> exp_series(const CMat& A, const std::vector<double>& times, double sign);
// ||left exp(sign t A) right|| at each time; null factors are identities
std::vector<double> flow_norms(const CMat& A, const std::vector<double>& times, double sign,
                               const CMat* left, const CMat* right);

// band blocks of the E and H systems and of the cutoffs acting on them
struct BlockFlows {
  std::vector<std::size_t> modes;  // where psi_sharp > 0
  CMat AE, AH;                     // op_j of the E and H block symbols
  CMat PiE, PiH;                   // op_j(psi_flat) on r and N - r components
  CMat PsiE;                       // op_j(psi~) on r components, full output rows
};
BlockFlows band_flows(const SymbolSpec& EE, const SymbolSpec& HH, const PipelineGeometry& geo,
                      const QuantOpts& q);

struct EllipticRateOpts {
  int samples = 17;  // per axis over the cutoff supports
  bool measure = true;
  std::vector<double> times;  // measured flows; default 1, 2, 4, 8
  QuantOpts quant{0, Quant::pdo, DyadicFamily{}};
};

struct EllipticRates {
  double delta = 0.0;
  cd lambda0 = 0.0;
  double growth = 0.0;      // -Re lambda0 at (x0, xi0)
  double half_gap = 0.0;    // half the distance between E and H real parts at (x0, xi0)
  double gamma_E = 0.0;     // max over supp psi_flat of Re(-M~_E), E block
  double gamma_E_full = 0.0;  // same, full matrix
  double gamma_H = 0.0;     // max over supp psi_flat of Re(-M~_H), H block
  double gamma_E_minus = 0.0;  // min over supp psi~ of Re(-M~_E), E block
  double max_offdiag = 0.0;
  // measured on the triangularized blocks:
  // ||S_E(0;t) op(psi_flat)||, ||S_H(0;t) op(psi_flat)||, ||op(psi~) S_E(t;0) op(psi_flat)||
  std::vector<double> times, fwd_E, fwd_H, bwd_E;
  BlockFlows bands;
  double meas_E = 0.0, meas_H = 0.0, meas_E_minus = 0.0;
  std::size_t band = 0;
};

// orthonormal basis with range(P) first, upper triangular M in it
Mat ordered_schur_basis(const Mat& M, const Mat& P, int& rank);

EllipticRates elliptic_rate_bounds(const EllipticSymbols& S, const PipelineGeometry& geo,
                                   const EllipticRateOpts& o = EllipticRateOpts{});

}  // namespace mlab
