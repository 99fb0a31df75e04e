#pragma once

#include <map>

#include "mlab/flow.hpp"

namespace mlab {

// ---------------------------------------------------------------- parameter windows

// throw Error naming the violated inequality
void check_elliptic_window(double s, double sigma, int d);
void check_transition_window(double s, double sigma, int d);
// theta <= 0 selects s - 1 - d/2
double resolve_theta(double theta, double s, int d);

// ---------------------------------------------------------------- data

struct DatumRecipe {
  double sigma = 2.5;
  int J = 10;
  double R = 0.3;            // bump radius of w^
  double L = 64 * kPi;       // lattice period of the datum
  bool real = false;         // keep (w_in + conj w_in) / 2
  bool repair_polarization = true;  // elliptic repair of u1, else u1 = u0
};
FullDatum build_datum(const SystemSpec& sys, const DatumRecipe& r);

// oscillation of u on g, restricted to the band the grid resolves
SampledField band_limited_datum(const FullDatum& u, const Grid& g);

// ---------------------------------------------------------------- transition branches

struct BranchSymbols {
  int m = 0;  // rank by decreasing Im mu at small positive time
  SymbolSpec mu0;  // psi_sharp mu(0), scalar
  SymbolSpec dmu;  // psi_sharp d_tau mu(0)
  CVec left, right;  // eigenvectors at (x0, xi0), left . right = 1
  double zeta_center = 0.0;  // d_tau Im mu(0, x0, xi0)
  bool bifurcating = false;
};

struct TransitionSymbols {
  std::vector<BranchSymbols> branches;
  cd lambda0 = 0.0;
  BifurcationRates rates;  // classifier value of |d_t Im mu| at (x0, xi0)
  bool double_root = false;
};

// branches of A(tau) = A(0, x, u + tau u_t, v + tau v_t, xi), u = datum, d_t u = -F
TransitionSymbols transition_symbols(const SystemSpec& sys, const FullDatum& u,
                                     const PipelineGeometry& geo, double tau_h = 1e-4);

// d_t w + 2^{j/2} op_j(i mu(2^{-j/2} t)) w = 0 with mu linear in t, on the psi_sharp band
struct BranchFlow {
  std::vector<std::size_t> modes;
  CMat L0, L1;  // generator L0 + t L1
  CMat Pi;      // op_j(psi_flat) on the band
  CMat Psi;     // op_j(psi~), full output rows
  std::vector<double> times;
  std::vector<CMat> U;  // S(0; t)
  long steps = 0;
};
// fourth-order Magnus steps of length <= h_max
BranchFlow branch_flow(const BranchSymbols& b, const PipelineGeometry& geo,
                       const std::vector<double>& times, const QuantOpts& q, double h_max = 0.05);
// band coefficients (unitary) of a scalar field on the local grid
CVec band_vector(const SampledField& f, const std::vector<std::size_t>& modes);

struct TransitionRateOpts {
  double theta = 2.0;
  double eps_a = 0.01;
  double C = 1.0;
  int nt = 12;
  double obs_fraction = 0.9;    // observation time / t*
  std::optional<double> t_obs;  // overrides the fraction of t*
  double h_max = 0.05;
  int samples = 17;
  QuantOpts quant{0, Quant::pdo, DyadicFamily{}};
};

// zeta- = min over supp psi~ and zeta+ = max over supp psi_sharp of psi_sharp d_tau Im mu
std::pair<double, double> zeta_bracket(const BranchSymbols& b, const PipelineGeometry& geo,
                                       int samples);

// Gaussian fit of ln ||S(0;t) w0|| against t^2/2; w0 null: op_j(psi~) of a packet at (x0, xi0)
RateReport transition_rate_bounds(const BranchSymbols& b, const PipelineGeometry& geo,
                                  const SampledField* w0, const TransitionRateOpts& o,
                                  BranchFlow* flow = nullptr);

// ---------------------------------------------------------------- remainders

// Dense operators of the projected elliptic system on the local grid.
struct RemainderOps {
  int j = 0;
  double theta = 1.0, theta_p = 0.5, eps = 0.0;
  CMat AE, AH;  // op_j(M_E), op_j(M_H)
  CMat GE, GH;  // G_E, G_H with the 2^{j theta'} prefactor
  CMat PE, PH;  // op_j(psi_flat P^eps)
  CVec outE, outH;  // G^out_E, G^out_H at t = 0
  CVec v0;          // op_j(psi) u_in
  // parts of ||G_E||: commutator, R_E, d_t P term (each with the prefactor)
  double comm = 0.0, rstar = 0.0, dtp = 0.0;
  double gamma_E = 0.0;  // sampled forward rate of the E block
};
RemainderOps remainder_ops(const SystemSpec& sys, const FullDatum& u, const PipelineGeometry& geo,
                           double theta, Quant gen_quant = Quant::pdo,
                           Quant rem_quant = Quant::para);

struct RemainderRow {
  int j = 0;
  double G_E = 0.0, G_H = 0.0;  // 2-norms
  double comm = 0.0, rstar = 0.0, dtp = 0.0;
  double out_E = 0.0, out_H = 0.0;
  double out_E1 = 0.0;   // ||int_0^t S_E(t1; t) G^out_E dt1||
  double out_bound = 0.0;  // 2^{-j(2s-1-d/2)} e^{t gamma}, gamma = measured forward rate
};
struct RemainderAudit {
  double s = 0.0, target_slope = 0.0;
  double t = 1.0;
  std::vector<RemainderRow> rows;
  double G_spread = 0.0;   // max / min of G_E over j
  double out_slope = 0.0;  // fitted d log2 ||G^out_E|| / dj
  bool flat_ok = false, slope_ok = false;
};
RemainderAudit remainder_audit(const SystemSpec& sys, const DatumRecipe& dr, double s, double theta,
                               const std::vector<int>& js, double delta, double rx, double t = 1.0);

// ---------------------------------------------------------------- Duhamel iterations

struct DuhamelReport {
  int j = 0;
  double t = 0.0;
  double scale = 0.0;  // 2^{-j theta'}
  std::vector<double> truncation;      // k = 1, 2: ||v_E - v^f_Ek - G^out_Ek|| / ||v_E||
  std::vector<double> reconstruction;  // same with the simplex term, v from the direct solve
  double contraction = 0.0;            // truncation[1] / truncation[0]
  double predicted = 0.0;              // 2^{-j theta'} t max(||G_E||, ||G_H||)
  int nodes = 8;
};
// k <= 3; simplex D_k(t) by a mapped tensor Gauss rule with `nodes` points per axis
DuhamelReport duhamel_iterate(const RemainderOps& ops, double t, int kmax = 2, int nodes = 8);

// ---------------------------------------------------------------- endgames

struct EllipticEndgameOpts {
  std::string preset = "cr-elliptic";
  double s = 2.5, sigma = 3.35, theta = 0.0;
  int k = 2;
  double delta = 0.1, rx = 0.25;
  double eps_a = 0.01;
  int max_halvings = 6;
  int nt = 8;
  DatumRecipe datum;  // sigma is taken from above
  bool control = false;  // no spectral split: flows of the full localized system
  bool scale_rx = true;  // halve rx together with delta
  std::map<int, double> t_final;  // required for the control
};

struct EndgameRow {
  int j = 0;
  double delta = 0.0;
  int halvings = 0;
  double rate_hi = 0.0, rate_lo = 0.0;  // gamma_E, gamma_E^- or zeta+, zeta-
  double t_star = 0.0, t_obs = 0.0;
  bool delta_ok = true, tstar_ok = true;
  double lhs = 0.0, a_j = 0.0;
  double B = 0.0, F = 0.0;  // ||op(psi~) S(t;0)||, ||S(0;t)|| at t_obs
  double term_s = 0.0, term_theta = 0.0, term_out = 0.0, term_k = 0.0;
  double rhs = 0.0, margin = 0.0;
  double zeta_fit = 0.0, zeta_class = 0.0;  // transition
  bool fit_ok = true;
  // real branches: max of ln ||S(0;t) op(psi_flat)|| and ln ||op(psi~) S(t;0) op(psi_flat)||
  double drift = 0.0;
  double drift_band = 0.0;  // same without cutoffs, |ln| of both directions on the whole band
  std::vector<double> times, log_B, log_F, log_w;
  double seconds = 0.0;
};

struct EndgameReport {
  std::string kind;  // "elliptic", "transition"
  std::string preset;
  bool control = false;
  double s = 0.0, sigma = 0.0, theta = 0.0, theta_p = 0.0, theta_star = 0.0;
  std::vector<EndgameRow> rows;
  bool increasing = false, above_one = false;
  bool flat = false;  // controls: no margin exceeds 3 times the first
  bool fit_ok = true, real_flat = true;
  bool pass = false;
  std::vector<std::string> notes;
};

EndgameReport endgame_elliptic(const EllipticEndgameOpts& o, const std::vector<int>& js);

struct TransitionEndgameOpts {
  std::string preset = "burgers-transition";
  double s = 3.5, sigma = 3.5, theta = 0.0;
  int k = 2;
  double delta = 0.05, rx = 1.0;
  double eps_a = 0.01;
  double obs_fraction = 0.7;
  int nt = 12;
  double h_max = 0.05;
  DatumRecipe datum;
  bool control = false;  // real branches: drift and margin without growth
  std::map<int, double> t_obs;  // required for the control
  double drift_tol = 0.1;
};

EndgameReport endgame_transition(const TransitionEndgameOpts& o, const std::vector<int>& js);

}  // namespace mlab
