#pragma once

#include "mlab/fit.hpp"
#include "mlab/quantize.hpp"
#include "mlab/system.hpp"

namespace mlab {

// sum over |alpha| = k of (-i)^k / alpha! d_xi^alpha a1 d_x^alpha a2
SymbolSpec expansion_symbol(const SymbolSpec& a1, const SymbolSpec& a2, int k, double hx = 1e-2,
                            double hxi = 1e-2);

struct CompositionReport {
  int r = 1;
  int j = 0;
  SampledField lhs;                 // op_j(a1) op_j(a2) f
  std::vector<SampledField> terms;  // order k term, 2^{-jk} included
  SampledField remainder;           // 2^{-jr} R_r f
  double remainder_norm = 0.0;      // ||remainder|| / ||f||
  double identity_residual = 0.0;
};

CompositionReport compose_expand(const SymbolSpec& a1, const SymbolSpec& a2, int r, int j,
                                 const SampledField& f, Quant kind = Quant::pdo,
                                 const DyadicFamily& fam = DyadicFamily{});

struct SweepReport {
  std::vector<int> js;
  std::vector<double> norms;
  LineFit fit;
};

using ChiFn = std::function<cd(const Vec&)>;

struct CommutatorReport {
  SampledField commutator;          // [chi(2^{-j}D), f] g
  std::vector<SampledField> terms;  // |alpha| = 1..order
  SampledField remainder;
  double remainder_norm = 0.0;  // ||remainder|| / ||g||
  double identity_residual = 0.0;
  double holder_factor = 0.0;  // of f at exponent theta, order + 1/2 when unset
};

CommutatorReport multiplier_commutator(const ChiFn& chi, const SampledField& f, int j,
                                       const SampledField& g, int order, double theta = -1.0,
                                       double hxi = 1e-2);
// operator norm of g -> remainder by power iteration on R*R
double commutator_remainder_norm(const ChiFn& chi, const SampledField& f, int j, int order,
                                 int iters = 40, unsigned seed = 11, double hxi = 1e-2);
// sup of |d^k f(x) - d^k f(y)| / |x-y|^{theta-k}, k = floor(theta), over dyadic shifts
double holder_factor(const SampledField& f, double theta);

struct GardingReport {
  double min_quotient = 0.0;  // smallest eigenvalue of the symmetrized operator
  double probe_min = 0.0;     // smallest Rayleigh quotient over supplied probes
  double defect = 0.0;        // max(0, -min_quotient)
  double theta_star = 0.0;
  double implied_C = 0.0;  // defect 2^{j theta_star}
  double symbol_min = 0.0;  // min eigenvalue of Re Q over samples
  bool precondition_ok = true;
};

double theta_star(double theta, int d);

GardingReport garding_check(const SymbolSpec& Q, int j, const Grid& g, double theta,
                            Quant kind = Quant::para, const DyadicFamily& fam = DyadicFamily{},
                            const std::vector<SampledField>& probes = {});

// T_a b = sum_k phi0(2^{N0-k} D) a . phi_k(<D>) b, a an N x N array of scalar fields
SampledField paraproduct(const std::vector<SampledField>& a, const SampledField& b,
                         const DyadicFamily& fam = DyadicFamily{});

struct ParalinReport {
  SampledField residual;
  double residual_norm = 0.0;  // H^{2(s-1)-d/2}
  double input_norm = 0.0;     // ||(u, v)||_{H^{s-1}}
  double input_sup = 0.0;      // ||(u, v)||_inf
};

// F(u, 2^j du) - T_{d3F} u - T_{d4F} 2^j du on the rescaled grid, t = 0
ParalinReport paralinearize_residual(const SystemSpec& sys, const SampledField& u, int j,
                                     double s, const DyadicFamily& fam = DyadicFamily{});

}  // namespace mlab
