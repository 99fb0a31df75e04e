#pragma once

#include "mlab/dyadic.hpp"
#include "mlab/symbol.hpp"

namespace mlab {

enum class Quant { pdo, para };

struct QuantOpts {
  int j = 0;
  Quant kind = Quant::para;
  DyadicFamily fam;
  double column_tol = 0.0;  // skip input columns below tol * max coefficient
  bool fast_paths = true;
};

// multiplier applied to the x-spectrum of each symbol column:
// filt(2^{-j}|eta|, <zeta>) with zeta = 2^{-j} xi the column frequency
using ColumnFilter = std::function<double(double eta, double br)>;

SampledField apply_pdo(const SymbolSpec& a, int j, const SampledField& f);
SampledField apply_para(const SymbolSpec& a, int j, const SampledField& f,
                        const DyadicFamily& fam = DyadicFamily{});
SampledField apply_op(const SymbolSpec& a, const SampledField& f, const QuantOpts& o);
// pdo_j of the filtered symbol, general column path
SampledField apply_filtered(const SymbolSpec& a, int j, const SampledField& f,
                            const ColumnFilter& filt, double column_tol = 0.0);

// Dense (N npts) x (N npts) matrix of the same operator.
CMat assemble_dense(const SymbolSpec& a, const Grid& g, const QuantOpts& o);
SampledField apply_dense(const CMat& M, const SampledField& f);
CVec to_vector(const SampledField& f);
SampledField from_vector(const Grid& g, int N, const CVec& v);

struct ParaPdoDifference {
  SampledField residual;  // (pdo_j - op_j) a applied to f
  SampledField part_R, part_2, part_LF;
  double identity_residual = 0.0;  // || residual - sum of parts ||
};
ParaPdoDifference para_pdo_difference(const SymbolSpec& a, int j, const SampledField& f,
                                      const DyadicFamily& fam = DyadicFamily{});

// column multipliers of the decomposition, each carrying the (1 - phi0~) factor
double filter_R(const DyadicFamily& fam, double eta, double br);
double filter_2(const DyadicFamily& fam, double eta, double br);
double filter_LF(const DyadicFamily& fam, double eta, double br);

// psi(x, xi) = psi1(x) psi2(xi), psi1 = 1 on |x - x0| <= rx/2, 0 beyond rx; psi2 likewise with rxi
struct TensorCutoff {
  int d = 1;
  Vec x0{0, 0};
  Vec xi0{1, 0};
  double rx = 0.2;
  double rxi = 0.2;
  double period = 0.0;  // box length for periodic distance in x, 0 = none

  double psi1(const Vec& x) const;
  double psi2(const Vec& xi) const;
  double operator()(const Vec& x, const Vec& xi) const { return psi1(x) * psi2(xi); }
  // same center, radii multiplied by f
  TensorCutoff widened(double f) const;
  SymbolSpec symbol(int N) const;
};

double periodic_distance(const Vec& x, const Vec& y, int d, double period);

SampledField localized_cutoff_op(const TensorCutoff& psi, int j, const SampledField& f,
                                 Quant kind = Quant::para, const DyadicFamily& fam = DyadicFamily{});

}  // namespace mlab
