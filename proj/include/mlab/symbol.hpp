#pragma once

#include <limits>
#include <optional>

#include "mlab/field.hpp"

namespace mlab {

using SymbolFn = std::function<Mat(const Vec& x, const Vec& xi)>;
using SigmaFn = std::function<Mat(const CVec& u, const Vec& xi)>;

// b(x) c(xi), b scalar
struct SepTerm {
  std::function<cd(const Vec&)> b;
  std::function<Mat(const Vec&)> c;
};

struct SymbolSupport {
  Vec x0{0, 0};
  Vec xi0{0, 0};
  double R = 1.0;  // vanishes outside |x - x0| + |xi - xi0| <= R
};

struct Composed {
  SigmaFn sigma;
  std::shared_ptr<const FieldSampler> carrier;
  double s = 0.0;  // declared Sobolev index of the carrier
};

struct SymbolSpec {
  std::string name;
  int d = 1;
  int N = 1;
  double order = 0.0;
  int k = 64;          // x-regularity C^{k,theta}
  double theta = 0.0;
  SymbolFn eval;
  bool x_independent = false;
  std::vector<SepTerm> terms;  // optional separable form, agrees with eval
  std::shared_ptr<const Composed> composed;
  std::optional<SymbolSupport> support;

  Mat operator()(const Vec& x, const Vec& xi) const { return eval(x, xi); }
};

SymbolSpec identity_symbol(int d, int N);
SymbolSpec multiplier_symbol(int d, int N, std::function<Mat(const Vec&)> m, double order = 0.0);
SymbolSpec scalar_multiplier(int d, std::function<cd(const Vec&)> m, double order = 0.0);
SymbolSpec function_symbol(int d, int N, std::function<Mat(const Vec&)> a, int k = 64,
                           double theta = 0.0);
SymbolSpec separable_symbol(int d, int N, std::vector<SepTerm> terms, double order = 0.0);
// sigma(u(x), xi) over a carrier field
SymbolSpec composed_symbol(int d, int N, SigmaFn sigma, const SampledField& carrier, double s,
                           double order = 0.0);
// g(u(x)) m(xi), separable composed form
SymbolSpec composed_separable(int d, int N, std::function<cd(const CVec&)> g,
                              std::function<Mat(const Vec&)> m, const SampledField& carrier,
                              double s, double order = 0.0);
// "multiplier:<expr>" in variables xi, xi1, xi2, r = |xi|, br = <xi>
SymbolSpec parse_multiplier(const std::string& expr, int d);
SymbolSpec sum_symbols(const SymbolSpec& a, const SymbolSpec& b, cd ca = 1, cd cb = 1);
SymbolSpec product_symbols(const SymbolSpec& a, const SymbolSpec& b);

struct SymbolSampling {
  std::vector<Vec> xs;
  std::vector<Vec> xis;
  double hx = 1e-3;
  double hxi_rel = 1e-3;
};
SymbolSampling default_sampling(const Grid& g, int nx = 16, int max_octave = 10);

// d^alpha_x d^beta_xi a at (x, xi) by centered differences
Mat symbol_derivative(const SymbolSpec& a, const Vec& x, const Vec& xi, std::array<int, 2> alpha,
                      std::array<int, 2> beta, double hx, double hxi);

// sup over samples of <xi>^{|beta|-m} |d^alpha_x d^beta_xi a|, |alpha| <= k1, |beta| <= k2
double symbol_norm(const SymbolSpec& a, double m, int k1, int k2, const SymbolSampling& smp);
// Hoelder seminorm of the k1-th x-derivatives with exponent theta
double symbol_holder_seminorm(const SymbolSpec& a, double m, int k1, int k2, double theta,
                              const SymbolSampling& smp);

// Tensor product of the normalized 1D exp(-1/(1-y^2)) bump on (-1,1).
struct Mollifier {
  static double profile(double y);
  static double mass();
  double kernel(const Vec& y, int d, double eps) const;
  double hat1(double w) const;
  double hat(const Vec& w, int d) const { return hat1(w[0]) * (d == 2 ? hat1(w[1]) : 1.0); }
  static std::string tag() { return "tensor exp(-1/(1-y^2)) bump, unit mass"; }
};

enum class MollifyMode { direct, carrier };

struct MollifiedSymbol {
  SymbolSpec sym;
  double eps = 0.0;
  std::string kernel;
};

MollifiedSymbol mollify(const SymbolSpec& a, double eps, MollifyMode mode,
                        double box = std::numeric_limits<double>::infinity());
// k_eps * f for a grid field, exact for trigonometric polynomials
SampledField mollify_field(const SampledField& f, double eps);

double mollifier_epsilon(int j, double theta);

using NonlinearMap = std::function<CVec(const CVec& u, const Vec& xi)>;
struct SobolevCheck {
  double lhs = 0, rhs = 0, envelope = 0;
};
SobolevCheck nonlinear_sobolev_check(const NonlinearMap& sigma, const SampledField& u, double s,
                                     const Vec& xi, double m = 0.0, unsigned seed = 7);

}  // namespace mlab
