#pragma once

#include <functional>
#include <memory>

#include "mlab/core.hpp"

namespace mlab {

// Periodic box [origin, origin+L)^d sampled at n points per axis.
// A nonzero carrier stores fields modulated: values hold u(x) e^{-i(x-origin).xi_c},
// with xi_c = (2pi/L) carrier, and the represented frequencies are (2pi/L)(carrier + m).
struct Grid {
  int d = 1;
  long n = 64;
  double L = 2 * kPi;
  Vec origin{0.0, 0.0};
  std::array<long, 2> carrier{0, 0};

  void validate() const;
  std::size_t size() const { return d == 1 ? std::size_t(n) : std::size_t(n * n); }
  double step() const { return L / double(n); }
  double cell() const { return std::pow(L / double(n), d); }
  double volume() const { return std::pow(L, d); }
  // signed index along one axis
  long signed_index(long k) const { return k < n / 2 ? k : k - n; }
  Vec point(std::size_t p) const;
  // relative frequency (2pi/L) m, ignoring the carrier
  Vec rel_freq(std::size_t k) const;
  // absolute frequency (2pi/L)(carrier + m)
  Vec freq(std::size_t k) const;
  Vec carrier_freq() const;
  std::array<long, 2> multi(std::size_t p) const {
    if (d == 1) return {long(p), 0};
    return {long(p) / n, long(p) % n};
  }
  std::size_t flat(long i0, long i1) const {
    i0 = ((i0 % n) + n) % n;
    if (d == 1) return std::size_t(i0);
    i1 = ((i1 % n) + n) % n;
    return std::size_t(i0 * n + i1);
  }
  bool same_as(const Grid& o) const;
};

// Normalized forward DFT: out_m = n^{-d} sum_p in_p e^{-2pi i p.m/n}
void fft_forward(const Grid& g, const cd* in, cd* out);
// Unnormalized inverse: out_p = sum_m in_m e^{2pi i p.m/n}
void fft_inverse(const Grid& g, const cd* in, cd* out);

// Vector-valued field, layout values[c * npts + p].
class SampledField {
 public:
  SampledField() = default;
  SampledField(const Grid& g, int N);

  static SampledField from_coeffs(const Grid& g, int N, std::vector<cd> coeffs);
  static SampledField from_function(const Grid& g, int N,
                                    const std::function<CVec(const Vec&)>& f);
  static SampledField scalar(const Grid& g, const std::function<cd(const Vec&)>& f);

  const Grid& grid() const { return grid_; }
  int N() const { return N_; }
  std::size_t npts() const { return grid_.size(); }

  const std::vector<cd>& values() const { return values_; }
  std::vector<cd>& values_mut() {
    spec_.reset();
    return values_;
  }
  cd value(int c, std::size_t p) const { return values_[c * npts() + p]; }
  // physical value at grid point p (undoes the carrier modulation)
  CVec physical(std::size_t p) const;

  // Fourier coefficients (cached), same layout as values.
  const std::vector<cd>& coeffs() const;
  cd coeff(int c, std::size_t k) const { return coeffs()[c * npts() + k]; }

  SampledField component(int c) const;
  void set_component(int c, const SampledField& s);

  SampledField& operator+=(const SampledField& o);
  SampledField& operator-=(const SampledField& o);
  SampledField& operator*=(cd a);

 private:
  Grid grid_;
  int N_ = 0;
  std::vector<cd> values_;
  mutable std::shared_ptr<std::vector<cd>> spec_;
};

SampledField operator+(SampledField a, const SampledField& b);
SampledField operator-(SampledField a, const SampledField& b);
SampledField operator*(cd a, SampledField b);

SampledField fourier_roundtrip(const SampledField& f);

double l2_norm(const SampledField& f);
double sup_norm(const SampledField& f);
// ||f||_{j,s} = L^{d/2} ( sum <2^{-j} xi>^{2s} |f_k|^2 )^{1/2}
double sobolev_norm(const SampledField& f, double s, int j = 0);
double sobolev_norm_real(const SampledField& f, double s, double j);
std::complex<double> inner(const SampledField& a, const SampledField& b);

// scalar Fourier multiplier m(xi) applied to each component
SampledField fourier_multiplier(const SampledField& f, const std::function<cd(const Vec&)>& m);
// matrix multiplier m(xi) acting on components
SampledField matrix_multiplier(const SampledField& f, const std::function<Mat(const Vec&)>& m);
// pointwise multiplication by a matrix-valued function of x
SampledField pointwise(const SampledField& f, const std::function<Mat(const Vec&)>& a);
SampledField gradient(const SampledField& f, int axis);

// Value of the trigonometric interpolant at an arbitrary point.
CVec interpolate(const SampledField& f, const Vec& x);

// Evaluate the trigonometric interpolant of src on the points of dst grid,
// keeping only source modes with |coeff| > tol * max|coeff|.
SampledField resample(const SampledField& src, const Grid& dst, double tol = 0.0);

// Evaluates the interpolant quickly on grid nodes, by direct sum elsewhere.
class FieldSampler {
 public:
  explicit FieldSampler(SampledField f);
  CVec operator()(const Vec& x) const;
  const SampledField& field() const { return f_; }

 private:
  SampledField f_;
  std::vector<std::size_t> active_;
};

}  // namespace mlab
