#include "mlab/field.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace mlab {

void Grid::validate() const {
  if (d != 1 && d != 2) throw Error("grid: d must be 1 or 2");
  if (!is_pow2(n) || n < 2) throw Error("grid: n must be a power of two");
  if (!(L > 0)) throw Error("grid: L must be positive");
}

Vec Grid::point(std::size_t p) const {
  auto m = multi(p);
  double h = step();
  return {origin[0] + h * double(m[0]), d == 2 ? origin[1] + h * double(m[1]) : 0.0};
}

Vec Grid::rel_freq(std::size_t k) const {
  auto m = multi(k);
  double w = 2 * kPi / L;
  return {w * double(signed_index(m[0])), d == 2 ? w * double(signed_index(m[1])) : 0.0};
}

Vec Grid::carrier_freq() const {
  double w = 2 * kPi / L;
  return {w * double(carrier[0]), d == 2 ? w * double(carrier[1]) : 0.0};
}

Vec Grid::freq(std::size_t k) const { return added(rel_freq(k), carrier_freq()); }

bool Grid::same_as(const Grid& o) const {
  return d == o.d && n == o.n && L == o.L && origin == o.origin && carrier == o.carrier;
}

namespace {

struct PlanCache {
  std::mutex mu;
  std::map<std::tuple<int, long, int>, fftw_plan> plans;

  fftw_plan get(int d, long n, int sign) {
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(d, n, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    std::size_t total = d == 1 ? n : n * n;
    std::vector<cd> a(total), b(total);
    int dims[2] = {int(n), int(n)};
    fftw_plan p = fftw_plan_dft(d, dims, reinterpret_cast<fftw_complex*>(a.data()),
                                reinterpret_cast<fftw_complex*>(b.data()), sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans[key] = p;
    return p;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

void run(const Grid& g, const cd* in, cd* out, int sign) {
  fftw_plan p = cache().get(g.d, g.n, sign);
  std::size_t total = g.size();
  if (in == out) {
    std::vector<cd> tmp(in, in + total);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(out));
  } else {
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cd*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }
}

}  // namespace

void fft_forward(const Grid& g, const cd* in, cd* out) {
  run(g, in, out, FFTW_FORWARD);
  double s = 1.0 / double(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] *= s;
}

void fft_inverse(const Grid& g, const cd* in, cd* out) { run(g, in, out, FFTW_BACKWARD); }

SampledField::SampledField(const Grid& g, int N) : grid_(g), N_(N) {
  g.validate();
  if (N < 1 || N > kMaxN) throw Error("field: N out of range");
  values_.assign(std::size_t(N) * g.size(), cd(0));
}

SampledField SampledField::from_coeffs(const Grid& g, int N, std::vector<cd> coeffs) {
  SampledField f(g, N);
  if (coeffs.size() != f.values_.size()) throw Error("field: coefficient size mismatch");
  std::size_t np = g.size();
  for (int c = 0; c < N; ++c) fft_inverse(g, coeffs.data() + c * np, f.values_.data() + c * np);
  f.spec_ = std::make_shared<std::vector<cd>>(std::move(coeffs));
  return f;
}

SampledField SampledField::from_function(const Grid& g, int N,
                                         const std::function<CVec(const Vec&)>& fn) {
  SampledField f(g, N);
  std::size_t np = g.size();
  Vec xc = g.carrier_freq();
  for (std::size_t p = 0; p < np; ++p) {
    Vec x = g.point(p);
    CVec v = fn(x);
    cd ph = std::exp(-kI * dot(diffv(x, g.origin), xc, g.d));
    for (int c = 0; c < N; ++c) f.values_[c * np + p] = v(c) * ph;
  }
  return f;
}

SampledField SampledField::scalar(const Grid& g, const std::function<cd(const Vec&)>& fn) {
  return from_function(g, 1, [&](const Vec& x) {
    CVec v(1);
    v(0) = fn(x);
    return v;
  });
}

CVec SampledField::physical(std::size_t p) const {
  Vec x = grid_.point(p);
  cd ph = std::exp(kI * dot(diffv(x, grid_.origin), grid_.carrier_freq(), grid_.d));
  CVec v(N_);
  for (int c = 0; c < N_; ++c) v(c) = values_[c * npts() + p] * ph;
  return v;
}

const std::vector<cd>& SampledField::coeffs() const {
  if (!spec_) {
    auto s = std::make_shared<std::vector<cd>>(values_.size());
    std::size_t np = npts();
    for (int c = 0; c < N_; ++c) fft_forward(grid_, values_.data() + c * np, s->data() + c * np);
    spec_ = s;
  }
  return *spec_;
}

SampledField SampledField::component(int c) const {
  SampledField out(grid_, 1);
  std::copy(values_.begin() + c * npts(), values_.begin() + (c + 1) * npts(), out.values_.begin());
  return out;
}

void SampledField::set_component(int c, const SampledField& s) {
  if (!s.grid_.same_as(grid_)) throw Error("field: grid mismatch");
  std::copy(s.values_.begin(), s.values_.begin() + npts(), values_.begin() + c * npts());
  spec_.reset();
}

SampledField& SampledField::operator+=(const SampledField& o) {
  if (!o.grid_.same_as(grid_) || o.N_ != N_) throw Error("field: shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  spec_.reset();
  return *this;
}

SampledField& SampledField::operator-=(const SampledField& o) {
  if (!o.grid_.same_as(grid_) || o.N_ != N_) throw Error("field: shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  spec_.reset();
  return *this;
}

SampledField& SampledField::operator*=(cd a) {
  for (auto& v : values_) v *= a;
  spec_.reset();
  return *this;
}

SampledField operator+(SampledField a, const SampledField& b) { return a += b; }
SampledField operator-(SampledField a, const SampledField& b) { return a -= b; }
SampledField operator*(cd a, SampledField b) { return b *= a; }

SampledField fourier_roundtrip(const SampledField& f) {
  return SampledField::from_coeffs(f.grid(), f.N(), f.coeffs());
}

double l2_norm(const SampledField& f) {
  double s = 0;
  for (auto& v : f.values()) s += std::norm(v);
  return std::sqrt(s * f.grid().cell());
}

double sup_norm(const SampledField& f) {
  double m = 0;
  for (std::size_t p = 0; p < f.npts(); ++p) {
    double s = 0;
    for (int c = 0; c < f.N(); ++c) s += std::norm(f.value(c, p));
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

double sobolev_norm_real(const SampledField& f, double s, double j) {
  const Grid& g = f.grid();
  const auto& co = f.coeffs();
  double scale = std::pow(2.0, -j), acc = 0;
  std::size_t np = g.size();
  for (std::size_t k = 0; k < np; ++k) {
    double w = std::pow(jbracket(scaled(g.freq(k), scale), g.d), 2 * s);
    for (int c = 0; c < f.N(); ++c) acc += w * std::norm(co[c * np + k]);
  }
  return std::sqrt(acc * g.volume());
}

double sobolev_norm(const SampledField& f, double s, int j) { return sobolev_norm_real(f, s, j); }

cd inner(const SampledField& a, const SampledField& b) {
  if (!a.grid().same_as(b.grid()) || a.N() != b.N()) throw Error("inner: shape mismatch");
  cd s = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) s += a.values()[i] * std::conj(b.values()[i]);
  return s * a.grid().cell();
}

SampledField fourier_multiplier(const SampledField& f, const std::function<cd(const Vec&)>& m) {
  const Grid& g = f.grid();
  std::vector<cd> co = f.coeffs();
  std::size_t np = g.size();
  for (std::size_t k = 0; k < np; ++k) {
    cd w = m(g.freq(k));
    for (int c = 0; c < f.N(); ++c) co[c * np + k] *= w;
  }
  return SampledField::from_coeffs(g, f.N(), std::move(co));
}

SampledField matrix_multiplier(const SampledField& f, const std::function<Mat(const Vec&)>& m) {
  const Grid& g = f.grid();
  const auto& co = f.coeffs();
  std::size_t np = g.size();
  Mat probe = m(g.freq(0));
  int No = int(probe.rows());
  std::vector<cd> out(std::size_t(No) * np, cd(0));
  for (std::size_t k = 0; k < np; ++k) {
    Mat a = m(g.freq(k));
    for (int r = 0; r < No; ++r) {
      cd s = 0;
      for (int c = 0; c < f.N(); ++c) s += a(r, c) * co[c * np + k];
      out[r * np + k] = s;
    }
  }
  return SampledField::from_coeffs(g, No, std::move(out));
}

SampledField pointwise(const SampledField& f, const std::function<Mat(const Vec&)>& a) {
  const Grid& g = f.grid();
  std::size_t np = g.size();
  Mat probe = a(g.point(0));
  int No = int(probe.rows());
  SampledField out(g, No);
  auto& ov = out.values_mut();
  for (std::size_t p = 0; p < np; ++p) {
    Mat m = p == 0 ? probe : a(g.point(p));
    for (int r = 0; r < No; ++r) {
      cd s = 0;
      for (int c = 0; c < f.N(); ++c) s += m(r, c) * f.value(c, p);
      ov[r * np + p] = s;
    }
  }
  return out;
}

SampledField gradient(const SampledField& f, int axis) {
  return fourier_multiplier(f, [axis](const Vec& xi) { return kI * xi[axis]; });
}

CVec interpolate(const SampledField& f, const Vec& x) {
  const Grid& g = f.grid();
  const auto& co = f.coeffs();
  std::size_t np = g.size();
  CVec v = CVec::Zero(f.N());
  Vec y = diffv(x, g.origin);
  for (std::size_t k = 0; k < np; ++k) {
    cd e = std::exp(kI * dot(y, g.freq(k), g.d));
    for (int c = 0; c < f.N(); ++c) v(c) += co[c * np + k] * e;
  }
  return v;
}

SampledField resample(const SampledField& src, const Grid& dst, double tol) {
  const Grid& g = src.grid();
  const auto& co = src.coeffs();
  std::size_t np = g.size();
  double mx = 0;
  for (auto& c : co) mx = std::max(mx, std::abs(c));
  std::vector<std::size_t> act;
  for (std::size_t k = 0; k < np; ++k) {
    double m = 0;
    for (int c = 0; c < src.N(); ++c) m = std::max(m, std::abs(co[c * np + k]));
    if (m > tol * mx && m > 0) act.push_back(k);
  }
  SampledField out(dst, src.N());
  auto& ov = out.values_mut();
  std::size_t nd = dst.size();
  Vec dc = dst.carrier_freq();
  for (std::size_t p = 0; p < nd; ++p) {
    Vec x = dst.point(p);
    Vec y = diffv(x, g.origin);
    Vec yd = diffv(x, dst.origin);
    cd demod = std::exp(-kI * dot(yd, dc, dst.d));
    for (std::size_t k : act) {
      cd e = std::exp(kI * dot(y, g.freq(k), g.d)) * demod;
      for (int c = 0; c < src.N(); ++c) ov[c * nd + p] += co[c * np + k] * e;
    }
  }
  return out;
}

FieldSampler::FieldSampler(SampledField f) : f_(std::move(f)) {
  const auto& co = f_.coeffs();
  std::size_t np = f_.npts();
  for (std::size_t k = 0; k < np; ++k) {
    bool nz = false;
    for (int c = 0; c < f_.N(); ++c) nz = nz || co[c * np + k] != cd(0);
    if (nz) active_.push_back(k);
  }
}

CVec FieldSampler::operator()(const Vec& x) const {
  const Grid& g = f_.grid();
  double h = g.step();
  std::array<long, 2> idx{0, 0};
  bool node = true;
  for (int a = 0; a < g.d; ++a) {
    double t = (x[a] - g.origin[a]) / h;
    double r = std::round(t);
    if (std::abs(t - r) > 1e-9) node = false;
    idx[a] = long(r);
  }
  if (node) return f_.physical(g.flat(idx[0], idx[1]));
  const auto& co = f_.coeffs();
  std::size_t np = g.size();
  CVec v = CVec::Zero(f_.N());
  Vec y = diffv(x, g.origin);
  for (std::size_t k : active_) {
    cd e = std::exp(kI * dot(y, g.freq(k), g.d));
    for (int c = 0; c < f_.N(); ++c) v(c) += co[c * np + k] * e;
  }
  return v;
}

}  // namespace mlab
