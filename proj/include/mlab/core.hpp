#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlab {

using cd = std::complex<double>;
using Vec = std::array<double, 2>;
// small dense matrices, N <= 8, no heap traffic
using Mat = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, 0, 8, 8>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

constexpr double kPi = 3.14159265358979323846;
constexpr cd kI{0.0, 1.0};
constexpr int kMaxN = 8;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double norm2(const Vec& v, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

// <xi> = (1 + |xi|^2)^{1/2}
inline double jbracket(const Vec& xi, int d) {
  double s = 1.0;
  for (int i = 0; i < d; ++i) s += xi[i] * xi[i];
  return std::sqrt(s);
}

inline Vec scaled(const Vec& v, double c) { return {v[0] * c, v[1] * c}; }
inline Vec added(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec diffv(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline double dot(const Vec& a, const Vec& b, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

inline bool is_pow2(long n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace mlab
