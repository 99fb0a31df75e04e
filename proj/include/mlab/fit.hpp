#pragma once

#include <vector>

namespace mlab {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// least squares y = slope x + intercept
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
// slope of log2(v) against j
LineFit fit_log2(const std::vector<int>& js, const std::vector<double>& v);
// y = c t^2, returns c (no intercept)
double fit_quadratic_coeff(const std::vector<double>& t, const std::vector<double>& y);

}  // namespace mlab
