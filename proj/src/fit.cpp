#include "mlab/fit.hpp"

#include <cmath>

#include "mlab/core.hpp"

namespace mlab {

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fit_line: need two or more points");
  double n = double(x.size()), sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  double mx = sx / n, my = sy / n, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

LineFit fit_log2(const std::vector<int>& js, const std::vector<double>& v) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < js.size(); ++i) {
    x.push_back(js[i]);
    y.push_back(std::log2(std::max(v[i], 1e-300)));
  }
  return fit_line(x, y);
}

double fit_quadratic_coeff(const std::vector<double>& t, const std::vector<double>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double t2 = t[i] * t[i];
    num += t2 * y[i];
    den += t2 * t2;
  }
  if (den == 0) throw Error("fit_quadratic_coeff: all times zero");
  return num / den;
}

}  // namespace mlab
