#pragma once

#include <functional>
#include <string>

#include "mlab/core.hpp"

namespace mlab {

// v[k] = d_{x_k} u, only k < d is read
using Grad = std::array<CVec, 2>;

// du/dt + F(t, x, u, d_x u) = 0
struct SystemSpec {
  std::string name;
  int d = 1;
  int N = 1;
  std::function<CVec(double t, const Vec& x, const CVec& u, const Grad& v)> F;
  // optional partials, centered differences when empty
  std::function<CVec(double, const Vec&, const CVec&, const Grad&)> d1F;
  std::function<Mat(double, const Vec&, const CVec&, const Grad&)> d3F;
  std::function<Mat(double, const Vec&, const CVec&, const Grad&, int k)> d4F;

  Vec x0{0, 0};
  Vec xi0{1, 0};
  CVec u0;
  Grad v0;

  void validate() const;
  Grad zero_grad() const;
};

CVec dF_dt(const SystemSpec& s, double t, const Vec& x, const CVec& u, const Grad& v);
Mat dF_du(const SystemSpec& s, double t, const Vec& x, const CVec& u, const Grad& v);
Mat dF_dv(const SystemSpec& s, double t, const Vec& x, const CVec& u, const Grad& v, int k);

}  // namespace mlab
