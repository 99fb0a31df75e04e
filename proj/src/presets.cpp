#include "mlab/presets.hpp"

#include <map>
#include <mutex>

namespace mlab {

namespace {

CVec vec(std::initializer_list<cd> v) {
  CVec r(int(v.size()));
  int i = 0;
  for (auto x : v) r[i++] = x;
  return r;
}

// holomorphic kappa(u) = 1 + (u.u)/4, no conjugation
cd kappa(const CVec& u) { return 1.0 + (u.array() * u.array()).sum() / 4.0; }

Mat rot() {
  Mat J(2, 2);
  J << 0, -1, 1, 0;
  return J;
}

// d=1, N=2: F = kappa(u) J v, spectrum of A = +-i kappa xi
SystemSpec cr_elliptic() {
  SystemSpec s;
  s.name = "cr-elliptic";
  s.d = 1;
  s.N = 2;
  s.F = [](double, const Vec&, const CVec& u, const Grad& v) -> CVec { return kappa(u) * (rot() * v[0]); };
  s.d3F = [](double, const Vec&, const CVec& u, const Grad& v) -> Mat {
    return (rot() * v[0]) * (u.transpose() / 2.0);
  };
  s.d4F = [](double, const Vec&, const CVec& u, const Grad&, int) -> Mat { return kappa(u) * rot(); };
  s.x0 = {0, 0};
  s.xi0 = {1, 0};
  s.u0 = vec({1.0, 0.0});
  s.v0 = {vec({0.0, 0.0}), CVec()};
  return s;
}

// d=2, N=3, A(u, xi) = [[0, u3 xi1, 0], [-u3 xi1, 0, 0], [0, 0, u1 xi2]]
SystemSpec three_by_three() {
  SystemSpec s;
  s.name = "paper-3x3-elliptic";
  s.d = 2;
  s.N = 3;
  s.F = [](double, const Vec&, const CVec& u, const Grad& v) -> CVec {
    return vec({u[2] * v[0][1], -u[2] * v[0][0], u[0] * v[1][2]});
  };
  s.d3F = [](double, const Vec&, const CVec&, const Grad& v) -> Mat {
    Mat m = Mat::Zero(3, 3);
    m(0, 2) = v[0][1];
    m(1, 2) = -v[0][0];
    m(2, 0) = v[1][2];
    return m;
  };
  s.d4F = [](double, const Vec&, const CVec& u, const Grad&, int k) -> Mat {
    Mat m = Mat::Zero(3, 3);
    if (k == 0) {
      m(0, 1) = u[2];
      m(1, 0) = -u[2];
    } else {
      m(2, 2) = u[0];
    }
    return m;
  };
  s.x0 = {0, 0};
  s.xi0 = {1, 0};
  s.u0 = vec({0.0, 0.0, 1.0});
  s.v0 = {vec({0.0, 0.0, 0.0}), vec({0.0, 0.0, 0.0})};
  return s;
}

// d=2, N=2: A = kappa(u) [[c xi2, xi1], [-xi1, -c xi2]], elliptic for |xi1| > c |xi2|
SystemSpec rotating_elliptic() {
  const double c = 0.5;
  auto B = [c](int k) {
    Mat m(2, 2);
    if (k == 0) m << 0, 1, -1, 0;
    else m << c, 0, 0, -c;
    return m;
  };
  SystemSpec s;
  s.name = "rotating-elliptic";
  s.d = 2;
  s.N = 2;
  s.F = [B](double, const Vec&, const CVec& u, const Grad& v) -> CVec {
    return kappa(u) * (B(0) * v[0] + B(1) * v[1]);
  };
  s.d3F = [B](double, const Vec&, const CVec& u, const Grad& v) -> Mat {
    return (B(0) * v[0] + B(1) * v[1]) * (u.transpose() / 2.0);
  };
  s.d4F = [B](double, const Vec&, const CVec& u, const Grad&, int k) -> Mat { return kappa(u) * B(k); };
  s.x0 = {0, 0};
  s.xi0 = {1, 0};
  s.u0 = vec({1.0, 0.0});
  s.v0 = {vec({0.0, 0.0}), vec({0.0, 0.0})};
  return s;
}

// d=1, N=2: F = [[u1, u2], [-u2, u1]] v + (0, -beta); real double eigenvalue u1 while u2 = 0,
// and d_t u2 = beta pushes the pair u1 +- i u2 off the axis
SystemSpec burgers_transition() {
  const double beta = 1.0;
  SystemSpec s;
  s.name = "burgers-transition";
  s.d = 1;
  s.N = 2;
  auto A = [](const CVec& u) {
    Mat m(2, 2);
    m << u[0], u[1], -u[1], u[0];
    return m;
  };
  s.F = [A, beta](double, const Vec&, const CVec& u, const Grad& v) -> CVec {
    CVec r = A(u) * v[0];
    r[1] -= beta;
    return r;
  };
  s.d3F = [](double, const Vec&, const CVec&, const Grad& v) -> Mat {
    Mat m(2, 2);
    m << v[0][0], v[0][1], v[0][1], -v[0][0];
    return m;
  };
  s.d4F = [A](double, const Vec&, const CVec& u, const Grad&, int) -> Mat { return A(u); };
  s.x0 = {0, 0};
  s.xi0 = {1, 0};
  s.u0 = vec({1.0, 0.0});
  s.v0 = {vec({0.0, 0.0}), CVec()};
  return s;
}

// d=1, N=2 symmetric, strictly hyperbolic
SystemSpec symmetric_hyperbolic() {
  SystemSpec s;
  s.name = "symmetric-hyperbolic";
  s.d = 1;
  s.N = 2;
  auto S = [](const CVec& u) {
    Mat m(2, 2);
    m << 1.0 + u[0] * u[0] / 4.0, 0.3, 0.3, -1.0;
    return m;
  };
  s.F = [S](double, const Vec&, const CVec& u, const Grad& v) -> CVec { return S(u) * v[0]; };
  s.d3F = [](double, const Vec&, const CVec& u, const Grad& v) -> Mat {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = u[0] / 2.0 * v[0][0];
    return m;
  };
  s.d4F = [S](double, const Vec&, const CVec& u, const Grad&, int) -> Mat { return S(u); };
  s.x0 = {0, 0};
  s.xi0 = {1, 0};
  s.u0 = vec({1.0, 0.0});
  s.v0 = {vec({0.0, 0.0}), CVec()};
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"cr-elliptic", "paper-3x3-elliptic", "rotating-elliptic", "burgers-transition",
          "symmetric-hyperbolic"};
}

namespace {
std::mutex registry_mu;
std::map<std::string, SystemSpec>& registry() {
  static std::map<std::string, SystemSpec> r;
  return r;
}
}  // namespace

void register_system(const SystemSpec& s) {
  s.validate();
  std::lock_guard<std::mutex> lk(registry_mu);
  registry()[s.name] = s;
}

SystemSpec make_preset(const std::string& name) {
  {
    std::lock_guard<std::mutex> lk(registry_mu);
    auto it = registry().find(name);
    if (it != registry().end()) return it->second;
  }
  SystemSpec s;
  if (name == "cr-elliptic") s = cr_elliptic();
  else if (name == "paper-3x3-elliptic") s = three_by_three();
  else if (name == "rotating-elliptic") s = rotating_elliptic();
  else if (name == "burgers-transition") s = burgers_transition();
  else if (name == "symmetric-hyperbolic") s = symmetric_hyperbolic();
  else throw Error("unknown preset '" + name + "'");
  s.validate();
  return s;
}

}  // namespace mlab
