#include "mlab/cli_io.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "mlab/expr.hpp"
#include "mlab/parallel.hpp"
#include "mlab/presets.hpp"

namespace mlab {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

const std::pair<Pipeline, const char*> kPipelines[] = {
    {Pipeline::classify, "classify"}, {Pipeline::datum, "datum"},
    {Pipeline::calculus, "calculus"}, {Pipeline::rates, "rates"},
    {Pipeline::elliptic, "elliptic"}, {Pipeline::transition, "transition"}};

// ---------------------------------------------------------------- strict reading

void only_keys(const json& o, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!o.is_object()) throw Error(where + ": expected an object");
  for (const auto& [key, _] : o.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

std::string path_of(const std::string& where, const char* key) {
  return where.empty() ? key : where + "." + key;
}

void read(const json& o, const char* key, double& dst, const std::string& where) {
  if (!o.contains(key)) return;
  if (!o[key].is_number()) throw Error("config key '" + path_of(where, key) + "' must be a number");
  dst = o[key].get<double>();
}

void read(const json& o, const char* key, int& dst, const std::string& where) {
  if (!o.contains(key)) return;
  if (!o[key].is_number_integer())
    throw Error("config key '" + path_of(where, key) + "' must be an integer");
  dst = o[key].get<int>();
}

void read(const json& o, const char* key, long& dst, const std::string& where) {
  if (!o.contains(key)) return;
  if (!o[key].is_number_integer())
    throw Error("config key '" + path_of(where, key) + "' must be an integer");
  dst = o[key].get<long>();
}

void read(const json& o, const char* key, bool& dst, const std::string& where) {
  if (!o.contains(key)) return;
  if (!o[key].is_boolean()) throw Error("config key '" + path_of(where, key) + "' must be a boolean");
  dst = o[key].get<bool>();
}

void read(const json& o, const char* key, std::string& dst, const std::string& where) {
  if (!o.contains(key)) return;
  if (!o[key].is_string()) throw Error("config key '" + path_of(where, key) + "' must be a string");
  dst = o[key].get<std::string>();
}

cd complex_of(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw Error(where + ": expected a number or [re, im]");
}

json complex_to_json(cd z) {
  if (z.imag() == 0.0) return z.real();
  return json::array({z.real(), z.imag()});
}

Vec vec_of(const json& v, int d, const std::string& where) {
  if (!v.is_array() || int(v.size()) != d) throw Error(where + ": expected " + std::to_string(d) + " numbers");
  Vec r{0, 0};
  for (int i = 0; i < d; ++i) {
    if (!v[i].is_number()) throw Error(where + ": expected numbers");
    r[i] = v[i].get<double>();
  }
  return r;
}

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// ---------------------------------------------------------------- report pieces

json system_json(const SystemSpec& s) {
  json u0 = json::array();
  for (int i = 0; i < s.u0.size(); ++i) u0.push_back(complex_to_json(s.u0[i]));
  return {{"name", s.name}, {"d", s.d}, {"N", s.N},
          {"x0", std::vector<double>(s.x0.begin(), s.x0.begin() + s.d)},
          {"xi0", std::vector<double>(s.xi0.begin(), s.xi0.begin() + s.d)}, {"u0", u0}};
}

json spectrum_json(const std::vector<cd>& ev) {
  json a = json::array();
  for (cd z : ev) a.push_back(json::array({z.real(), z.imag()}));
  return a;
}

CsvTable datum_field(const SystemSpec& sys, const FullDatum& u) {
  CsvTable t;
  t.name = "datum";
  Grid g;
  g.d = sys.d;
  g.n = sys.d == 1 ? 512 : 64;
  g.L = 2 * kPi;
  g.origin = {sys.x0[0] - kPi, sys.d == 2 ? sys.x0[1] - kPi : 0.0};
  t.header = {"x"};
  if (sys.d == 2) t.header.push_back("y");
  for (int c = 0; c < sys.N; ++c) {
    t.header.push_back("re_u" + std::to_string(c + 1));
    t.header.push_back("im_u" + std::to_string(c + 1));
  }
  for (std::size_t p = 0; p < g.size(); ++p) {
    Vec x = g.point(p);
    CVec v = u.value(x);
    std::vector<double> row{x[0]};
    if (sys.d == 2) row.push_back(x[1]);
    for (int c = 0; c < sys.N; ++c) {
      row.push_back(v[c].real());
      row.push_back(v[c].imag());
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void endgame_tables(const EndgameReport& R, const std::string& tag, RunOutput& out) {
  CsvTable m;
  m.name = tag + "_margins";
  m.header = {"j", "delta", "halvings", "rate_hi", "rate_lo", "t_star", "t_obs", "lhs", "a_j", "B",
              "F", "term_s", "term_theta", "term_out", "term_k", "rhs", "margin", "zeta_fit",
              "zeta_class", "drift"};
  for (const auto& r : R.rows) {
    m.rows.push_back({double(r.j), r.delta, double(r.halvings), r.rate_hi, r.rate_lo, r.t_star,
                      r.t_obs, r.lhs, r.a_j, r.B, r.F, r.term_s, r.term_theta, r.term_out,
                      r.term_k, r.rhs, r.margin, r.zeta_fit, r.zeta_class, r.drift});
    CsvTable s;
    s.name = tag + "_j" + std::to_string(r.j);
    s.header = {"t", "log_B", "log_F", "log_w"};
    for (std::size_t i = 0; i < r.times.size(); ++i) {
      auto at = [&](const std::vector<double>& v) { return i < v.size() ? v[i] : std::nan(""); };
      s.rows.push_back({r.times[i], at(r.log_B), at(r.log_F), at(r.log_w)});
    }
    out.series.push_back(std::move(s));
  }
  out.series.push_back(std::move(m));
}

CsvTable checks_table(const std::vector<CriterionResult>& rs) {
  CsvTable t;
  t.name = "checks";
  t.header = {"criterion", "check", "value", "limit", "limit_hi", "pass"};
  for (const auto& r : rs)
    for (std::size_t i = 0; i < r.checks.size(); ++i) {
      const auto& c = r.checks[i];
      t.rows.push_back({double(r.id), double(i), c.value, c.limit,
                        c.rel == "within" ? c.limit_hi : std::nan(""), c.pass ? 1.0 : 0.0});
    }
  return t;
}

json criteria_json(const std::vector<CriterionResult>& rs, RunOutput& out) {
  json a = json::array();
  for (const auto& r : rs) {
    a.push_back(to_json(r));
    out.failed = out.failed || !r.checks_pass;
    out.timing["criterion_" + std::to_string(r.id)] = {
        {"seconds", r.seconds}, {"budget", r.budget}, {"within_budget", r.within_budget}};
  }
  out.series.push_back(checks_table(rs));
  return a;
}

// ---------------------------------------------------------------- pipelines

json run_classify(const RunConfig& c, const SystemSpec& sys) {
  SpectralPoint pt = base_point(sys);
  auto a1 = ellipticity_classify(sys, pt);
  Grid g;
  g.d = sys.d;
  g.n = c.classify.n;
  g.L = c.classify.L;
  const double amp = c.classify.amplitude;
  auto datum = SampledField::from_function(g, sys.N, [&](const Vec& x) {
    CVec u = sys.u0;
    u[0] += amp * std::sin(dot(x, sys.xi0, sys.d));
    return u;
  });
  TransitionRegion region;
  for (double x : {0.2, 0.6, 1.0, 1.4}) region.xs.push_back(sys.d == 1 ? Vec{x, 0} : Vec{x, 0.5 * x});
  region.xis = {sys.xi0, scaled(sys.xi0, -1.0)};
  auto a2 = transition_classify(sys, datum, region);
  json xs = json::array();
  for (const auto& x : region.xs) xs.push_back(std::vector<double>(x.begin(), x.begin() + sys.d));
  return {
      {"assumption1",
       {{"verdict", a1.elliptic ? "elliptic" : "hyperbolic"}, {"holds", a1.elliptic},
        {"max_imag", a1.max_imag}, {"spectrum", spectrum_json(a1.spectrum)}}},
      {"assumption2",
       {{"i", verdict_name(a2.hyperbolic_at_0)},
        {"ii", verdict_name(a2.diagonalizable)},
        {"iii", verdict_name(a2.double_root)},
        {"iv", verdict_name(a2.transversal)},
        {"holds", a2.transitional()},
        {"margins",
         {{"max_imag", a2.max_imag}, {"max_condition", a2.max_condition},
          {"double_root", json::array({a2.lambda.real(), a2.lambda.imag()})},
          {"root_gap", a2.root_gap}, {"transversality", a2.margin}, {"tol", a2.tol}}},
        {"region", {{"xs", xs}, {"amplitude", amp}, {"n", g.n}}}}}};
}

json run_datum(const RunConfig& c, const SystemSpec& sys, RunOutput& out) {
  DatumRecipe dr = c.datum;
  dr.sigma = c.sigma;
  FullDatum u = build_datum(sys, dr);
  auto br = block_norms(u.osc, u.osc.opts.j0, u.osc.opts.J, c.fam);
  json sharp_j;
  if (u.osc.opts.J >= 4 * u.osc.opts.j0 - 1) {
    auto sharp = sharpness_witness(u.osc, c.sigma, c.fam);
    sharp_j = {{"exponent", sharp.exponent}, {"chunk_end", sharp.chunk_end},
               {"chunk_sums", sharp.chunk_sums}, {"bounded", sharp.bounded},
               {"growing", sharp.growing}};
  } else {
    sharp_j = {{"note", "datum.J below 4 j0 - 1, no dyadic chunks"}};
  }
  auto anchors = check_anchors(u);
  CsvTable b;
  b.name = "blocks";
  b.header = {"j", "norm", "ratio", "leak"};
  for (std::size_t i = 0; i < br.js.size(); ++i)
    b.rows.push_back({double(br.js[i]), br.norms[i], br.ratios[i], br.leak[i]});
  out.series.push_back(std::move(b));

  json comp = json::array();
  std::vector<int> js = c.js.empty() ? std::vector<int>{5, 6, 7, 8, 9} : c.js;
  std::string comp_note;
  if (ellipticity_classify(sys, base_point(sys)).elliptic) {
    CsvTable ct;
    ct.name = "component";
    ct.header = {"j", "norm", "a_j", "ratio", "corrector"};
    for (int j : js) {
      auto geo = make_geometry(sys.d, sys.x0, sys.xi0, j, c.delta, c.rx);
      auto cb = elliptic_component_bound(sys, u, geo, mollifier_epsilon(j, resolve_theta(c.theta, c.s, sys.d)),
                                         Quant::para, c.fam);
      comp.push_back({{"j", j}, {"norm", cb.norm}, {"a_j", cb.a_j}, {"ratio", cb.ratio},
                      {"corrector", cb.corrector_norm}});
      ct.rows.push_back({double(j), cb.norm, cb.a_j, cb.ratio, cb.corrector_norm});
    }
    out.series.push_back(std::move(ct));
  } else {
    comp_note = "system not elliptic at (x0, xi0): no elliptic component";
  }
  out.fields.push_back(datum_field(sys, u));
  json u1 = json::array();
  for (int i = 0; i < u.u1.size(); ++i) u1.push_back(json::array({u.u1[i].real(), u.u1[i].imag()}));
  return {{"u1", u1},
          {"anchor", u.anchor},
          {"anchor_value_error", anchors.value_err},
          {"anchor_gradient_error", anchors.grad_err},
          {"amplitudes", u.osc.a},
          {"warnings", u.osc.warnings},
          {"blocks", {{"js", br.js}, {"norms", br.norms}, {"ratios", br.ratios},
                      {"leak", br.leak}, {"spread", br.spread}}},
          {"sharpness", sharp_j},
          {"component", comp},
          {"component_note", comp_note}};
}

SuiteOpts suite_opts(const RunConfig& c) {
  SuiteOpts so;
  so.seed = c.seed;
  so.fam = c.fam;
  so.dense_oracle = c.dense_oracle;
  so.js = c.js;
  return so;
}

std::vector<int> sweep(const RunConfig& c) {
  return c.js.empty() ? std::vector<int>{6, 7, 8, 9} : c.js;
}

json run_elliptic(const RunConfig& c, RunOutput& out) {
  EllipticEndgameOpts o;
  o.preset = c.system_name();
  o.s = c.s;
  o.sigma = c.sigma;
  o.theta = c.theta;
  o.k = c.k;
  o.delta = c.delta;
  o.rx = c.rx;
  o.eps_a = c.eps_a;
  o.max_halvings = c.endgame.max_halvings;
  o.nt = c.endgame.nt;
  o.scale_rx = c.endgame.scale_rx;
  o.datum = c.datum;
  auto js = sweep(c);
  std::vector<CriterionResult> rs;
  EndgameReport P, C;
  json res;
  if (c.control) {
    rs.push_back(elliptic_criterion(o, js, &P, &C));
    endgame_tables(C, "control", out);
  } else {
    P = endgame_elliptic(o, js);
  }
  endgame_tables(P, "elliptic", out);
  if (c.audit.enabled) {
    AuditOpts a;
    a.preset = o.preset;
    a.s = c.s;
    a.theta = c.theta;
    a.delta = c.audit.delta;
    a.rx = c.audit.rx;
    a.t = c.audit.t;
    a.datum = c.datum;
    a.nodes = c.audit.nodes;
    RemainderAudit A;
    rs.push_back(remainder_criterion(a, js, &A));
    rs.push_back(duhamel_criterion(a, js));
    CsvTable t;
    t.name = "remainder";
    t.header = {"j", "G_E", "G_H", "commutator", "R_E", "dtP", "out_E", "out_H", "out_E1", "out_bound"};
    for (const auto& r : A.rows)
      t.rows.push_back({double(r.j), r.G_E, r.G_H, r.comm, r.rstar, r.dtp, r.out_E, r.out_H,
                        r.out_E1, r.out_bound});
    out.series.push_back(std::move(t));
  }
  bool crit_failed = false;
  res["positive"] = to_json(P);
  if (c.control) res["control"] = to_json(C);
  res["criteria"] = criteria_json(rs, out);
  crit_failed = out.failed;
  out.failed = !P.pass;
  res["criteria_pass"] = !crit_failed;
  return res;
}

json run_transition(const RunConfig& c, RunOutput& out) {
  TransitionEndgameOpts o;
  o.preset = c.system_name();
  o.s = c.s;
  o.sigma = c.sigma;
  o.theta = c.theta;
  o.k = c.k;
  o.delta = c.delta;
  o.rx = c.rx;
  o.eps_a = c.eps_a;
  o.obs_fraction = c.endgame.obs_fraction;
  o.nt = c.endgame.nt;
  o.h_max = c.endgame.h_max;
  o.drift_tol = c.endgame.drift_tol;
  o.datum = c.datum;
  auto js = sweep(c);
  std::vector<CriterionResult> rs;
  EndgameReport P, C;
  json res;
  if (c.control) {
    rs.push_back(transition_criterion(o, js, &P, &C));
    endgame_tables(C, "control", out);
  } else {
    P = endgame_transition(o, js);
  }
  endgame_tables(P, "transition", out);
  res["positive"] = to_json(P);
  if (c.control) res["control"] = to_json(C);
  res["criteria"] = criteria_json(rs, out);
  res["criteria_pass"] = !out.failed;
  out.failed = !P.pass;
  return res;
}

// ---------------------------------------------------------------- summary pieces

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

void criteria_lines(const json& crit, std::vector<std::string>& L) {
  for (const auto& r : crit) {
    L.push_back("criterion " + std::to_string(r["id"].get<int>()) + "  " +
                (r["checks_pass"].get<bool>() ? "PASS" : "FAIL") + "  " +
                r["title"].get<std::string>());
    for (const auto& ch : r["checks"]) {
      std::string rel = ch["rel"].get<std::string>();
      std::string line = "    " + ch["name"].get<std::string>() + " = " +
                         (rel == "==" ? (ch["pass"].get<bool>() ? "yes" : "no")
                                      : fmt(ch["value"].get<double>()));
      if (rel == "within")
        line += " in [" + fmt(ch["limit"].get<double>()) + ", " + fmt(ch["limit_hi"].get<double>()) + "]";
      else if (rel != "==")
        line += " " + rel + " " + fmt(ch["limit"].get<double>());
      if (!ch["pass"].get<bool>()) line += "  (x)";
      L.push_back(line);
    }
  }
}

void endgame_lines(const json& res, std::vector<std::string>& L) {
  const json& P = res["positive"];
  bool tr = P["kind"] == "transition";
  L.push_back(pad("j", 4) + pad("delta", 10) + pad(tr ? "zeta-" : "gamma-", 11) +
              pad(tr ? "zeta+" : "gamma+", 11) + pad("t_obs", 10) + pad("margin", 12) +
              (res.contains("control") ? "control" : ""));
  const json* C = res.contains("control") ? &res["control"] : nullptr;
  for (std::size_t i = 0; i < P["rows"].size(); ++i) {
    const json& r = P["rows"][i];
    std::string line = pad(std::to_string(r["j"].get<int>()), 4) +
                       pad(fmt(r["delta"].get<double>()), 10) +
                       pad(fmt(r["rate_lo"].get<double>()), 11) +
                       pad(fmt(r["rate_hi"].get<double>()), 11) +
                       pad(fmt(r["t_obs"].get<double>()), 10) +
                       pad(fmt(r["margin"].get<double>()), 12);
    if (C && i < (*C)["rows"].size()) line += fmt((*C)["rows"][i]["margin"].get<double>());
    L.push_back(line);
  }
  L.push_back(std::string("positive: increasing ") + (P["increasing"].get<bool>() ? "yes" : "no") +
              (tr ? std::string(", fit ") + (P["fit_ok"].get<bool>() ? "ok" : "off")
                  : std::string(", above one ") + (P["above_one"].get<bool>() ? "yes" : "no")) +
              ", verdict " + (P["pass"].get<bool>() ? "PASS" : "FAIL"));
  if (C)
    L.push_back(std::string("control: flat ") + ((*C)["flat"].get<bool>() ? "yes" : "no") +
                ", verdict " + ((*C)["pass"].get<bool>() ? "PASS" : "FAIL"));
  criteria_lines(res["criteria"], L);
}

}  // namespace

// ---------------------------------------------------------------- names and ranges

const char* pipeline_name(Pipeline p) {
  for (const auto& [k, n] : kPipelines)
    if (k == p) return n;
  return "?";
}

Pipeline parse_pipeline(const std::string& s) {
  for (const auto& [k, n] : kPipelines)
    if (s == n) return k;
  throw Error("unknown pipeline '" + s + "'");
}

std::vector<int> parse_j_range(const std::string& s) {
  auto to_int = [&](const std::string& t) {
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(t, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (t.empty() || pos != t.size() || v < 0) throw Error("bad j range '" + s + "'");
    return v;
  };
  std::vector<int> js;
  auto dots = s.find("..");
  auto dash = s.find('-');
  if (dots != std::string::npos || (dash != std::string::npos && dash > 0)) {
    std::size_t cut = dots != std::string::npos ? dots : dash;
    int a = to_int(s.substr(0, cut)), b = to_int(s.substr(cut + (dots != std::string::npos ? 2 : 1)));
    if (b < a) throw Error("bad j range '" + s + "': empty");
    for (int j = a; j <= b; ++j) js.push_back(j);
  } else {
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) js.push_back(to_int(part));
    if (js.empty()) throw Error("bad j range '" + s + "'");
  }
  return js;
}

// ---------------------------------------------------------------- config

std::string RunConfig::system_name() const {
  if (!system.is_null()) return system["name"].get<std::string>();
  return preset;
}

RunConfig defaults_for(Pipeline p) {
  RunConfig c;
  c.pipeline = p;
  switch (p) {
    case Pipeline::transition:
      c.preset = "burgers-transition";
      c.s = 3.5;
      c.sigma = 3.5;
      c.delta = 0.05;
      c.rx = 1.0;
      c.endgame.nt = 12;
      c.js = {6, 7, 8, 9};
      break;
    case Pipeline::elliptic:
      c.preset = "cr-elliptic";
      c.js = {6, 7, 8, 9};
      break;
    case Pipeline::datum:
      c.preset = "cr-elliptic";
      c.sigma = 2.5;
      c.rx = 1.0;
      c.js = {5, 6, 7, 8, 9};
      break;
    default:
      c.preset = "cr-elliptic";
      break;
  }
  c.datum.sigma = c.sigma;
  return c;
}

SystemSpec inline_system(const json& j) {
  only_keys(j, {"name", "d", "N", "F", "x0", "xi0", "u0", "v0"}, "system");
  for (const char* k : {"name", "d", "N", "F", "u0"})
    if (!j.contains(k)) throw Error(std::string("config key 'system.") + k + "' is required");
  SystemSpec s;
  read(j, "name", s.name, "system");
  read(j, "d", s.d, "system");
  read(j, "N", s.N, "system");
  if (s.name.empty()) throw Error("system.name must be non-empty");
  if (s.d < 1 || s.d > 2) throw Error("system.d must be 1 or 2");
  if (s.N < 1 || s.N > kMaxN) throw Error("system.N must be in 1.." + std::to_string(kMaxN));
  if (!j["F"].is_array() || int(j["F"].size()) != s.N)
    throw Error("system.F must hold N = " + std::to_string(s.N) + " expressions");
  auto exprs = std::make_shared<std::vector<Expr>>();
  for (const auto& e : j["F"]) {
    if (!e.is_string()) throw Error("system.F entries must be strings");
    exprs->push_back(Expr::parse(e.get<std::string>()));
  }
  if (j.contains("x0")) s.x0 = vec_of(j["x0"], s.d, "system.x0");
  if (j.contains("xi0")) s.xi0 = vec_of(j["xi0"], s.d, "system.xi0");
  if (!j["u0"].is_array() || int(j["u0"].size()) != s.N)
    throw Error("system.u0 must hold N = " + std::to_string(s.N) + " entries");
  s.u0 = CVec(s.N);
  for (int i = 0; i < s.N; ++i) s.u0[i] = complex_of(j["u0"][i], "system.u0");
  s.v0 = s.zero_grad();
  if (j.contains("v0")) {
    const json& v = j["v0"];
    if (!v.is_array() || int(v.size()) != s.d) throw Error("system.v0 must hold d rows");
    for (int k = 0; k < s.d; ++k) {
      if (!v[k].is_array() || int(v[k].size()) != s.N) throw Error("system.v0 rows must hold N entries");
      for (int i = 0; i < s.N; ++i) s.v0[k][i] = complex_of(v[k][i], "system.v0");
    }
  }
  const int N = s.N, d = s.d;
  std::vector<std::string> un, uxn, uyn;
  for (int i = 1; i <= N; ++i) {
    un.push_back("u" + std::to_string(i));
    uxn.push_back("ux" + std::to_string(i));
    uyn.push_back("uy" + std::to_string(i));
  }
  s.F = [exprs, N, d, un, uxn, uyn](double t, const Vec& x, const CVec& u, const Grad& v) -> CVec {
    std::map<std::string, cd> vars{{"t", t}, {"x", x[0]}, {"y", d == 2 ? x[1] : 0.0}};
    for (int i = 0; i < N; ++i) {
      vars[un[i]] = u[i];
      vars[uxn[i]] = v[0].size() > i ? v[0][i] : 0.0;
      vars[uyn[i]] = d == 2 && v[1].size() > i ? v[1][i] : 0.0;
    }
    CVec r(N);
    for (int i = 0; i < N; ++i) r[i] = (*exprs)[i].eval(vars);
    return r;
  };
  s.validate();
  // evaluate once so unknown variables surface now
  s.F(0.0, s.x0, s.u0, s.v0);
  return s;
}

RunConfig parse_config(const json& doc, Pipeline p) {
  RunConfig c = defaults_for(p);
  if (doc.is_null()) {
    validate(c);
    return c;
  }
  only_keys(doc, {"pipeline", "version", "preset", "system", "s", "sigma", "theta", "k", "j",
                  "delta", "rx", "eps_a", "seed", "dense_oracle", "control", "out", "dyadic",
                  "datum", "endgame", "audit", "classify"},
            "");
  if (doc.contains("pipeline")) {
    std::string name;
    read(doc, "pipeline", name, "");
    if (parse_pipeline(name) != p)
      throw Error("config pipeline '" + name + "' does not match subcommand '" + pipeline_name(p) + "'");
  }
  if (doc.contains("preset") && doc.contains("system") && !doc["system"].is_null())
    throw Error("config sets both 'preset' and 'system'");
  read(doc, "preset", c.preset, "");
  if (doc.contains("system") && !doc["system"].is_null()) c.system = doc["system"];
  read(doc, "s", c.s, "");
  read(doc, "sigma", c.sigma, "");
  read(doc, "theta", c.theta, "");
  read(doc, "k", c.k, "");
  read(doc, "delta", c.delta, "");
  read(doc, "rx", c.rx, "");
  read(doc, "eps_a", c.eps_a, "");
  if (doc.contains("j")) {
    const json& j = doc["j"];
    if (j.is_string()) {
      c.js = parse_j_range(j.get<std::string>());
    } else if (j.is_array()) {
      c.js.clear();
      for (const auto& v : j) {
        if (!v.is_number_integer()) throw Error("config key 'j' must hold integers");
        c.js.push_back(v.get<int>());
      }
    } else {
      throw Error("config key 'j' must be a range string or an array of integers");
    }
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw Error("config key 'seed' must be an unsigned integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  read(doc, "dense_oracle", c.dense_oracle, "");
  read(doc, "control", c.control, "");
  read(doc, "out", c.out, "");
  if (doc.contains("dyadic")) {
    const json& o = doc["dyadic"];
    only_keys(o, {"eps1", "eps2", "N0", "J"}, "dyadic");
    read(o, "eps1", c.fam.eps1, "dyadic");
    read(o, "eps2", c.fam.eps2, "dyadic");
    read(o, "N0", c.fam.N0, "dyadic");
    read(o, "J", c.fam.J, "dyadic");
  }
  if (doc.contains("datum")) {
    const json& o = doc["datum"];
    only_keys(o, {"J", "R", "L", "real", "repair_polarization"}, "datum");
    read(o, "J", c.datum.J, "datum");
    read(o, "R", c.datum.R, "datum");
    read(o, "L", c.datum.L, "datum");
    read(o, "real", c.datum.real, "datum");
    read(o, "repair_polarization", c.datum.repair_polarization, "datum");
  }
  if (doc.contains("endgame")) {
    const json& o = doc["endgame"];
    only_keys(o, {"nt", "max_halvings", "scale_rx", "obs_fraction", "h_max", "drift_tol"}, "endgame");
    read(o, "nt", c.endgame.nt, "endgame");
    read(o, "max_halvings", c.endgame.max_halvings, "endgame");
    read(o, "scale_rx", c.endgame.scale_rx, "endgame");
    read(o, "obs_fraction", c.endgame.obs_fraction, "endgame");
    read(o, "h_max", c.endgame.h_max, "endgame");
    read(o, "drift_tol", c.endgame.drift_tol, "endgame");
  }
  if (doc.contains("audit")) {
    const json& o = doc["audit"];
    only_keys(o, {"enabled", "t", "nodes", "delta", "rx"}, "audit");
    read(o, "enabled", c.audit.enabled, "audit");
    read(o, "t", c.audit.t, "audit");
    read(o, "nodes", c.audit.nodes, "audit");
    read(o, "delta", c.audit.delta, "audit");
    read(o, "rx", c.audit.rx, "audit");
  }
  if (doc.contains("classify")) {
    const json& o = doc["classify"];
    only_keys(o, {"amplitude", "n", "L"}, "classify");
    read(o, "amplitude", c.classify.amplitude, "classify");
    read(o, "n", c.classify.n, "classify");
    read(o, "L", c.classify.L, "classify");
  }
  c.datum.sigma = c.sigma;
  validate(c);
  return c;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void validate(const RunConfig& c) {
  SystemSpec sys = c.system.is_null() ? make_preset(c.preset) : inline_system(c.system);
  c.fam.validate();
  for (int j : c.js)
    if (j < 0 || j > 30) throw Error("j = " + std::to_string(j) + " outside 0..30");
  if (!(c.delta > 0)) throw Error("delta > 0 violated");
  if (!(c.rx > 0)) throw Error("rx > 0 violated");
  if (!(c.eps_a > 0)) throw Error("eps_a > 0 violated");
  if (c.k < 1) throw Error("k >= 1 violated");
  if (c.datum.J < 1) throw Error("datum.J >= 1 violated");
  if (!(c.datum.R > 0)) throw Error("datum.R > 0 violated");
  if (!(c.datum.L > 0)) throw Error("datum.L > 0 violated");
  if (c.endgame.nt < 2) throw Error("endgame.nt >= 2 violated");
  if (!(c.endgame.obs_fraction > 0 && c.endgame.obs_fraction <= 1))
    throw Error("0 < endgame.obs_fraction <= 1 violated");
  if (!(c.endgame.h_max > 0)) throw Error("endgame.h_max > 0 violated");
  if (!(c.classify.n >= 8 && is_pow2(c.classify.n))) throw Error("classify.n must be a power of two >= 8");
  if (c.pipeline == Pipeline::elliptic) {
    check_elliptic_window(c.s, c.sigma, sys.d);
    if (c.audit.enabled) {
      if (!(c.audit.t > 0)) throw Error("audit.t > 0 violated");
      if (c.audit.nodes < 2) throw Error("audit.nodes >= 2 violated");
    }
  }
  if (c.pipeline == Pipeline::transition) check_transition_window(c.s, c.sigma, sys.d);
  if (!c.system.is_null()) register_system(sys);
}

json config_to_json(const RunConfig& c) {
  json j;
  j["pipeline"] = pipeline_name(c.pipeline);
  j["version"] = kVersion;
  if (c.system.is_null())
    j["preset"] = c.preset;
  else
    j["system"] = c.system;
  j["s"] = c.s;
  j["sigma"] = c.sigma;
  j["theta"] = c.theta;
  j["k"] = c.k;
  j["j"] = c.js;
  j["delta"] = c.delta;
  j["rx"] = c.rx;
  j["eps_a"] = c.eps_a;
  j["seed"] = c.seed;
  j["dense_oracle"] = c.dense_oracle;
  j["control"] = c.control;
  j["out"] = c.out;
  j["dyadic"] = {{"eps1", c.fam.eps1}, {"eps2", c.fam.eps2}, {"N0", c.fam.N0}, {"J", c.fam.J}};
  j["datum"] = {{"J", c.datum.J}, {"R", c.datum.R}, {"L", c.datum.L}, {"real", c.datum.real},
                {"repair_polarization", c.datum.repair_polarization}};
  j["endgame"] = {{"nt", c.endgame.nt}, {"max_halvings", c.endgame.max_halvings},
                  {"scale_rx", c.endgame.scale_rx}, {"obs_fraction", c.endgame.obs_fraction},
                  {"h_max", c.endgame.h_max}, {"drift_tol", c.endgame.drift_tol}};
  j["audit"] = {{"enabled", c.audit.enabled}, {"t", c.audit.t}, {"nodes", c.audit.nodes},
                {"delta", c.audit.delta}, {"rx", c.audit.rx}};
  j["classify"] = {{"amplitude", c.classify.amplitude}, {"n", c.classify.n}, {"L", c.classify.L}};
  return j;
}

// ---------------------------------------------------------------- running

RunOutput run_pipeline(const RunConfig& c) {
  auto t0 = Clock::now();
  RunOutput out;
  SystemSpec sys = c.system.is_null() ? make_preset(c.preset) : inline_system(c.system);
  if (!c.system.is_null()) register_system(sys);
  json res;
  switch (c.pipeline) {
    case Pipeline::classify:
      res = run_classify(c, sys);
      break;
    case Pipeline::datum:
      res = run_datum(c, sys, out);
      break;
    case Pipeline::calculus: {
      SuiteOpts so = suite_opts(c);
      std::vector<CriterionResult> rs{dyadic_suite(so), quantization_suite(so), lannes_suite(so),
                                      composition_suite(so), garding_suite(so)};
      res["criteria"] = criteria_json(rs, out);
      break;
    }
    case Pipeline::rates: {
      std::vector<CriterionResult> rs{rates_suite(suite_opts(c))};
      res["criteria"] = criteria_json(rs, out);
      res["rates"] = rs[0].detail;
      break;
    }
    case Pipeline::elliptic:
      res = run_elliptic(c, out);
      out.fields.push_back(datum_field(sys, build_datum(sys, [&] {
        DatumRecipe dr = c.datum;
        dr.sigma = c.sigma;
        return dr;
      }())));
      break;
    case Pipeline::transition:
      res = run_transition(c, out);
      break;
  }
  out.report = {{"version", kVersion},
                {"pipeline", pipeline_name(c.pipeline)},
                {"system", system_json(sys)},
                {"config", config_to_json(c)},
                {"results", res},
                {"failed", out.failed}};
  out.timing["seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  out.timing["threads"] = thread_count();
  return out;
}

std::vector<std::string> summary_lines(const json& report) {
  std::vector<std::string> L;
  const json& sys = report["system"];
  const json& res = report["results"];
  std::string pipe = report["pipeline"].get<std::string>();
  L.push_back(pipe + " on " + sys["name"].get<std::string>() + " (d = " +
              std::to_string(sys["d"].get<int>()) + ", N = " + std::to_string(sys["N"].get<int>()) +
              "), version " + report["version"].get<std::string>());
  if (pipe == "classify") {
    const json& a1 = res["assumption1"];
    const json& a2 = res["assumption2"];
    L.push_back("assumption 1: " + a1["verdict"].get<std::string>() + " (max |Im lambda| = " +
                fmt(a1["max_imag"].get<double>()) + ")");
    L.push_back("assumption 2: i " + a2["i"].get<std::string>() + ", ii " + a2["ii"].get<std::string>() +
                ", iii " + a2["iii"].get<std::string>() + ", iv " + a2["iv"].get<std::string>());
    const json& m = a2["margins"];
    L.push_back("    max |Im| " + fmt(m["max_imag"].get<double>()) + ", max condition " +
                fmt(m["max_condition"].get<double>()) + ", root gap " +
                fmt(m["root_gap"].get<double>()) + ", transversality " +
                fmt(m["transversality"].get<double>()));
  } else if (pipe == "datum") {
    L.push_back(pad("j", 4) + pad("block norm", 14) + "ratio");
    const json& b = res["blocks"];
    for (std::size_t i = 0; i < b["js"].size(); ++i)
      L.push_back(pad(std::to_string(b["js"][i].get<int>()), 4) +
                  pad(fmt(b["norms"][i].get<double>()), 14) + fmt(b["ratios"][i].get<double>()));
    L.push_back("block ratio spread " + fmt(b["spread"].get<double>()) + ", anchor |w_in(x0)| " +
                fmt(res["anchor"].get<double>()));
    for (const auto& r : res["component"])
      L.push_back("component j = " + std::to_string(r["j"].get<int>()) + ": ratio " +
                  fmt(r["ratio"].get<double>()));
  } else if (pipe == "calculus" || pipe == "rates") {
    criteria_lines(res["criteria"], L);
  } else {
    endgame_lines(res, L);
  }
  L.push_back(std::string("overall: ") + (report["failed"].get<bool>() ? "FAIL" : "ok"));
  return L;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s.push_back(hex[md[i] >> 4]);
    s.push_back(hex[md[i] & 15]);
  }
  return s;
}

std::string render_csv(const CsvTable& t) {
  std::string s;
  for (std::size_t i = 0; i < t.header.size(); ++i) s += (i ? "," : "") + t.header[i];
  s += "\n";
  char buf[40];
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (std::isnan(row[i]))
        std::snprintf(buf, sizeof buf, "nan");
      else
        std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      if (i) s += ",";
      s += buf;
    }
    s += "\n";
  }
  return s;
}

std::string utc_stamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string report_bytes(const json& report) { return report.dump(1) + "\n"; }

fs::path write_run(const RunConfig& c, const RunOutput& r, const std::string& stamp) {
  std::string bytes = report_bytes(r.report);
  fs::path dir = fs::path(c.out) / (stamp + "-" + sha256_hex(bytes).substr(0, 12));
  fs::create_directories(dir / "series");
  fs::create_directories(dir / "fields");
  auto put = [](const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    f << s;
  };
  put(dir / "config.json", config_to_json(c).dump(1) + "\n");
  put(dir / "report.json", bytes);
  put(dir / "timing.json", r.timing.dump(1) + "\n");
  for (const auto& t : r.series) put(dir / "series" / (t.name + ".csv"), render_csv(t));
  for (const auto& t : r.fields) put(dir / "fields" / (t.name + ".csv"), render_csv(t));
  return dir;
}

std::vector<std::string> summarize_run(const fs::path& dir, bool& hash_ok) {
  std::ifstream in(dir / "report.json", std::ios::binary);
  if (!in) throw Error("no report.json in '" + dir.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string name = fs::absolute(dir).lexically_normal().filename().string();
  if (name.empty()) name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  auto dash = name.rfind('-');
  std::string hash = sha256_hex(bytes);
  hash_ok = dash != std::string::npos && hash.compare(0, name.size() - dash - 1, name, dash + 1) == 0 &&
            name.size() - dash - 1 == 12;
  auto L = summary_lines(json::parse(bytes));
  L.push_back("report sha256 " + hash + (hash_ok ? " (matches directory)" : " (does not match directory)"));
  return L;
}

}  // namespace mlab
