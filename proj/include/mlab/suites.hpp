#pragma once

#include <cstdint>
#include <json.hpp>

#include "mlab/endgame.hpp"

namespace mlab {

using json = nlohmann::ordered_json;

// One measured quantity against a pinned tolerance.
struct Check {
  std::string name;
  double value = 0.0;
  std::string rel;  // "<=", ">=", "<", ">", "within"
  double limit = 0.0;
  double limit_hi = 0.0;  // upper end for "within"
  bool pass = false;
};

Check check_le(std::string name, double v, double lim);
Check check_ge(std::string name, double v, double lim);
Check check_within(std::string name, double v, double lo, double hi);
Check check_true(std::string name, bool ok);

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  bool checks_pass = false, within_budget = false;
  bool pass = false;  // checks and runtime budget
  double seconds = 0.0;
  double budget = 0.0;  // seconds
  json detail = json::object();
  void finish();  // after seconds is set
};

struct SuiteOpts {
  std::uint64_t seed = 5;
  DyadicFamily fam;
  bool dense_oracle = true;
  std::vector<int> js;  // empty: each criterion's default sweep
};

CriterionResult dyadic_suite(const SuiteOpts& o);       // 1
CriterionResult quantization_suite(const SuiteOpts& o); // 2
CriterionResult lannes_suite(const SuiteOpts& o);       // 3
CriterionResult composition_suite(const SuiteOpts& o);  // 4
CriterionResult garding_suite(const SuiteOpts& o);      // 5
CriterionResult rates_suite(const SuiteOpts& o);        // 6
CriterionResult spectral_suite(const SuiteOpts& o);     // 7
CriterionResult datum_suite(const SuiteOpts& o);        // 8

// 9: positive sweep, then the hyperbolic control at the same t_final
CriterionResult elliptic_criterion(const EllipticEndgameOpts& pos, const std::vector<int>& js,
                                   EndgameReport* pos_out = nullptr,
                                   EndgameReport* ctl_out = nullptr);
// 10: positive sweep, then the symmetric control at the same observation times
CriterionResult transition_criterion(const TransitionEndgameOpts& pos, const std::vector<int>& js,
                                     EndgameReport* pos_out = nullptr,
                                     EndgameReport* ctl_out = nullptr);

struct AuditOpts {
  std::string preset = "cr-elliptic";
  double s = 2.5, theta = 0.0;
  double delta = 0.05, rx = 0.25;
  double t = 1.0;
  DatumRecipe datum;  // sigma = s
  int nodes = 8;
};
CriterionResult remainder_criterion(const AuditOpts& a, const std::vector<int>& js,
                                    RemainderAudit* out = nullptr);  // 11
CriterionResult duhamel_criterion(const AuditOpts& a, const std::vector<int>& js,
                                  std::vector<DuhamelReport>* out = nullptr);  // 12

json to_json(const Check& c);
json to_json(const CriterionResult& r);
json to_json(const EndgameReport& r);
json to_json(const RemainderAudit& a);
json to_json(const DuhamelReport& d);
json to_json(const RateReport& r);

}  // namespace mlab
