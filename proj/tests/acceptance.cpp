// One pass/fail line per acceptance criterion; exit status 1 when any fails.
// Optional argument: path for the full JSON record.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "mlab/suites.hpp"

using namespace mlab;

namespace {

std::string describe(const Check& c) {
  char buf[256];
  if (c.rel == "within")
    std::snprintf(buf, sizeof buf, "%s = %.4g in [%.4g, %.4g]", c.name.c_str(), c.value, c.limit,
                  c.limit_hi);
  else if (c.rel == "==")
    std::snprintf(buf, sizeof buf, "%s = %s", c.name.c_str(), c.pass ? "yes" : "no");
  else
    std::snprintf(buf, sizeof buf, "%s = %.4g %s %.4g", c.name.c_str(), c.value, c.rel.c_str(),
                  c.limit);
  return std::string(buf) + (c.pass ? "" : " (x)");
}

}  // namespace

int main(int argc, char** argv) {
  SuiteOpts so;
  std::vector<int> js{6, 7, 8, 9};
  std::vector<CriterionResult> all;
  auto report = [&](CriterionResult r) {
    std::cout << "criterion " << r.id << (r.id < 10 ? "  " : " ") << (r.pass ? "PASS" : "FAIL")
              << "  " << r.title << " (" << int(r.seconds + 0.5) << " s of " << int(r.budget) << ")";
    for (const auto& c : r.checks) std::cout << " | " << describe(c);
    if (!r.within_budget) std::cout << " | over the runtime budget (x)";
    std::cout << std::endl;
    all.push_back(std::move(r));
  };
  report(dyadic_suite(so));
  report(quantization_suite(so));
  report(lannes_suite(so));
  report(composition_suite(so));
  report(garding_suite(so));
  report(rates_suite(so));
  report(spectral_suite(so));
  report(datum_suite(so));
  report(elliptic_criterion(EllipticEndgameOpts{}, js));
  report(transition_criterion(TransitionEndgameOpts{}, js));
  report(remainder_criterion(AuditOpts{}, js));
  report(duhamel_criterion(AuditOpts{}, js));

  int failed = 0;
  json out = json::array();
  for (const auto& r : all) {
    failed += r.pass ? 0 : 1;
    out.push_back(to_json(r));
  }
  std::cout << (all.size() - failed) << " of " << all.size() << " criteria pass" << std::endl;
  if (argc > 1) std::ofstream(argv[1]) << out.dump(1) << "\n";
  return failed == 0 ? 0 : 1;
}
