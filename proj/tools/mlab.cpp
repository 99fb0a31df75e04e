// mlab <subcommand> [--config c.json] [--j 6..9] [--out runs] [--seed 5] [--dense-oracle true]
#include <CLI11.hpp>
#include <iostream>

#include "mlab/cli_io.hpp"

using namespace mlab;

namespace {

struct Flags {
  std::string config, j, out, dense;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool quiet = false;
};

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error("--dense-oracle expects true or false, got '" + s + "'");
}

int run(Pipeline p, const Flags& f) {
  json doc = f.config.empty() ? json::object() : load_json(f.config);
  if (!doc.is_object()) throw Error("config must be a JSON object");
  if (!f.j.empty()) doc["j"] = parse_j_range(f.j);
  if (!f.out.empty()) doc["out"] = f.out;
  if (f.seed_set) doc["seed"] = f.seed;
  if (!f.dense.empty()) doc["dense_oracle"] = parse_bool(f.dense);
  RunConfig c = parse_config(doc, p);
  RunOutput r = run_pipeline(c);
  auto dir = write_run(c, r, utc_stamp());
  if (!f.quiet)
    for (const auto& line : summary_lines(r.report)) std::cout << line << "\n";
  std::cout << "run directory " << dir.string() << "\n";
  std::cout << "report sha256 " << sha256_hex(report_bytes(r.report)) << std::endl;
  return r.failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"experiments on oscillatory data for first-order systems"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Flags f;
  std::vector<std::pair<CLI::App*, Pipeline>> subs;
  auto add = [&](const char* name, const char* help, Pipeline p) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    s->add_option("--j", f.j, "j range: 6..9, 6-9 or 6,7,8");
    s->add_option("--out", f.out, "output root (default runs)");
    s->add_option("--seed", f.seed, "random seed")->each([&](const std::string&) { f.seed_set = true; });
    s->add_option("--dense-oracle", f.dense, "cross-check flows against dense exponentials");
    s->add_flag("--quiet", f.quiet, "only print the run directory and hash");
    subs.emplace_back(s, p);
  };
  add("classify", "ellipticity and transition verdicts at the base point", Pipeline::classify);
  add("datum", "build the oscillatory datum and its block diagnostics", Pipeline::datum);
  add("calculus", "dyadic, quantization and symbolic calculus suites", Pipeline::calculus);
  add("rates", "flow growth rates against their envelopes", Pipeline::rates);
  add("elliptic", "elliptic endgame sweep with the hyperbolic control", Pipeline::elliptic);
  add("transition", "transition endgame sweep with the symmetric control", Pipeline::transition);
  std::string dir;
  auto* rep = app.add_subcommand("report", "summarize a run directory and verify its hash");
  rep->add_option("dir", dir, "run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (rep->parsed()) {
      bool ok = false;
      for (const auto& line : summarize_run(dir, ok)) std::cout << line << "\n";
      return ok ? 0 : 3;
    }
    for (const auto& [s, p] : subs)
      if (s->parsed()) return run(p, f);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 2;
}
