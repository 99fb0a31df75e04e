#pragma once

#include <filesystem>

#include "mlab/suites.hpp"

namespace mlab {

inline constexpr const char* kVersion = "0.1.0";

enum class Pipeline { classify, datum, calculus, rates, elliptic, transition };
const char* pipeline_name(Pipeline p);
Pipeline parse_pipeline(const std::string& s);

// "6..9", "6-9", "6,7,9" or "8"
std::vector<int> parse_j_range(const std::string& s);

struct EndgameSection {
  int nt = 8;
  int max_halvings = 6;
  bool scale_rx = true;
  double obs_fraction = 0.7;
  double h_max = 0.05;
  double drift_tol = 0.1;
};

struct AuditSection {
  bool enabled = false;  // remainder audit and Duhamel iterations after the elliptic sweep
  double t = 1.0;
  int nodes = 8;
  double delta = 0.05, rx = 0.25;
};

struct ClassifySection {
  double amplitude = 0.3;  // datum u0 + amplitude sin(x.xi0) e_1
  long n = 64;
  double L = 2 * kPi;
};

struct RunConfig {
  Pipeline pipeline = Pipeline::elliptic;
  std::string preset;
  json system;  // inline definition, null when a preset is used
  double s = 2.5, sigma = 3.35, theta = 0.0;
  int k = 2;
  double delta = 0.1, rx = 0.25, eps_a = 0.01;
  std::vector<int> js;  // empty: per-criterion defaults
  std::uint64_t seed = 5;
  bool dense_oracle = true;
  bool control = true;
  std::string out = "runs";
  DyadicFamily fam;
  DatumRecipe datum;  // sigma comes from above
  EndgameSection endgame;
  AuditSection audit;
  ClassifySection classify;

  std::string system_name() const;
};

RunConfig defaults_for(Pipeline p);
// defaults for p, then the document; unknown keys, type mismatches and window violations throw
RunConfig parse_config(const json& doc, Pipeline p);
json load_json(const std::filesystem::path& path);
// canonical form, every key with its resolved value; parse_config reads it back unchanged
json config_to_json(const RunConfig& c);
void validate(const RunConfig& c);

// {"name", "d", "N", "F": [expr...], "x0", "xi0", "u0", "v0"}; F reads t, x, y, u1..uN,
// ux1..uxN, uy1..uyN; u0 entries are numbers or [re, im]
SystemSpec inline_system(const json& j);

struct CsvTable {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct RunOutput {
  json report;  // deterministic
  std::vector<CsvTable> series, fields;
  bool failed = false;  // positive preset missed its margin, or a suite criterion failed
  json timing = json::object();
};

RunOutput run_pipeline(const RunConfig& c);

// one-screen table built only from report fields
std::vector<std::string> summary_lines(const json& report);

std::string sha256_hex(const std::string& bytes);
std::string render_csv(const CsvTable& t);
std::string utc_stamp();
std::string report_bytes(const json& report);

// <out>/<stamp>-<report hash prefix>/{config.json, report.json, timing.json, series/, fields/}
std::filesystem::path write_run(const RunConfig& c, const RunOutput& r, const std::string& stamp);

// summary of a run directory; hash_ok compares report.json against the directory suffix
std::vector<std::string> summarize_run(const std::filesystem::path& dir, bool& hash_ok);

}  // namespace mlab
