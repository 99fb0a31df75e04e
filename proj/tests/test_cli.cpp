#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "mlab/cli_io.hpp"

using namespace mlab;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

bool mentions(const std::string& msg, const char* what) { return msg.find(what) != std::string::npos; }

}  // namespace

TEST_CASE("j ranges") {
  CHECK(parse_j_range("6..9") == std::vector<int>{6, 7, 8, 9});
  CHECK(parse_j_range("6-8") == std::vector<int>{6, 7, 8});
  CHECK(parse_j_range("6,8,9") == std::vector<int>{6, 8, 9});
  CHECK(parse_j_range("7") == std::vector<int>{7});
  CHECK_THROWS_AS(parse_j_range("9..6"), Error);
  CHECK_THROWS_AS(parse_j_range("a..b"), Error);
  CHECK_THROWS_AS(parse_j_range(""), Error);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK(mentions(error_of([] { parse_config(json{{"sigmaa", 3.0}}, Pipeline::elliptic); }),
                 "unknown config key 'sigmaa'"));
  CHECK(mentions(error_of([] { parse_config(json{{"datum", {{"JJ", 3}}}}, Pipeline::elliptic); }),
                 "unknown config key 'datum.JJ'"));
  CHECK(mentions(error_of([] { parse_config(json{{"endgame", {{"nt", 8}, {"x", 1}}}}, Pipeline::transition); }),
                 "endgame.x"));
}

TEST_CASE("types and pipeline are checked") {
  CHECK(mentions(error_of([] { parse_config(json{{"s", "2.5"}}, Pipeline::elliptic); }), "must be a number"));
  CHECK(mentions(error_of([] { parse_config(json{{"k", 2.5}}, Pipeline::elliptic); }), "must be an integer"));
  CHECK(mentions(error_of([] { parse_config(json{{"pipeline", "transition"}}, Pipeline::elliptic); }),
                 "does not match"));
  CHECK_THROWS_AS(parse_config(json{{"preset", "nope"}}, Pipeline::classify), Error);
}

TEST_CASE("parameter windows are enforced up front") {
  // s = 1 + d/2 exactly
  CHECK(mentions(error_of([] { parse_config(json{{"s", 1.5}, {"sigma", 1.5}}, Pipeline::elliptic); }),
                 "s > 1 + d/2"));
  CHECK(mentions(error_of([] { parse_config(json{{"s", 2.5}, {"sigma", 3.5}}, Pipeline::elliptic); }),
                 "sigma < 2s - 1 - d/2"));
  CHECK(mentions(error_of([] { parse_config(json{{"s", 2.5}}, Pipeline::transition); }),
                 "s > 3/2 + 3/4 + d/2"));
  // d = 2 preset shifts the window
  CHECK(mentions(error_of([] {
                   parse_config(json{{"preset", "rotating-elliptic"}, {"s", 2.0}, {"sigma", 2.0}},
                                Pipeline::elliptic);
                 }),
                 "s > 1 + d/2"));
  CHECK_NOTHROW(parse_config(json{{"s", 2.5}, {"sigma", 2.5}}, Pipeline::elliptic));
  // windows only bind the endgame pipelines
  CHECK_NOTHROW(parse_config(json{{"s", 1.0}}, Pipeline::calculus));
}

TEST_CASE("canonical config round trips") {
  json doc = {{"preset", "cr-elliptic"}, {"j", "6..8"}, {"sigma", 3.0}, {"datum", {{"J", 12}}},
              {"audit", {{"enabled", true}, {"nodes", 6}}}};
  RunConfig c = parse_config(doc, Pipeline::elliptic);
  CHECK(c.js == std::vector<int>{6, 7, 8});
  CHECK(c.datum.J == 12);
  CHECK(c.datum.sigma == 3.0);
  CHECK(c.audit.enabled);
  json canon = config_to_json(c);
  CHECK(config_to_json(parse_config(canon, Pipeline::elliptic)) == canon);
}

TEST_CASE("inline systems") {
  json sys = {{"name", "inline-burgers"}, {"d", 1}, {"N", 2},
              {"F", {"u1*ux1 + u2*ux2", "-u2*ux1 + u1*ux2 - 1"}}, {"u0", {1, 0}}};
  RunConfig c = parse_config(json{{"system", sys}}, Pipeline::classify);
  RunOutput r = run_pipeline(c);
  const json& a2 = r.report["results"]["assumption2"];
  CHECK(a2["holds"].get<bool>());
  CHECK(a2["margins"]["transversality"].get<double>() == doctest::Approx(4.0).epsilon(1e-3));

  json bad = sys;
  bad["F"] = {"u1*ux1 + q", "u2"};
  CHECK_THROWS(parse_config(json{{"system", bad}}, Pipeline::classify));
  bad = sys;
  bad["F"] = {"u1"};
  CHECK(mentions(error_of([&] { parse_config(json{{"system", bad}}, Pipeline::classify); }), "system.F"));
  bad = sys;
  bad["extra"] = 1;
  CHECK(mentions(error_of([&] { parse_config(json{{"system", bad}}, Pipeline::classify); }),
                 "system.extra"));
  CHECK(mentions(error_of([&] {
                   parse_config(json{{"system", sys}, {"preset", "cr-elliptic"}}, Pipeline::classify);
                 }),
                 "both"));
}

TEST_CASE("classification verdicts of the presets") {
  auto run = [](const char* preset) {
    return run_pipeline(parse_config(json{{"preset", preset}}, Pipeline::classify)).report["results"];
  };
  CHECK(run("paper-3x3-elliptic")["assumption1"]["verdict"] == "elliptic");
  CHECK(run("cr-elliptic")["assumption1"]["verdict"] == "elliptic");
  auto b = run("burgers-transition");
  CHECK(b["assumption1"]["verdict"] == "hyperbolic");
  for (const char* k : {"i", "ii", "iii", "iv"}) CHECK(b["assumption2"][k] == "pass");
  auto s = run("symmetric-hyperbolic");
  CHECK(s["assumption1"]["verdict"] == "hyperbolic");
  CHECK_FALSE(s["assumption2"]["holds"].get<bool>());
}

TEST_CASE("sha256 and csv") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CsvTable t{"x", {"a", "b"}, {{1.0, 0.5}, {2.0, std::nan("")}}};
  CHECK(render_csv(t) == "a,b\n1,0.5\n2,nan\n");
}

TEST_CASE("run directories replay to the same hash") {
  fs::path root = fs::temp_directory_path() / "mlab_cli_test";
  fs::remove_all(root);
  json doc = {{"preset", "burgers-transition"}, {"out", root.string()}};
  RunConfig c = parse_config(doc, Pipeline::classify);
  RunOutput a = run_pipeline(c), b = run_pipeline(c);
  CHECK(report_bytes(a.report) == report_bytes(b.report));
  fs::path d1 = write_run(c, a, "20000101T000000Z");
  // the written config reproduces the report
  json back = load_json(d1 / "config.json");
  RunOutput r = run_pipeline(parse_config(back, Pipeline::classify));
  fs::path d2 = write_run(c, r, "20000101T000001Z");
  CHECK(d1.filename().string().substr(17) == d2.filename().string().substr(17));
  bool ok = false;
  auto lines = summarize_run(d1, ok);
  CHECK(ok);
  CHECK_FALSE(lines.empty());
  // tampering breaks the hash
  std::ofstream(d2 / "report.json", std::ios::app) << " ";
  summarize_run(d2, ok);
  CHECK_FALSE(ok);
  fs::remove_all(root);
}

TEST_CASE("datum pipeline writes headed series") {
  fs::path root = fs::temp_directory_path() / "mlab_cli_datum";
  fs::remove_all(root);
  RunConfig c = parse_config(json{{"out", root.string()}, {"j", "5..6"}}, Pipeline::datum);
  RunOutput r = run_pipeline(c);
  fs::path d = write_run(c, r, "20000101T000000Z");
  std::ifstream in(d / "series" / "blocks.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "j,norm,ratio,leak");
  CHECK(fs::exists(d / "fields" / "datum.csv"));
  CHECK(r.report["results"]["blocks"]["spread"].get<double>() <= 2.0);
  fs::remove_all(root);
}
