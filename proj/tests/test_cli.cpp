#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "compglm/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "compglm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = compglm::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("compglm_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) { return compglm::csv::read_file(p); }

// Simulated data shared by the fit / infer cases.
const fs::path& simulated() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("sim");
    const RunResult r = run_cli({"simulate", "--n", "200", "--seed", "3", "--out", d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli: usage errors exit 1 with error JSON") {
  const RunResult r = run_cli({"fit", "--bogus"});
  CHECK(r.code == compglm::cli::kExitUserError);
  const json j = json::parse(r.out);
  CHECK(j["error"]["kind"] == "usage");
  CHECK(j["schema_version"] == compglm::cli::kSchemaVersion);
  CHECK(run_cli({}).code == compglm::cli::kExitUserError);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("cli: missing input file is an io error") {
  const fs::path out = fresh_dir("missing");
  const RunResult r = run_cli({"fit", "--data", "/nonexistent/a.csv", "--response", "/nonexistent/y.csv",
                               "--out", out.string()});
  CHECK(r.code == compglm::cli::kExitUserError);
  CHECK(json::parse(r.out)["error"]["kind"] == "io");
}

TEST_CASE("cli: simulate writes the exact class split") {
  const fs::path d = fresh_dir("sim500");
  REQUIRE(run_cli({"simulate", "--n", "500", "--seed", "8", "--out", d.string()}).code == 0);
  const auto rows = compglm::csv::parse(slurp(d / "response.csv"));
  REQUIRE(rows.size() == 501);
  int cases = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) cases += rows[i][1] == "1";
  CHECK(cases == 200);
  for (const char* f : {"abundance.csv", "design.csv", "beta_true.csv", "groups.json", "config.json"})
    CHECK(fs::exists(d / f));
  const json cfg = json::parse(slurp(d / "config.json"));
  CHECK(cfg["command"] == "simulate");
  CHECK(cfg["generator"].get<std::string>().find("mt19937_64") != std::string::npos);
}

TEST_CASE("cli: fit writes the path and the selected fit") {
  const fs::path sim = simulated();
  const fs::path out = fresh_dir("fit");
  const RunResult r = run_cli({"fit", "--data", (sim / "abundance.csv").string(), "--response",
                               (sim / "response.csv").string(), "--constraints",
                               (sim / "groups.json").string(), "--out", out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  CHECK(r.err.find("done in") != std::string::npos);
  const auto rows = compglm::csv::parse(slurp(out / "path.csv"));
  REQUIRE(rows.size() == 51);
  CHECK(rows[0] == compglm::csv::Row{"index", "lambda", "ebic", "support_size", "candidate", "selected",
                                     "converged", "iterations", "kkt_residual"});
  int selected = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) selected += rows[i][5] == "true";
  CHECK(selected == 1);
  const json j = json::parse(slurp(out / "fit.json"));
  CHECK(j["schema_version"] == compglm::cli::kSchemaVersion);
  CHECK(j["command"] == "fit");
  CHECK(j.contains("config"));
}

TEST_CASE("cli: infer intervals and byte-identical re-runs") {
  const fs::path sim = simulated();
  std::vector<std::string> base{"infer", "--data", (sim / "abundance.csv").string(), "--response",
                                (sim / "response.csv").string(), "--constraints",
                                (sim / "groups.json").string()};
  const fs::path a = fresh_dir("infer_a"), b = fresh_dir("infer_b");
  auto args_a = base, args_b = base;
  args_a.insert(args_a.end(), {"--out", a.string()});
  args_b.insert(args_b.end(), {"--out", b.string()});
  REQUIRE(run_cli(args_a).code == 0);
  REQUIRE(run_cli(args_b).code == 0);

  const json j = json::parse(slurp(a / "inference.json"));
  CHECK(j["result"]["z_multiplier"].get<double>() == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(j["result"]["constraint_residual"].get<double>() <= 1e-8);

  const auto rows = compglm::csv::parse(slurp(a / "intervals.csv"));
  REQUIRE(rows.size() == 51);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    double lo = 0.0, hi = 0.0;
    REQUIRE(compglm::csv::parse_double(rows[i][4], lo));
    REQUIRE(compglm::csv::parse_double(rows[i][5], hi));
    CHECK((rows[i][6] == "true") == (lo > 0.0 || hi < 0.0));
  }

  // Outputs other than the envelope's out path are identical.
  CHECK(slurp(a / "intervals.csv") == slurp(b / "intervals.csv"));
  CHECK(slurp(a / "path.csv") == slurp(b / "path.csv"));
  json ja = json::parse(slurp(a / "inference.json")), jb = json::parse(slurp(b / "inference.json"));
  ja["config"].erase("out");
  jb["config"].erase("out");
  CHECK(ja.dump() == jb.dump());
}

TEST_CASE("cli: bad constraint JSON and response mismatch") {
  const fs::path sim = simulated();
  const fs::path tmp = fresh_dir("bad");
  compglm::csv::write_file(tmp / "groups.json", "[[1,2");
  RunResult r = run_cli({"fit", "--data", (sim / "abundance.csv").string(), "--response",
                         (sim / "response.csv").string(), "--constraints", (tmp / "groups.json").string(),
                         "--out", tmp.string()});
  CHECK(r.code == compglm::cli::kExitUserError);
  CHECK(json::parse(r.out)["error"]["kind"] == "parse");

  compglm::csv::write_file(tmp / "y.csv", "sample_id,y\nnobody,1\n");
  r = run_cli({"fit", "--data", (sim / "abundance.csv").string(), "--response", (tmp / "y.csv").string(),
               "--out", tmp.string()});
  CHECK(r.code == compglm::cli::kExitUserError);
}
