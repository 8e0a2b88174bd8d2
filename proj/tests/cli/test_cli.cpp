// Drives the built CLI binary end to end; the path comes from the build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "blipvar/rng.hpp"
#include "blipvar/simlab.hpp"

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout only
};

RunResult run_cli(const std::string& args) {
  const std::string command = std::string(BLIPVAR_CLI_PATH) + " " + args;
  std::array<char, 4096> buffer{};
  RunResult result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::size_t got = 0;
  while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    result.output.append(buffer.data(), got);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string data_path(const std::string& rel) {
  return std::string(BLIPVAR_DATA_DIR) + "/" + rel;
}

std::string write_case1_csv() {
  using namespace blipvar;
  DgpSpec spec;
  spec.kind = DgpKind::case1;
  spec.n = 1500;
  auto engine = make_engine(271);
  const auto [data, dgp] = draw_dataset(spec, engine);
  const std::string path = "/tmp/blipvar_cli_case1.csv";
  std::ofstream out(path);
  out << "Y,A,W1,W2,W3,W4\n";
  char line[160];
  for (int i = 0; i < data.n(); ++i) {
    std::snprintf(line, sizeof(line), "%g,%g,%.10g,%.10g,%.10g,%.10g\n", data.y[i],
                  data.a[i], data.w(i, 0), data.w(i, 1), data.w(i, 2), data.w(i, 3));
    out << line;
  }
  return path;
}

}  // namespace

TEST_CASE("estimate is byte-identical across runs with the same seed") {
  const std::string args = "estimate " + data_path("demo.csv") +
                           " --y Y --a A --w W1,W2,W3 --estimator cv-tmle --folds 5 "
                           "--seed 7 --sim-draws 200000";
  const auto first = run_cli(args);
  const auto second = run_cli(args);
  CHECK(first.exit_code == 0);
  CHECK(first.output == second.output);
  CHECK_FALSE(first.output.empty());
}

TEST_CASE("estimate JSON carries the documented schema") {
  const auto result = run_cli("estimate " + data_path("demo.csv") +
                              " --y Y --a A --w W1,W2,W3 --estimator lr-plugin "
                              "--seed 3 --sim-draws 100000 --sqrt-vte");
  REQUIRE(result.exit_code == 0);
  const auto j = nlohmann::json::parse(result.output);
  for (const char* key : {"estimator", "n", "alpha", "rows", "q_simultaneous", "seed"}) {
    CHECK(j.contains(key));
  }
  REQUIRE(j.at("rows").size() == 3);
  for (const auto& row : j.at("rows")) {
    for (const char* key : {"name", "est", "se", "lower", "upper", "lower_clamped",
                            "sim_lower", "sim_upper"}) {
      CHECK(row.contains(key));
    }
  }
  CHECK(j.at("estimator") == "lr-plugin");
}

TEST_CASE("a constant known propensity bypasses the g fit") {
  const auto result = run_cli("estimate " + data_path("demo.csv") +
                              " --y Y --a A --w W1,W2,W3 --estimator tmle "
                              "--known-g 0.5 --seed 3 --sim-draws 100000");
  CHECK(result.exit_code == 0);
}

TEST_CASE("continuous outcomes auto-scale and report in original units") {
  const auto result = run_cli("estimate " + data_path("demo_continuous.csv") +
                              " --y score --a arm --w W1,W2,W3 --estimator lr-plugin "
                              "--seed 3 --sim-draws 100000");
  REQUIRE(result.exit_code == 0);
  const auto j = nlohmann::json::parse(result.output);
  // The outcome spans roughly [2.5, 12.7]; a [0,1]-scale VTE would be < 0.25.
  CHECK(std::abs(j.at("rows")[0].at("est").get<double>()) < 11.0);
}

TEST_CASE("lr-plugin underestimates the case-1 VTE (single draw)") {
  const std::string csv = write_case1_csv();
  const auto result = run_cli("estimate " + csv +
                              " --y Y --a A --w W1,W2,W3,W4 --estimator lr-plugin "
                              "--seed 5 --sim-draws 100000");
  REQUIRE(result.exit_code == 0);
  const auto j = nlohmann::json::parse(result.output);
  double vte = 0.0;
  for (const auto& row : j.at("rows")) {
    if (row.at("name") == "VTE") vte = row.at("est").get<double>();
  }
  CHECK(vte < 0.085);  // oracle truth for case 1
  CHECK(vte >= 0.0);
}

TEST_CASE("exit codes distinguish io, validation and numeric errors") {
  CHECK(run_cli("estimate /tmp/nope_missing.csv --y Y --a A --w W1 2>/dev/null")
            .exit_code == 2);
  CHECK(run_cli("estimate " + data_path("demo.csv") +
                " --y nope --a A --w W1 2>/dev/null")
            .exit_code == 3);
  CHECK(run_cli("quantile --rho 2.0 2>/dev/null").exit_code != 0);
}

TEST_CASE("quantile matches the closed forms") {
  const auto rho1 = run_cli("quantile --rho 1 --draws 400000 --seed 9");
  REQUIRE(rho1.exit_code == 0);
  CHECK(std::abs(nlohmann::json::parse(rho1.output).at("q").get<double>() - 1.95996) <=
        0.005);
  const auto rho0 = run_cli("quantile --rho 0 --draws 400000 --seed 9");
  CHECK(std::abs(nlohmann::json::parse(rho0.output).at("q").get<double>() - 2.23648) <=
        0.005);
  const auto half = run_cli("quantile --rho 0 --alpha 0.5 --draws 400000 --seed 9");
  CHECK(std::abs(nlohmann::json::parse(half.output).at("q").get<double>() - 1.05180) <=
        0.005);
}

TEST_CASE("check-eic passes clean and fails under an injected sign flip") {
  const auto clean = run_cli("check-eic --cases 20 --seed 12");
  CHECK(clean.exit_code == 0);
  CHECK(clean.output.find("20/20") != std::string::npos);
  const auto broken = run_cli("check-eic --cases 5 --seed 12 --flip-d2-sign");
  CHECK(broken.exit_code == 1);
  CHECK(run_cli("check-eic --cases 0 2>/dev/null").exit_code != 0);  // usage error
}

TEST_CASE("simulate smoke run writes one raw row per replicate") {
  const auto result = run_cli("simulate " + data_path("configs/smoke.json") +
                              " --out-prefix /tmp/blipvar_cli_smoke");
  REQUIRE(result.exit_code == 0);
  std::ifstream raw("/tmp/blipvar_cli_smoke_raw_n300.csv");
  REQUIRE(raw.good());
  std::string line;
  int rows = 0;
  std::getline(raw, line);
  CHECK(line == "replicate,estimator,est_ate,est_vte,ci_lo,ci_hi,covered");
  while (std::getline(raw, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 1);
}

TEST_CASE("simulate rejects configs with missing fields by name") {
  const std::string path = "/tmp/blipvar_cli_bad_config.json";
  {
    std::ofstream out(path);
    out << R"({"spec": {"kind": "case1"}, "estimators": [{"kind": "lr-plugin"}],)"
        << R"( "n_grid": [50], "seed": 1})";  // reps missing
  }
  const auto result = run_cli("simulate " + path + " 2>&1");
  CHECK(result.exit_code == 3);
  CHECK(result.output.find("reps") != std::string::npos);
}
