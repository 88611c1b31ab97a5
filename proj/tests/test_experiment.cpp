#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gammalab/experiment.hpp"
#include "json.hpp"

using namespace gammalab;
using json = nlohmann::json;

namespace {

std::string tables(const ExperimentResult& r) {
  std::string out;
  for (const auto& check : r.checks) out += format_table(check, OutputFormat::csv);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "NEG_INF");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "POS_INF");
  CHECK_THROWS_AS(format_number(std::nan("")), NumericError);
}

TEST_CASE("random streams") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  std::mt19937_64 rng(derive_seed(0, 0, 0));
  for (int i = 0; i < 1000; ++i) {
    const double u = unit_uniform(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("field and set presets") {
  const MarkovTriple ou = build_ou_chain(11, 5.0);
  std::mt19937_64 rng(1);
  const ScalarField s = make_field(ou, "sigmoid:2:0", rng);
  CHECK(s(5) == doctest::Approx(0.5));
  CHECK(s(10) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))));
  CHECK(make_field(ou, "constant:0.25", rng).cwiseAbs().maxCoeff() == 0.25);
  CHECK(make_field(ou, "gauss-cdf:1:0", rng)(5) == doctest::Approx(0.5));
  CHECK(make_field(ou, "halfline:0", rng).sum() == 6.0);
  const ScalarField r = make_field(ou, "random", rng);
  CHECK(r.minCoeff() >= 0.0);
  CHECK(r.maxCoeff() < 1.0);
  CHECK(make_set(ou, "halfline:0").size() == 6);
  CHECK(make_set(ou, "states:1,3") == StateSet{1, 3});
  CHECK_THROWS(make_field(ou, "sigmoid:2", rng));
  CHECK_THROWS(make_field(ou, "wave:1", rng));
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_experiment(
      "format 1\n# comment\n[space]\nmodel ou_chain\nn 50\nR 5\n[check bobkov-local]\nalpha 0 1/K\nt 0.1 0.5\n"
      "tolerance 1e-2\n[check isoperimetry]\nassert false\n[output]\nseed 9\nformat json-lines\n");
  REQUIRE(c.space.has_value());
  CHECK(c.space->model == SpaceModel::ou_chain);
  CHECK(c.space->size == 50);
  REQUIRE(c.checks.size() == 2);
  CHECK(c.checks[0].alphas == std::vector<std::string>{"0", "1/K"});
  CHECK(c.checks[0].times == std::vector<double>{0.1, 0.5});
  CHECK(c.checks[0].tolerances.size() == 1);
  CHECK(c.checks[1].assert_mode == AssertMode::never);
  CHECK(c.seed == 9);
  CHECK(c.format == OutputFormat::json_lines);

  auto error_at = [](const std::string& text) {
    try {
      parse_experiment(text, "cfg");
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_at("[space]\n").find("cfg:1") != std::string::npos);
  CHECK(error_at("format 1\n[space]\nmodel ou_chain\n[check isoperimetry]\nasert true\n").find("cfg:5:1") !=
        std::string::npos);
  CHECK(error_at("format 1\n[check nonsense]\n").find("cfg:2") != std::string::npos);
  CHECK(error_at("format 1\n[space]\nmodel two_point\nrho abc\n").find("cfg:4:5") != std::string::npos);
}

TEST_CASE("two-point curvature and grid") {
  const ExperimentConfig c = parse_experiment(
      "format 1\n[space]\nmodel two_point\nrho 1\n[check curvature]\nexpect 2\n[check two-point-grid]\ngrid 51\n");
  const ExperimentResult r = run_experiment(c);
  CHECK(r.passed());
  REQUIRE(r.curvature.has_value());
  CHECK(std::abs(*r.curvature - 2.0) <= 1e-12);
  const json summary = json::parse(summary_json(r));
  CHECK(summary["status"] == "pass");
  CHECK(summary["checks"][1]["name"] == "two-point-grid");
  CHECK(summary["checks"][1]["status"] == "pass");
}

TEST_CASE("OU local inequality run") {
  const ExperimentConfig c = parse_experiment(
      "format 1\n[space]\nmodel ou_chain\nn 200\nR 6\n[check bobkov-local]\nalpha 0 1/K\nt 0.1 0.5 1\n");
  const ExperimentResult r = run_experiment(c);
  CHECK(r.passed());
  const json summary = json::parse(summary_json(r));
  CHECK(summary["checks"][0]["worst_asserted_margin"].get<double>() <= 5e-3);
}

TEST_CASE("incompatible assertions are refused") {
  const ExperimentConfig c =
      parse_experiment("format 1\n[space]\nmodel complete\nn 4\n[check isoperimetry]\nassert true\n");
  try {
    run_experiment(c);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("check/space incompatibility") != std::string::npos);
  }
  const ExperimentConfig grid = parse_experiment("format 1\n[space]\nmodel cycle\nn 5\n[check two-point-grid]\n");
  CHECK_THROWS_AS(run_experiment(grid), ConfigError);
}

TEST_CASE("an exceeded tolerance fails the run") {
  const ExperimentConfig c = parse_experiment(
      "format 1\n[space]\nmodel two_point\nrho 1\n[check curvature]\nexpect 3\n");
  const ExperimentResult r = run_experiment(c);
  CHECK_FALSE(r.passed());
  CHECK(r.checks[0].status() == CheckStatus::fail);
}

TEST_CASE("determinism across seeds and workers") {
  const std::string text =
      "format 1\n[space]\nmodel cycle\nn 5\n[check gradient-estimate]\nsamples 20\n[check bobkov-local]\n"
      "fields random\nsamples 6\n[output]\nseed 42\n";
  const ExperimentConfig c = parse_experiment(text);
  setenv(kWorkersEnv, "1", 1);
  const std::string serial = tables(run_experiment(c));
  const std::string serial_again = tables(run_experiment(c));
  setenv(kWorkersEnv, "6", 1);
  const std::string parallel = tables(run_experiment(c));
  unsetenv(kWorkersEnv);
  CHECK(serial == serial_again);
  CHECK(serial == parallel);
  ExperimentConfig other = c;
  other.seed = 43;
  CHECK(tables(run_experiment(other)) != serial);
}

TEST_CASE("reports on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "gammalab_reports_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig c = parse_experiment(
      "format 1\n[space]\nmodel two_point\n[check curvature]\n[check curvature]\nexpect 2\n[check gauss-oracle]\n"
      "samples 50\n");
  c.out_dir = dir;
  CHECK(run_and_write(c) == 0);
  CHECK(std::filesystem::exists(dir / "summary.json"));
  CHECK(std::filesystem::exists(dir / "curvature.csv"));
  CHECK(std::filesystem::exists(dir / "curvature-2.csv"));
  CHECK(slurp(dir / "gauss-oracle.csv").rfind("check,state,time,margin,lhs,rhs\n", 0) == 0);
  const json merged = json::parse(merge_summaries({dir / "summary.json", dir / "summary.json"}));
  CHECK(merged["status"] == "pass");
  CHECK(merged["checks"].size() == 6);
  std::filesystem::remove_all(dir);
}
