// gammalab command line tool: build and inspect Markov triples, run checks.
//
// Exit status: 0 pass, 1 assertion failure, 2 usage or config error,
// 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gammalab/curvature.hpp"
#include "gammalab/experiment.hpp"
#include "gammalab/gauss.hpp"
#include "gammalab/semigroup.hpp"
#include "gammalab/spaces.hpp"
#include "gammalab/verifiers.hpp"

namespace fs = std::filesystem;
using namespace gammalab;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct GlobalFlags {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format = "csv";
  double tolerance_scale = 1.0;
};

void add_global_flags(CLI::App* cmd, GlobalFlags& flags) {
  cmd->add_option("--out", flags.out, "Output directory for summary.json and tables");
  cmd->add_option("--seed", flags.seed, "RNG seed (overrides the config)");
  cmd->add_option("--format", flags.format, "Table format")->check(CLI::IsMember({"csv", "json-lines"}));
  cmd->add_option("--tolerance-scale", flags.tolerance_scale, "Multiplier for tolerances of reported-only checks")
      ->check(CLI::PositiveNumber);
}

void apply_global_flags(ExperimentConfig& config, const GlobalFlags& flags) {
  if (!flags.out.empty()) config.out_dir = flags.out;
  if (flags.seed) config.seed = *flags.seed;
  if (flags.format != "csv" || config.format == OutputFormat::csv) config.format = parse_output_format(flags.format);
  if (flags.tolerance_scale != 1.0) config.tolerance_scale = flags.tolerance_scale;
}

// "2" -> "2.0" so that whole numbers still read as reals.
std::string format_real(double value) {
  std::string text = format_number(value);
  if (text.find_first_of(".eEIN") == std::string::npos) text += ".0";
  return text;
}

struct SpaceFlags {
  std::string model;
  double rho = 1.0;
  std::size_t n = 0;
  double R = 6.0;
  std::size_t d = 1;
};

void add_space_flags(CLI::App* cmd, SpaceFlags& flags) {
  cmd->add_option("--rho", flags.rho, "Rate (two_point, hypercube)");
  cmd->add_option("--n", flags.n, "Number of states (ou_chain, cycle, complete)");
  cmd->add_option("--R", flags.R, "Half width of the grid (ou_chain)");
  cmd->add_option("--d", flags.d, "Dimension (hypercube)");
}

SpaceSpec space_from_flags(const SpaceFlags& flags) {
  SpaceSpec spec;
  spec.model = parse_space_model(flags.model);
  spec.rate = flags.rho;
  if (flags.n > 0) {
    spec.size = flags.n;
  } else {
    spec.size = spec.model == SpaceModel::ou_chain ? 200 : (spec.model == SpaceModel::two_point ? 2 : 5);
  }
  spec.half_width = flags.R;
  spec.dimension = flags.d;
  spec.validate();
  return spec;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    const double value = std::stod(item, &used);
    if (used != item.size()) throw DomainError("bad number '" + item + "' in list");
    out.push_back(value);
  }
  if (out.empty()) throw DomainError("empty list");
  return out;
}

int print_case_lines(const ExperimentResult& result) {
  for (const CheckOutcome& check : result.checks) {
    std::printf("%s: %s\n", check.name.c_str(), std::string(to_string(check.status())).c_str());
    for (const CaseOutcome& c : check.cases) {
      if (c.skipped) {
        std::printf("  %-18s %-40s skipped (%s)\n", c.kind.c_str(), c.label.c_str(), c.note.c_str());
        continue;
      }
      const char* verdict = c.report.pass ? "ok" : (c.asserted ? "FAIL" : "exceeds");
      std::printf("  %-18s %-40s worst %s tol %s %s%s\n", c.kind.c_str(), c.label.c_str(),
                  format_number(c.report.worst_margin).c_str(), format_number(c.report.tolerance).c_str(), verdict,
                  c.asserted ? "" : " (reported)");
    }
  }
  return result.passed() ? kExitPass : kExitFail;
}

int cmd_build(const SpaceFlags& flags, const std::string& out) {
  const MarkovTriple triple = build_space(space_from_flags(flags));
  if (out.empty() || out == "-") {
    std::cout << serialize_triple(triple);
  } else {
    save_triple(triple, out);
  }
  return kExitPass;
}

int cmd_validate(const std::string& path, bool normalize) {
  const MarkovTriple triple = load_triple(path, normalize);
  std::printf("ok: %zu states, %zu edges\n", triple.size(), triple.edges().size());
  return kExitPass;
}

int cmd_curvature(const std::string& path, bool per_state) {
  const MarkovTriple triple = load_triple(path);
  const CurvatureReport report = curvature_global(triple);
  if (per_state) {
    std::printf("state,curvature,gamma_rank\n");
    for (const LocalCurvature& local : report.states) {
      std::printf("%zu,%s,%zu\n", local.state, format_number(local.curvature.as_double()).c_str(), local.gamma_rank);
    }
  }
  std::printf("%s\n", format_real(report.global.as_double()).c_str());
  return kExitPass;
}

int cmd_evolve(const std::string& path, const std::string& field, const std::string& times, std::uint64_t seed) {
  const MarkovTriple triple = load_triple(path);
  std::mt19937_64 rng(derive_seed(seed, 0, 0));
  const ScalarField f = make_field(triple, field, rng);
  const SpectralCache cache(triple);
  const ScalarField x = state_coordinates(triple);
  std::printf("state,coordinate,time,value\n");
  for (double t : parse_list(times)) {
    const ScalarField flow = cache.heat(f, t);
    for (Eigen::Index i = 0; i < flow.size(); ++i) {
      std::printf("%lld,%s,%s,%s\n", static_cast<long long>(i), format_number(x[i]).c_str(), format_number(t).c_str(),
                  format_number(flow[i]).c_str());
    }
  }
  return kExitPass;
}

int cmd_gauss_oracle(const std::vector<std::string>& intervals) {
  for (const std::string& text : intervals) {
    const GaussianSet g = gaussian_interval_oracle(IntervalUnion::parse(text));
    const double profile_value = isoperimetric_profile(std::clamp(g.mass, 0.0, 1.0));
    std::printf("%s: mass %.7f perimeter %.7f profile %.7f margin %s\n", text.c_str(), g.mass, g.perimeter, profile_value,
                format_number(profile_value - g.perimeter).c_str());
  }
  return kExitPass;
}

struct CheckFlags {
  std::string name;
  std::string space_file;
  SpaceFlags space;
  std::vector<std::string> fields;
  std::vector<std::string> phis;
  std::vector<std::string> alphas;
  std::string times;
  std::optional<double> horizon;
  std::optional<double> eps;
  std::optional<double> curvature;
  std::optional<double> expect;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> grid;
  std::vector<std::string> sets;
  std::vector<std::string> intervals;
  std::string assert_mode = "auto";
  std::optional<double> tolerance;
};

int cmd_check(const CheckFlags& flags, const GlobalFlags& global) {
  if (!is_check_name(flags.name)) throw ConfigError("unknown check '" + flags.name + "'");
  if (flags.name == "gauss-oracle" && !flags.intervals.empty() && global.out.empty()) {
    return cmd_gauss_oracle(flags.intervals);
  }
  ExperimentConfig config;
  config.source = "<command line>";
  CheckConfig check;
  check.name = flags.name;
  check.fields = flags.fields;
  check.phis = flags.phis;
  check.alphas = flags.alphas;
  if (!flags.times.empty()) check.times = parse_list(flags.times);
  check.horizon = flags.horizon;
  if (flags.eps) check.eps = *flags.eps;
  check.curvature = flags.curvature;
  check.expect = flags.expect;
  check.samples = flags.samples;
  if (flags.grid) check.grid = *flags.grid;
  check.sets = flags.sets;
  check.intervals = flags.intervals;
  check.assert_mode = flags.assert_mode == "true" ? AssertMode::always
                      : flags.assert_mode == "false" ? AssertMode::never
                                                     : AssertMode::automatic;
  if (flags.tolerance) check.tolerances.emplace_back("", *flags.tolerance);
  config.checks.push_back(check);
  apply_global_flags(config, global);

  std::optional<MarkovTriple> triple;
  if (!flags.space_file.empty()) {
    triple.emplace(load_triple(flags.space_file));
  } else if (!flags.space.model.empty()) {
    config.space = space_from_flags(flags.space);
  }
  const ExperimentResult result = run_experiment(config, triple ? &*triple : nullptr);
  if (!global.out.empty()) write_reports(result, global.out, config.format);
  return print_case_lines(result);
}

int cmd_run(const std::string& config_path, const GlobalFlags& global) {
  ExperimentConfig config = load_experiment(config_path);
  apply_global_flags(config, global);
  if (config.out_dir.empty()) config.out_dir = "gammalab-out";
  const ExperimentResult result = run_experiment(config);
  write_reports(result, config.out_dir, config.format);
  const int status = print_case_lines(result);
  std::printf("reports written to %s\n", config.out_dir.string().c_str());
  return status;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<fs::path> summaries;
  for (const std::string& input : inputs) {
    const fs::path path(input);
    summaries.push_back(fs::is_directory(path) ? path / "summary.json" : path);
  }
  const std::string merged = merge_summaries(summaries);
  if (out.empty() || out == "-") {
    std::cout << merged;
  } else {
    std::ofstream(out, std::ios::binary) << merged;
  }
  return merged.find("\"status\": \"fail\"") == std::string::npos ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gammalab: Gamma calculus, curvature and Bobkov inequality checks on finite Markov triples"};
  app.set_version_flag("--version", std::string(library_version()));
  app.require_subcommand(1);

  SpaceFlags build_flags;
  std::string build_out;
  auto* build = app.add_subcommand("build", "Build a model space and write it as a triple file");
  build->add_option("model", build_flags.model, "two_point | ou_chain | cycle | complete | hypercube")->required();
  add_space_flags(build, build_flags);
  build->add_option("-o,--output", build_out, "Output file (default: stdout)");

  std::string validate_path;
  bool validate_normalize = false;
  auto* validate = app.add_subcommand("validate", "Parse and validate a triple file");
  validate->add_option("space", validate_path, "Triple file")->required();
  validate->add_flag("--normalize", validate_normalize, "Rescale the measure to total mass one");

  std::string curvature_path;
  bool per_state = false;
  auto* curvature = app.add_subcommand("curvature", "Print the Bakry-Emery curvature constant of a triple file");
  curvature->add_option("space", curvature_path, "Triple file")->required();
  curvature->add_flag("--per-state", per_state, "Also print the curvature at every state");

  std::string evolve_path;
  std::string evolve_field = "random";
  std::string evolve_times = "0,0.1,0.5,1";
  std::uint64_t evolve_seed = 0;
  auto* evolve = app.add_subcommand("evolve", "Print H_t f on a time grid");
  evolve->add_option("space", evolve_path, "Triple file")->required();
  evolve->add_option("--field", evolve_field, "Field preset: random, constant:c, sigmoid:s:c, gauss-cdf:a:b, halfline:r, sin:w");
  evolve->add_option("--t", evolve_times, "Comma separated times");
  evolve->add_option("--seed", evolve_seed, "Seed for the random preset");

  CheckFlags check_flags;
  GlobalFlags check_global;
  auto* check = app.add_subcommand("check", "Run one check and print its cases");
  check->add_option("name", check_flags.name, "Check name")->required();
  check->add_option("space", check_flags.space_file, "Triple file");
  check->add_option("--model", check_flags.space.model, "Build this model instead of loading a file");
  add_space_flags(check, check_flags.space);
  check->add_option("--fields", check_flags.fields, "Field presets")->delimiter(',');
  check->add_option("--phi", check_flags.phis, "Weight presets (phi-trace)")->delimiter(',');
  check->add_option("--alpha", check_flags.alphas, "Alpha values or 1/K")->delimiter(',');
  check->add_option("--t", check_flags.times, "Comma separated times");
  check->add_option("--T", check_flags.horizon, "Horizon (phi-trace, zeta)");
  check->add_option("--eps", check_flags.eps, "Truncation level");
  check->add_option("--K", check_flags.curvature, "Curvature override");
  check->add_option("--expect", check_flags.expect, "Expected curvature (curvature check)");
  check->add_option("--samples", check_flags.samples, "Random samples");
  check->add_option("--grid", check_flags.grid, "Grid size (two-point-grid)");
  check->add_option("--sets", check_flags.sets, "Set presets: halfline:r, states:i,j");
  // Taken one string per occurrence: the default vector parsing would split "[-1,1]" as a list.
  check
      ->add_option_function<std::string>(
          "--intervals", [&check_flags](const std::string& text) { check_flags.intervals.push_back(text); },
          "Interval union, e.g. \"[-1,1] U [2,inf]\" (repeatable)")
      ->trigger_on_parse()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  check->add_option("--assert", check_flags.assert_mode, "auto | true | false")->check(CLI::IsMember({"auto", "true", "false"}));
  check->add_option("--tolerance", check_flags.tolerance, "Tolerance of the primary case kind");
  add_global_flags(check, check_global);

  std::string run_config;
  GlobalFlags run_global;
  auto* run = app.add_subcommand("run", "Run an experiment config and write reports");
  run->add_option("--config", run_config, "Experiment config file")->required();
  add_global_flags(run, run_global);

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge summary.json files of earlier runs");
  report->add_option("runs", report_inputs, "Run directories or summary files")->required();
  report->add_option("-o,--output", report_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (*build) return cmd_build(build_flags, build_out);
    if (*validate) return cmd_validate(validate_path, validate_normalize);
    if (*curvature) return cmd_curvature(curvature_path, per_state);
    if (*evolve) return cmd_evolve(evolve_path, evolve_field, evolve_times, evolve_seed);
    if (*check) return cmd_check(check_flags, check_global);
    if (*run) return cmd_run(run_config, run_global);
    if (*report) return cmd_report(report_inputs, report_out);
  } catch (const InvariantViolation& e) {
    std::fprintf(stderr, "invalid (%s): %s\n", e.invariant().c_str(), e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
