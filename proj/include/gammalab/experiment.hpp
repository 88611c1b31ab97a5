#pragma once

// Batch experiments: a declarative config names a space and a list of checks;
// run_experiment evaluates them on a worker pool and returns per-check margin
// tables plus a summary. Output is byte-identical for a given config and seed,
// whatever the number of workers.
//
// Config layout (format version 1, same family as triple files):
//
//   format 1
//   [space]
//   model ou_chain          # or two_point, cycle, complete, hypercube, file
//   n 200
//   R 6
//   [check bobkov-local]
//   alpha 0 1/K
//   t 0.1 0.5 1
//   [output]
//   seed 7
//   format csv
//
// Check keys: fields, phi, alpha, t, T, eps, K, samples, grid, sets,
// interval (repeatable, one union per line), expect, assert {auto,true,false},
// tolerance [kind] value.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gammalab/spaces.hpp"
#include "gammalab/triple.hpp"
#include "gammalab/verifiers.hpp"

namespace gammalab {

// Name of the environment variable holding the worker count.
inline constexpr const char* kWorkersEnv = "GAMMALAB_WORKERS";

std::string_view library_version();

enum class OutputFormat { csv, json_lines };
OutputFormat parse_output_format(std::string_view name);
std::string_view to_string(OutputFormat format);

enum class AssertMode { automatic, always, never };

// Known check names, in canonical order.
const std::vector<std::string>& check_names();
bool is_check_name(std::string_view name);

struct CheckConfig {
  std::string name;
  std::size_t line = 0;
  std::vector<std::string> fields;
  std::vector<std::string> phis;
  std::vector<std::string> alphas;  // numbers or "1/K"
  std::vector<double> times;
  std::optional<double> horizon;
  double eps = tolerance::default_truncation;
  std::optional<double> curvature;
  std::optional<std::size_t> samples;
  std::size_t grid = 201;
  std::vector<std::string> sets;
  std::vector<std::string> intervals;
  std::optional<double> expect;
  AssertMode assert_mode = AssertMode::automatic;
  // (kind, value); an empty kind addresses the check's primary case kind.
  std::vector<std::pair<std::string, double>> tolerances;
};

struct ExperimentConfig {
  std::string source = "<memory>";
  std::optional<SpaceSpec> space;
  std::vector<CheckConfig> checks;
  std::uint64_t seed = 0;
  OutputFormat format = OutputFormat::csv;
  std::filesystem::path out_dir;
  // Multiplies the tolerance of every case that is reported, not asserted.
  double tolerance_scale = 1.0;
};

// Throws ParseError with the line and column of the offending field.
ExperimentConfig parse_experiment(std::string_view text, std::string_view source = "<memory>",
                                  const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

enum class CheckStatus { pass, fail, reported, skipped };
std::string_view to_string(CheckStatus status);

struct CaseOutcome {
  std::string kind;
  std::string label;
  bool asserted = false;
  bool skipped = false;
  std::string note;
  VerifierReport report;
};

struct CheckOutcome {
  std::string name;
  std::string table_name;
  std::vector<std::pair<std::string, std::string>> parameters;
  std::vector<CaseOutcome> cases;

  CheckStatus status() const;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> space;
  std::size_t states = 0;
  // NEG_INF is carried as -infinity.
  std::optional<double> curvature;
  std::vector<CheckOutcome> checks;

  bool passed() const;
};

// Throws ConfigError for check/space incompatibilities, NumericError for
// numerical failures. `triple` overrides config.space when given.
ExperimentResult run_experiment(const ExperimentConfig& config, const MarkovTriple* triple = nullptr);

// Runs the experiment and writes summary.json plus one table per check into
// config.out_dir. Returns the process exit status (0 pass, 1 assertion failure).
int run_and_write(const ExperimentConfig& config, const MarkovTriple* triple = nullptr);

std::string summary_json(const ExperimentResult& result);
std::string format_table(const CheckOutcome& check, OutputFormat format);
void write_reports(const ExperimentResult& result, const std::filesystem::path& dir, OutputFormat format);

// Merges summary.json files of earlier runs into one JSON document.
std::string merge_summaries(const std::vector<std::filesystem::path>& summaries);

// 12 significant digits; -infinity renders as NEG_INF, +infinity as POS_INF.
// Throws NumericError for NaN.
std::string format_number(double value);

std::size_t worker_count();

// Deterministic random streams: one mt19937_64 per (seed, stream, substream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream);
double unit_uniform(std::mt19937_64& rng);

// Field presets: random, constant:c, sigmoid:s:c, gauss-cdf:a:b, halfline:r, sin:w.
// Coordinates come from state_coordinates. `rng` is used by "random" only.
ScalarField make_field(const MarkovTriple& triple, std::string_view spec, std::mt19937_64& rng);
// Set presets: halfline:r, states:i,j,...
StateSet make_set(const MarkovTriple& triple, std::string_view spec);

}  // namespace gammalab
