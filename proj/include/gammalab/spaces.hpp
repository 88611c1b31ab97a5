#pragma once

// Model spaces and the plain-text triple file format.
//
// File layout (format version 1):
//
//   # comment lines start with '#'
//   format 1
//   [metadata]
//   <key> <value>
//   [states]
//   <id> <measure> [label]
//   [edges]
//   <i> <j> <rate_ij> <rate_ji> [length]
//
// States must be listed with ids 0..n-1 in order. Numbers are written with 17
// significant digits so that save(load(save(t))) reproduces the bytes of save(t).

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "gammalab/triple.hpp"

namespace gammalab {

enum class SpaceModel { two_point, ou_chain, cycle, complete, hypercube, file };

std::string_view to_string(SpaceModel model);
SpaceModel parse_space_model(std::string_view name);

struct SpaceSpec {
  SpaceModel model = SpaceModel::two_point;
  double rate = 1.0;         // rho, two_point / hypercube
  std::size_t size = 2;      // n, ou_chain / cycle / complete
  double half_width = 6.0;   // R, ou_chain
  std::size_t dimension = 1; // d, hypercube
  std::filesystem::path path;
  bool normalize = false;    // file

  // Throws DomainError naming the offending parameter.
  void validate() const;
};

inline constexpr std::size_t kMaxHypercubeDimension = 14;

MarkovTriple build_two_point(double rate);
MarkovTriple build_ou_chain(std::size_t n, double half_width);
MarkovTriple build_cycle(std::size_t n);
MarkovTriple build_complete(std::size_t n);
MarkovTriple build_hypercube(std::size_t dimension, double rate);
MarkovTriple build_space(const SpaceSpec& spec);

// Position of each state on the real line: the grid for ou_chain triples,
// the state index otherwise.
ScalarField state_coordinates(const MarkovTriple& triple);
// True when the triple was built as (or saved from) an ou_chain.
bool is_diffusion_chain(const MarkovTriple& triple);

std::string serialize_triple(const MarkovTriple& triple);
// Throws ParseError (with line and column) or InvariantViolation.
MarkovTriple parse_triple(std::string_view text, std::string_view source = "<memory>", bool normalize = false);

void save_triple(const MarkovTriple& triple, const std::filesystem::path& path);
MarkovTriple load_triple(const std::filesystem::path& path, bool normalize = false);

// Scientific notation with 17 significant digits, as used in triple files.
std::string format_exact(double value);

}  // namespace gammalab
