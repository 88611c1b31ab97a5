#include "gammalab/spaces.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace gammalab {

namespace {

std::string metadata_number(double value) { return format_exact(value); }

const std::string* find_meta(const MarkovTriple& triple, const std::string& key) {
  const auto it = triple.metadata().find(key);
  return it == triple.metadata().end() ? nullptr : &it->second;
}

struct Token {
  std::string_view text;
  std::size_t column;
};

std::vector<Token> split(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
    tokens.push_back(Token{line.substr(start, pos - start), start + 1});
  }
  return tokens;
}

class Parser {
 public:
  Parser(std::string_view source) : source_(source) {}

  [[noreturn]] void fail(std::size_t line, std::size_t column, const std::string& what) const {
    throw ParseError(std::string(source_), line, column, what);
  }

  double number(const Token& token, std::size_t line, const char* field) const {
    double value = 0.0;
    const auto* begin = token.text.data();
    const auto* end = begin + token.text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
      fail(line, token.column, std::string("expected a number for ") + field + ", got '" + std::string(token.text) + "'");
    }
    return value;
  }

  std::size_t index(const Token& token, std::size_t line, const char* field) const {
    std::size_t value = 0;
    const auto* begin = token.text.data();
    const auto* end = begin + token.text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
      fail(line, token.column, std::string("expected a state index for ") + field + ", got '" + std::string(token.text) + "'");
    }
    return value;
  }

 private:
  std::string_view source_;
};

}  // namespace

std::string_view to_string(SpaceModel model) {
  switch (model) {
    case SpaceModel::two_point: return "two_point";
    case SpaceModel::ou_chain: return "ou_chain";
    case SpaceModel::cycle: return "cycle";
    case SpaceModel::complete: return "complete";
    case SpaceModel::hypercube: return "hypercube";
    case SpaceModel::file: return "file";
  }
  return "unknown";
}

SpaceModel parse_space_model(std::string_view name) {
  for (SpaceModel model : {SpaceModel::two_point, SpaceModel::ou_chain, SpaceModel::cycle, SpaceModel::complete,
                           SpaceModel::hypercube, SpaceModel::file}) {
    if (to_string(model) == name) return model;
  }
  throw DomainError("unknown space model '" + std::string(name) + "'");
}

void SpaceSpec::validate() const {
  switch (model) {
    case SpaceModel::two_point:
      if (!(rate > 0.0)) throw DomainError("two_point: rho must be positive");
      break;
    case SpaceModel::ou_chain:
      if (size < 3) throw DomainError("ou_chain: n must be at least 3");
      if (!(half_width > 0.0)) throw DomainError("ou_chain: R must be positive");
      break;
    case SpaceModel::cycle:
      if (size < 2) throw DomainError("cycle: n must be at least 2");
      break;
    case SpaceModel::complete:
      if (size < 2) throw DomainError("complete: n must be at least 2");
      break;
    case SpaceModel::hypercube:
      if (dimension < 1 || dimension > kMaxHypercubeDimension) {
        throw DomainError("hypercube: d must be in [1, " + std::to_string(kMaxHypercubeDimension) + "]");
      }
      if (!(rate > 0.0)) throw DomainError("hypercube: rho must be positive");
      break;
    case SpaceModel::file:
      if (path.empty()) throw DomainError("file: path is required");
      break;
  }
}

MarkovTriple build_two_point(double rate) {
  SpaceSpec spec;
  spec.model = SpaceModel::two_point;
  spec.rate = rate;
  spec.validate();
  return MarkovTriple({0.5, 0.5}, {Edge{0, 1, rate, rate, 1.0}}, {},
                      {{"model", "two_point"}, {"rho", metadata_number(rate)}});
}

MarkovTriple build_ou_chain(std::size_t n, double half_width) {
  SpaceSpec spec;
  spec.model = SpaceModel::ou_chain;
  spec.size = n;
  spec.half_width = half_width;
  spec.validate();
  const double h = 2.0 * half_width / static_cast<double>(n - 1);
  std::vector<double> grid(n);
  std::vector<double> measure(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    grid[i] = -half_width + static_cast<double>(i) * h;
    measure[i] = std::exp(-0.5 * grid[i] * grid[i]);
    total += measure[i];
  }
  for (double& w : measure) w /= total;
  const double inv_h2 = 1.0 / (h * h);
  std::vector<Edge> edges;
  edges.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    // sqrt(m(i+1)/m(i)) from the unnormalized Gaussian weights.
    const double half_log_ratio = -0.25 * (grid[i + 1] * grid[i + 1] - grid[i] * grid[i]);
    edges.push_back(Edge{i, i + 1, inv_h2 * std::exp(half_log_ratio), inv_h2 * std::exp(-half_log_ratio), h});
  }
  return MarkovTriple(std::move(measure), std::move(edges), {},
                      {{"model", "ou_chain"}, {"n", std::to_string(n)}, {"R", metadata_number(half_width)}});
}

MarkovTriple build_cycle(std::size_t n) {
  SpaceSpec spec;
  spec.model = SpaceModel::cycle;
  spec.size = n;
  spec.validate();
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    if (n == 2 && i == 1) break;
    edges.push_back(Edge{i, j, 1.0, 1.0, 1.0});
  }
  return MarkovTriple(std::vector<double>(n, 1.0 / static_cast<double>(n)), std::move(edges), {},
                      {{"model", "cycle"}, {"n", std::to_string(n)}});
}

MarkovTriple build_complete(std::size_t n) {
  SpaceSpec spec;
  spec.model = SpaceModel::complete;
  spec.size = n;
  spec.validate();
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back(Edge{i, j, 1.0, 1.0, 1.0});
  }
  return MarkovTriple(std::vector<double>(n, 1.0 / static_cast<double>(n)), std::move(edges), {},
                      {{"model", "complete"}, {"n", std::to_string(n)}});
}

MarkovTriple build_hypercube(std::size_t dimension, double rate) {
  SpaceSpec spec;
  spec.model = SpaceModel::hypercube;
  spec.rate = rate;
  spec.dimension = dimension;
  spec.validate();
  const std::size_t n = std::size_t{1} << dimension;
  std::vector<Edge> edges;
  edges.reserve(n * dimension / 2);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t bit = 0; bit < dimension; ++bit) {
      const std::size_t y = x ^ (std::size_t{1} << bit);
      if (x < y) edges.push_back(Edge{x, y, rate, rate, 1.0});
    }
  }
  return MarkovTriple(std::vector<double>(n, 1.0 / static_cast<double>(n)), std::move(edges), {},
                      {{"model", "hypercube"}, {"d", std::to_string(dimension)}, {"rho", metadata_number(rate)}});
}

MarkovTriple build_space(const SpaceSpec& spec) {
  spec.validate();
  switch (spec.model) {
    case SpaceModel::two_point: return build_two_point(spec.rate);
    case SpaceModel::ou_chain: return build_ou_chain(spec.size, spec.half_width);
    case SpaceModel::cycle: return build_cycle(spec.size);
    case SpaceModel::complete: return build_complete(spec.size);
    case SpaceModel::hypercube: return build_hypercube(spec.dimension, spec.rate);
    case SpaceModel::file: return load_triple(spec.path, spec.normalize);
  }
  throw DomainError("unknown space model");
}

bool is_diffusion_chain(const MarkovTriple& triple) {
  const std::string* model = find_meta(triple, "model");
  return model != nullptr && *model == "ou_chain" && find_meta(triple, "R") != nullptr;
}

ScalarField state_coordinates(const MarkovTriple& triple) {
  const auto n = static_cast<Eigen::Index>(triple.size());
  ScalarField coords(n);
  if (is_diffusion_chain(triple)) {
    const double half_width = std::stod(*find_meta(triple, "R"));
    const double h = 2.0 * half_width / static_cast<double>(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) coords[i] = -half_width + static_cast<double>(i) * h;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) coords[i] = static_cast<double>(i);
  }
  return coords;
}

std::string format_exact(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.16e", value);
  return buffer;
}

std::string serialize_triple(const MarkovTriple& triple) {
  std::ostringstream out;
  out << "# gammalab markov triple\n";
  out << "format 1\n";
  out << "[metadata]\n";
  for (const auto& [key, value] : triple.metadata()) out << key << ' ' << value << '\n';
  out << "[states]\n";
  for (std::size_t x = 0; x < triple.size(); ++x) {
    out << x << ' ' << format_exact(triple.measure()[static_cast<Eigen::Index>(x)]);
    if (!triple.labels().empty()) out << ' ' << triple.labels()[x];
    out << '\n';
  }
  out << "[edges]\n";
  for (const Edge& e : triple.edges()) {
    out << e.i << ' ' << e.j << ' ' << format_exact(e.rate_ij) << ' ' << format_exact(e.rate_ji) << ' '
        << format_exact(e.length) << '\n';
  }
  return out.str();
}

MarkovTriple parse_triple(std::string_view text, std::string_view source, bool normalize) {
  const Parser parser(source);
  enum class Section { header, metadata, states, edges } section = Section::header;
  bool have_format = false;
  Metadata metadata;
  std::vector<double> measure;
  std::vector<std::string> labels;
  bool any_label = false;
  std::vector<Edge> edges;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto tokens = split(line);
    if (tokens.empty() || tokens[0].text.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const Token& head = tokens[0];
    if (head.text.front() == '[') {
      if (!have_format) parser.fail(line_no, head.column, "missing 'format 1' line before sections");
      if (head.text == "[metadata]") section = Section::metadata;
      else if (head.text == "[states]") section = Section::states;
      else if (head.text == "[edges]") section = Section::edges;
      else parser.fail(line_no, head.column, "unknown section " + std::string(head.text));
      continue;
    }
    switch (section) {
      case Section::header:
        if (head.text != "format" || tokens.size() != 2) parser.fail(line_no, head.column, "expected 'format 1'");
        if (tokens[1].text != "1") parser.fail(line_no, tokens[1].column, "unsupported format version " + std::string(tokens[1].text));
        have_format = true;
        break;
      case Section::metadata: {
        if (tokens.size() < 2) parser.fail(line_no, head.column, "metadata entry needs a key and a value");
        const std::size_t value_start = tokens[1].column - 1;
        std::string_view value = line.substr(value_start);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\r' || value.back() == '\t')) value.remove_suffix(1);
        metadata[std::string(head.text)] = std::string(value);
        break;
      }
      case Section::states: {
        if (tokens.size() < 2 || tokens.size() > 3) parser.fail(line_no, head.column, "state line is '<id> <measure> [label]'");
        const std::size_t id = parser.index(head, line_no, "state id");
        if (id != measure.size()) {
          parser.fail(line_no, head.column, "state ids must be consecutive from 0; expected " + std::to_string(measure.size()));
        }
        const double weight = parser.number(tokens[1], line_no, "measure");
        if (!(weight > 0.0) || !std::isfinite(weight)) {
          throw InvariantViolation("measure positivity", std::string(source) + ":" + std::to_string(line_no) +
                                                             ": state " + std::to_string(id) + " has weight " +
                                                             std::string(tokens[1].text));
        }
        measure.push_back(weight);
        labels.push_back(tokens.size() == 3 ? std::string(tokens[2].text) : std::string());
        any_label = any_label || tokens.size() == 3;
        break;
      }
      case Section::edges: {
        if (tokens.size() < 4 || tokens.size() > 5) {
          parser.fail(line_no, head.column, "edge line is '<i> <j> <rate_ij> <rate_ji> [length]'");
        }
        Edge e;
        e.i = parser.index(tokens[0], line_no, "i");
        e.j = parser.index(tokens[1], line_no, "j");
        e.rate_ij = parser.number(tokens[2], line_no, "rate_ij");
        e.rate_ji = parser.number(tokens[3], line_no, "rate_ji");
        e.length = tokens.size() == 5 ? parser.number(tokens[4], line_no, "length") : 1.0;
        if (e.rate_ij < 0.0 || e.rate_ji < 0.0) {
          throw InvariantViolation("generator positivity", std::string(source) + ":" + std::to_string(line_no) +
                                                               ": edge (" + std::to_string(e.i) + "," +
                                                               std::to_string(e.j) + ") has a negative rate");
        }
        edges.push_back(e);
        break;
      }
    }
    if (end == text.size()) break;
  }
  if (!have_format) parser.fail(line_no, 1, "missing 'format 1' line");
  if (measure.empty()) parser.fail(line_no, 1, "no states");
  if (any_label) {
    for (std::size_t x = 0; x < labels.size(); ++x) {
      if (labels[x].empty()) throw InvariantViolation("labels", "state " + std::to_string(x) + " has no label while others do");
    }
  } else {
    labels.clear();
  }
  return MarkovTriple(std::move(measure), std::move(edges), std::move(labels), std::move(metadata), normalize);
}

void save_triple(const MarkovTriple& triple, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << serialize_triple(triple);
  if (!out) throw Error("failed writing " + path.string());
}

MarkovTriple load_triple(const std::filesystem::path& path, bool normalize) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_triple(buffer.str(), path.string(), normalize);
}

}  // namespace gammalab
