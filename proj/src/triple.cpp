#include "gammalab/triple.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>
#include <utility>

namespace gammalab {

namespace {

std::string edge_name(std::size_t i, std::size_t j) {
  std::ostringstream out;
  out << "edge (" << i << "," << j << ")";
  return out.str();
}

}  // namespace

MarkovTriple::MarkovTriple(std::vector<double> measure, std::vector<Edge> edges,
                           std::vector<std::string> labels, Metadata metadata,
                           bool normalize_measure)
    : labels_(std::move(labels)), metadata_(std::move(metadata)) {
  const std::size_t n = measure.size();
  if (n == 0) throw InvariantViolation("state count", "a triple needs at least one state");
  if (!labels_.empty() && labels_.size() != n) {
    throw InvariantViolation("labels", "expected " + std::to_string(n) + " labels, got " +
                                           std::to_string(labels_.size()));
  }
  for (std::size_t x = 0; x < n; ++x) {
    if (!std::isfinite(measure[x]) || measure[x] <= 0.0) {
      throw InvariantViolation("measure positivity",
                               "state " + std::to_string(x) + " has weight " + std::to_string(measure[x]));
    }
  }
  if (normalize_measure) {
    const double total = std::accumulate(measure.begin(), measure.end(), 0.0);
    for (double& w : measure) w /= total;
  }
  measure_ = Eigen::Map<const Eigen::VectorXd>(measure.data(), static_cast<Eigen::Index>(n));

  for (Edge& e : edges) {
    if (e.i >= n || e.j >= n || e.i == e.j) {
      throw InvariantViolation("state index", edge_name(e.i, e.j) + " is out of range or a loop");
    }
    if (e.i > e.j) {
      std::swap(e.i, e.j);
      std::swap(e.rate_ij, e.rate_ji);
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (edges[k].i == edges[k - 1].i && edges[k].j == edges[k - 1].j) {
      throw InvariantViolation("duplicate edge", edge_name(edges[k].i, edges[k].j) + " listed twice");
    }
  }
  for (const Edge& e : edges) {
    if (!std::isfinite(e.rate_ij) || !std::isfinite(e.rate_ji) || e.rate_ij < 0.0 || e.rate_ji < 0.0) {
      throw InvariantViolation("generator positivity", edge_name(e.i, e.j) + " has a negative or non-finite rate");
    }
    if (!std::isfinite(e.length) || e.length <= 0.0) {
      throw InvariantViolation("edge length positivity", edge_name(e.i, e.j) + " has length " +
                                                             std::to_string(e.length));
    }
  }
  std::erase_if(edges, [](const Edge& e) { return e.rate_ij == 0.0 && e.rate_ji == 0.0; });
  edges_ = std::move(edges);

  std::vector<std::size_t> degree(n, 0);
  for (const Edge& e : edges_) {
    ++degree[e.i];
    ++degree[e.j];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t x = 0; x < n; ++x) offsets_[x + 1] = offsets_[x] + degree[x];
  adjacency_.resize(offsets_[n]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const Edge& e : edges_) {
    adjacency_[fill[e.i]++] = Neighbor{e.j, e.rate_ij, e.length};
    adjacency_[fill[e.j]++] = Neighbor{e.i, e.rate_ji, e.length};
  }
  for (std::size_t x = 0; x < n; ++x) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[x]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[x + 1]),
              [](const Neighbor& a, const Neighbor& b) { return a.state < b.state; });
  }
  total_rate_.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    for (const Neighbor& nb : neighbors(x)) total_rate_[x] += nb.rate;
  }
  validate();
}

void MarkovTriple::validate() const {
  const std::size_t n = size();
  const double total = measure_.sum();
  if (std::abs(total - 1.0) > kTripleTolerance) {
    std::ostringstream out;
    out.precision(17);
    out << "weights sum to " << total;
    throw InvariantViolation("measure normalization", out.str());
  }
  for (const Edge& e : edges_) {
    const double forward = measure_[static_cast<Eigen::Index>(e.i)] * e.rate_ij;
    const double backward = measure_[static_cast<Eigen::Index>(e.j)] * e.rate_ji;
    if (std::abs(forward - backward) > kTripleTolerance * std::max(1.0, std::abs(forward))) {
      std::ostringstream out;
      out.precision(17);
      out << edge_name(e.i, e.j) << ": m(i)L(i,j) = " << forward << " but m(j)L(j,i) = " << backward;
      throw InvariantViolation("detailed balance", out.str());
    }
  }
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t x = stack.back();
    stack.pop_back();
    for (const Neighbor& nb : neighbors(x)) {
      if (!seen[nb.state]) {
        seen[nb.state] = 1;
        ++reached;
        stack.push_back(nb.state);
      }
    }
  }
  if (reached != n) {
    const auto it = std::find(seen.begin(), seen.end(), 0);
    throw InvariantViolation("connectivity", "state " + std::to_string(it - seen.begin()) +
                                                 " is not reachable from state 0");
  }
}

MarkovTriple MarkovTriple::from_generator(const Eigen::MatrixXd& generator, std::vector<double> measure,
                                          bool normalize_measure) {
  const auto n = static_cast<Eigen::Index>(measure.size());
  if (generator.rows() != n || generator.cols() != n) {
    throw DimensionError("generator is " + std::to_string(generator.rows()) + "x" +
                         std::to_string(generator.cols()) + " but the measure has " +
                         std::to_string(n) + " states");
  }
  for (Eigen::Index x = 0; x < n; ++x) {
    double off = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (y == x) continue;
      if (generator(x, y) < 0.0) {
        throw InvariantViolation("generator positivity", "L(" + std::to_string(x) + "," +
                                                             std::to_string(y) + ") is negative");
      }
      off += generator(x, y);
    }
    if (std::abs(off + generator(x, x)) > kTripleTolerance * std::max(1.0, off)) {
      throw InvariantViolation("generator conservativity",
                               "row " + std::to_string(x) + " does not sum to zero");
    }
  }
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (generator(i, j) > 0.0 || generator(j, i) > 0.0) {
        edges.push_back(Edge{static_cast<std::size_t>(i), static_cast<std::size_t>(j), generator(i, j),
                             generator(j, i), 1.0});
      }
    }
  }
  return MarkovTriple(std::move(measure), std::move(edges), {}, {}, normalize_measure);
}

std::span<const Neighbor> MarkovTriple::neighbors(std::size_t x) const {
  return {adjacency_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
}

double MarkovTriple::rate(std::size_t x, std::size_t y) const {
  check_state(x);
  check_state(y);
  const auto row = neighbors(x);
  const auto it = std::lower_bound(row.begin(), row.end(), y,
                                   [](const Neighbor& nb, std::size_t s) { return nb.state < s; });
  return (it != row.end() && it->state == y) ? it->rate : 0.0;
}

Eigen::MatrixXd MarkovTriple::generator_matrix() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd generator = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t x = 0; x < size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    for (const Neighbor& nb : neighbors(x)) generator(xi, static_cast<Eigen::Index>(nb.state)) = nb.rate;
    generator(xi, xi) = -total_rate_[x];
  }
  return generator;
}

std::vector<double> MarkovTriple::path_distances(std::size_t source) const {
  check_state(source);
  std::vector<double> dist(size(), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, x] = queue.top();
    queue.pop();
    if (d > dist[x]) continue;
    for (const Neighbor& nb : neighbors(x)) {
      const double candidate = d + nb.length;
      if (candidate < dist[nb.state]) {
        dist[nb.state] = candidate;
        queue.emplace(candidate, nb.state);
      }
    }
  }
  return dist;
}

void MarkovTriple::check_field(const ScalarField& f, const char* what) const {
  if (static_cast<std::size_t>(f.size()) != size()) {
    throw DimensionError(std::string(what) + " has " + std::to_string(f.size()) +
                         " entries but the triple has " + std::to_string(size()) + " states");
  }
  if (!f.allFinite()) throw DomainError(std::string(what) + " has non-finite entries");
}

void MarkovTriple::check_state(std::size_t x) const {
  if (x >= size()) {
    throw DomainError("state " + std::to_string(x) + " out of range for a triple with " +
                      std::to_string(size()) + " states");
  }
}

double integral(const MarkovTriple& triple, const ScalarField& f) {
  triple.check_field(f);
  return triple.measure().dot(f);
}

double inner(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g) {
  triple.check_field(f);
  triple.check_field(g);
  return triple.measure().dot(f.cwiseProduct(g));
}

double l2_norm(const MarkovTriple& triple, const ScalarField& f) { return std::sqrt(inner(triple, f, f)); }

ScalarField gamma(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g) {
  triple.check_field(f, "f");
  triple.check_field(g, "g");
  ScalarField out(f.size());
  for (std::size_t x = 0; x < triple.size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    double acc = 0.0;
    for (const Neighbor& nb : triple.neighbors(x)) {
      const auto y = static_cast<Eigen::Index>(nb.state);
      acc += nb.rate * (f[y] - f[xi]) * (g[y] - g[xi]);
    }
    out[xi] = 0.5 * acc;
  }
  return out;
}

ScalarField gamma(const MarkovTriple& triple, const ScalarField& f) { return gamma(triple, f, f); }

ScalarField laplacian(const MarkovTriple& triple, const ScalarField& f) {
  triple.check_field(f);
  ScalarField out(f.size());
  for (std::size_t x = 0; x < triple.size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    double acc = 0.0;
    for (const Neighbor& nb : triple.neighbors(x)) acc += nb.rate * (f[static_cast<Eigen::Index>(nb.state)] - f[xi]);
    out[xi] = acc;
  }
  return out;
}

ScalarField gamma2(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g) {
  const ScalarField lf = laplacian(triple, f);
  const ScalarField lg = laplacian(triple, g);
  return 0.5 * laplacian(triple, gamma(triple, f, g)) - 0.5 * (gamma(triple, f, lg) + gamma(triple, g, lf));
}

ScalarField gamma2(const MarkovTriple& triple, const ScalarField& f) {
  return 0.5 * laplacian(triple, gamma(triple, f)) - gamma(triple, f, laplacian(triple, f));
}

double gamma2_weak_form(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g,
                        const ScalarField& phi) {
  triple.check_field(phi, "phi");
  const ScalarField lf = laplacian(triple, f);
  const ScalarField lg = laplacian(triple, g);
  const ScalarField integrand = gamma(triple, f, g).cwiseProduct(laplacian(triple, phi)) -
                                (gamma(triple, f, lg) + gamma(triple, g, lf)).cwiseProduct(phi);
  return 0.5 * integral(triple, integrand);
}

double cheeger_energy(const MarkovTriple& triple, const ScalarField& f) {
  return 0.5 * integral(triple, gamma(triple, f));
}

double v_norm(const MarkovTriple& triple, const ScalarField& f) {
  return std::sqrt(inner(triple, f, f) + 2.0 * cheeger_energy(triple, f));
}

ScalarField lip_slope(const MarkovTriple& triple, const ScalarField& f) {
  triple.check_field(f);
  ScalarField out = ScalarField::Zero(f.size());
  for (std::size_t x = 0; x < triple.size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    for (const Neighbor& nb : triple.neighbors(x)) {
      out[xi] = std::max(out[xi], std::abs(f[static_cast<Eigen::Index>(nb.state)] - f[xi]) / nb.length);
    }
  }
  return out;
}

}  // namespace gammalab
