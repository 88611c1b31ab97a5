#pragma once

// Finite reversible Markov triples and the first/second order Gamma calculus.
//
// A triple is a finite state space with a strictly positive probability
// measure m and a generator L satisfying detailed balance,
// m(x) L(x,y) = m(y) L(y,x). The generator is the Laplacian of the space:
// its spectrum is nonpositive and the heat flow is exp(tL).

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammalab/errors.hpp"

namespace gammalab {

// One real value per state. Size is checked against the triple by every operation.
using ScalarField = Eigen::VectorXd;

// Free-form key/value annotations (model name, construction parameters).
using Metadata = std::map<std::string, std::string>;

// Undirected edge of the support graph. Rates are the two off-diagonal
// generator entries L(i,j) and L(j,i).
struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  double rate_ij = 0.0;
  double rate_ji = 0.0;
  double length = 1.0;
};

struct Neighbor {
  std::size_t state;
  double rate;
  double length;
};

// Absolute/relative tolerance used for every construction-time check.
inline constexpr double kTripleTolerance = 1e-12;

class MarkovTriple {
 public:
  // Builds and validates a triple. Edges may be given in any order and
  // orientation; they are stored canonically with i < j, sorted. The measure
  // is rescaled to unit mass only when `normalize_measure` is set.
  MarkovTriple(std::vector<double> measure, std::vector<Edge> edges,
               std::vector<std::string> labels = {}, Metadata metadata = {},
               bool normalize_measure = false);

  // Builds a triple from a dense generator. Checks conservativity
  // (row sums zero) before the usual validation. Lengths default to 1.
  static MarkovTriple from_generator(const Eigen::MatrixXd& generator, std::vector<double> measure,
                                     bool normalize_measure = false);

  std::size_t size() const noexcept { return measure_.size(); }
  const Eigen::VectorXd& measure() const noexcept { return measure_; }
  std::span<const Neighbor> neighbors(std::size_t x) const;
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const Metadata& metadata() const noexcept { return metadata_; }

  // Off-diagonal rate L(x,y); zero when x and y are not adjacent.
  double rate(std::size_t x, std::size_t y) const;
  // -L(x,x), the total jump rate out of x.
  double total_rate(std::size_t x) const noexcept { return total_rate_[x]; }

  Eigen::MatrixXd generator_matrix() const;

  // Shortest-path distances from `source` over edge lengths.
  std::vector<double> path_distances(std::size_t source) const;

  void check_field(const ScalarField& f, const char* what = "field") const;
  void check_state(std::size_t x) const;

 private:
  void validate() const;

  Eigen::VectorXd measure_;
  std::vector<Edge> edges_;
  std::vector<std::string> labels_;
  Metadata metadata_;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
  std::vector<double> total_rate_;
};

// Integral against m.
double integral(const MarkovTriple& triple, const ScalarField& f);
// L^2(m) inner product and norm.
double inner(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g);
double l2_norm(const MarkovTriple& triple, const ScalarField& f);

// Carre du champ Gamma(f,g)(x) = 1/2 sum_y L(x,y) (f(y)-f(x)) (g(y)-g(x)).
ScalarField gamma(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g);
ScalarField gamma(const MarkovTriple& triple, const ScalarField& f);

// (Lf)(x) = sum_y L(x,y) (f(y)-f(x)).
ScalarField laplacian(const MarkovTriple& triple, const ScalarField& f);

// Pointwise iterated carre du champ
//   Gamma2(f,g) = 1/2 L Gamma(f,g) - 1/2 (Gamma(f, Lg) + Gamma(g, Lf)).
ScalarField gamma2(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g);
ScalarField gamma2(const MarkovTriple& triple, const ScalarField& f);

// Weak trilinear form
//   1/2 int [Gamma(f,g) L phi - (Gamma(f,Lg) + Gamma(g,Lf)) phi] dm.
double gamma2_weak_form(const MarkovTriple& triple, const ScalarField& f, const ScalarField& g,
                        const ScalarField& phi);

// Ch(f) = 1/2 int Gamma(f) dm.
double cheeger_energy(const MarkovTriple& triple, const ScalarField& f);
// sqrt(|f|^2_{L^2(m)} + 2 Ch(f)).
double v_norm(const MarkovTriple& triple, const ScalarField& f);

// Discrete slope: max over neighbors y of |f(y) - f(x)| / d(x,y).
ScalarField lip_slope(const MarkovTriple& triple, const ScalarField& f);

}  // namespace gammalab
