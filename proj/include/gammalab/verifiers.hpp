#pragma once

// Inequality checks built on the Gamma calculus: local and global Bobkov
// inequalities, the interpolation objects used in their semigroup proof
// (Psi, zeta, Phi), discrete total variation / perimeter and the Gaussian
// isoperimetric inequality.
//
// Margins are signed so that a positive value is a violation:
// margin = lhs - rhs for an inequality lhs <= rhs.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gammalab/curvature.hpp"
#include "gammalab/semigroup.hpp"
#include "gammalab/triple.hpp"

namespace gammalab {

// Default tolerances of the assertion policy. Inequalities that hold on every
// finite chain with the computed curvature are asserted at roundoff level;
// those whose proofs need a diffusion chain rule are asserted only on
// discretized Ornstein-Uhlenbeck chains, at discretization level.
namespace tolerance {
inline constexpr double gradient_estimate = 1e-9;
inline constexpr double variance_bound = 1e-9;
inline constexpr double mass_identity = 1e-10;
inline constexpr double two_point_bobkov = 1e-12;
inline constexpr double bobkov_global_chain = 1e-3;
inline constexpr double bobkov_local_chain = 5e-3;
inline constexpr double bobkov_local_start = 1e-12;
inline constexpr double zeta_agreement = 1e-10;
inline constexpr double zeta_chain = 5e-3;
inline constexpr double phi_endpoint = 1e-10;
inline constexpr double phi_derivative_chain = 1e-4;
inline constexpr double discriminant = 1e-10;
inline constexpr double isoperimetric_relative = 0.02;
inline constexpr double default_truncation = 1e-4;
}  // namespace tolerance

struct MarginRow {
  std::optional<std::size_t> state;
  std::optional<double> time;
  double margin = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct VerifierReport {
  std::string name;
  std::vector<std::pair<std::string, std::string>> parameters;
  std::vector<MarginRow> rows;
  double worst_margin = 0.0;
  std::optional<std::size_t> worst_state;
  std::optional<double> worst_time;
  double mean_margin = 0.0;
  std::size_t samples = 0;
  double tolerance = 0.0;
  bool pass = false;

  void add_parameter(std::string key, double value);
  void add_parameter(std::string key, std::string value);
  void add_row(const MarginRow& row);
  // Recomputes the summary from the rows; pass iff worst_margin <= tolerance.
  void finalize(double tol);
};

// max(min(f, 1 - eps), eps) for f with values in [0,1] and eps in (0, 1/2).
ScalarField truncate(const ScalarField& f, double eps);

// Psi(t,u,v) = sqrt(I(u)^2 + c_alpha(t) v) with its first and second partials.
struct PsiDerivatives {
  double value = 0.0;
  double dt = 0.0;
  double du = 0.0;
  double dv = 0.0;
  double duu = 0.0;
  double duv = 0.0;
  double dvv = 0.0;
};
PsiDerivatives psi(double t, double u, double v, double curvature, double alpha);

struct ZetaField {
  // The defining sum of six terms.
  ScalarField six_term;
  // Psi^{-3} times the simplified closed form.
  ScalarField closed_form;
  // closed_form, with the Gamma(Gamma g) contribution dropped where Gamma(g) = 0.
  ScalarField field;
  // I(g)^2 Gamma(Gamma g) / (4 Gamma g) - I'(g) I(g) Gamma(g, Gamma g) + I'(g)^2 Gamma(g)^2 where Gamma(g) > 0.
  ScalarField quadratic_form;
  // States with Gamma(g) = 0, and the subset where Gamma(Gamma g) > 0 there.
  std::vector<std::size_t> flat_states;
  std::vector<std::size_t> unresolved_states;

  // max_x |six_term - closed_form| / max(1, |six_term|, |closed_form|)
  double relative_disagreement() const;
};

// zeta at time t for g = H_{T-t} f. f must take values in (0,1); 0 < t < T.
ZetaField zeta_field(const SpectralCache& cache, const ScalarField& f, double horizon, double t, double alpha,
                     Curvature curvature);

struct PhiTrace {
  std::vector<double> times;
  std::vector<double> values;
  // Central differences of Phi.
  std::vector<double> derivatives;
  // int zeta H_t phi dm.
  std::vector<double> lower_bounds;
  double start = 0.0;  // Phi(0)
  double end = 0.0;    // Phi(T)
  // int [H_T sqrt(I^2(f) + c(T) Gamma f) - sqrt(I^2(H_T f) + alpha Gamma(H_T f))] phi dm
  double endpoint_rhs = 0.0;
  double endpoint_residual = 0.0;
  // max over the grid of lower_bound - derivative.
  double worst_derivative_gap = 0.0;
};

// Phi(t) = int H_t(Psi(t, H_{T-t} f, Gamma(H_{T-t} f))) phi dm on a grid inside (0,T).
PhiTrace phi_trace(const SpectralCache& cache, const ScalarField& f, const ScalarField& phi, double horizon,
                   double alpha, Curvature curvature, std::span<const double> times);

// sqrt(I^2(H_t f) + alpha Gamma(H_t f)) <= H_t sqrt(I^2(f) + c_alpha(t) Gamma(f)) on a time grid,
// after truncating f to [eps, 1 - eps].
VerifierReport bobkov_local(const SpectralCache& cache, const ScalarField& f, double alpha, Curvature curvature,
                            std::span<const double> times, double eps = tolerance::default_truncation,
                            double tol = tolerance::bobkov_local_chain);

// sqrt(K) I(int f dm) <= int sqrt(K I^2(f) + Gamma(f)) dm, for K > 0.
VerifierReport bobkov_global(const MarkovTriple& triple, const ScalarField& f, double curvature,
                             double tol = tolerance::bobkov_global_chain);

// I((a+b)/2) - [ sqrt(I^2(a) + (a-b)^2/4) + sqrt(I^2(b) + (a-b)^2/4) ] / 2.
double two_point_bobkov_margin(double a, double b);

using StateSet = std::vector<std::size_t>;
ScalarField indicator(const MarkovTriple& triple, const StateSet& set);
double measure_of(const MarkovTriple& triple, const StateSet& set);

// Sum over edges of omega(x,y) |f(y) - f(x)| with
// omega(x,y) = sqrt(m(x) L(x,y) m(y) L(y,x)) d(x,y).
double total_variation(const MarkovTriple& triple, const ScalarField& f);
double perimeter(const MarkovTriple& triple, const StateSet& set);

// sqrt(K) I(m(E)) <= P(E). The tolerance is relative to sqrt(K) I(m(E)).
VerifierReport isoperimetric_margin(const MarkovTriple& triple, const StateSet& set, double curvature,
                                    double relative_tol = tolerance::isoperimetric_relative);

// sqrt(K) I(int f) - [ sqrt(K) int I(f) dm + TV(f) ].
double bv_corollary_margin(const MarkovTriple& triple, const ScalarField& f, double curvature);
// sqrt(K) I(int f) - int (sqrt(K) I(f) + lip f) dm.
double lip_corollary_margin(const MarkovTriple& triple, const ScalarField& f, double curvature);

// max over states with Gamma(g) > 0 of
// [Gamma(g, Gamma g)^2 - Gamma(g) Gamma(Gamma g)] / max(1, Gamma(g) Gamma(Gamma g)).
double discriminant_margin(const MarkovTriple& triple, const ScalarField& g);

// Finite union of closed intervals of the extended real line.
class IntervalUnion {
 public:
  struct Interval {
    double lo;
    double hi;
  };

  IntervalUnion() = default;
  // Sorts and merges overlapping or touching intervals, drops single points.
  // Throws DomainError for NaN endpoints or lo > hi.
  explicit IntervalUnion(std::vector<Interval> intervals);
  // Parses e.g. "[-1,1]", "[-inf,0] U [2,3]".
  static IntervalUnion parse(std::string_view text);

  const std::vector<Interval>& intervals() const noexcept { return intervals_; }

 private:
  std::vector<Interval> intervals_;
};

struct GaussianSet {
  double mass = 0.0;
  double perimeter = 0.0;
};

// Standard Gaussian measure of the union and the sum of h over its finite endpoints.
GaussianSet gaussian_interval_oracle(const IntervalUnion& set);

// Geometric grid of `count` times from t_min to t_max inclusive.
std::vector<double> geometric_time_grid(double t_min, double t_max, std::size_t count);

}  // namespace gammalab
