#pragma once

// Bakry-Emery curvature: the best constant K(x) with
//   Gamma2(f)(x) >= K(x) Gamma(f)(x)   for every field f,
// obtained per state as a generalized eigenvalue problem between the quadratic
// forms of Gamma2 and Gamma at x.

#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "gammalab/triple.hpp"

namespace gammalab {

// Extended-real curvature constant. Negative infinity is an explicit state,
// never a large negative double; value() refuses to hand it out.
class Curvature {
 public:
  constexpr Curvature() = default;
  constexpr explicit Curvature(double value) : value_(value) {}
  static constexpr Curvature negative_infinity() {
    Curvature c;
    c.neg_inf_ = true;
    c.value_ = -std::numeric_limits<double>::infinity();
    return c;
  }

  constexpr bool is_negative_infinity() const noexcept { return neg_inf_; }
  // Throws DomainError for negative infinity.
  double value() const;
  // The value or -inf, for ordering and display.
  constexpr double as_double() const noexcept { return value_; }

  friend constexpr bool operator<(Curvature a, Curvature b) noexcept { return a.value_ < b.value_; }

 private:
  double value_ = 0.0;
  bool neg_inf_ = false;
};

inline constexpr double kDefaultKernelTolerance = 1e-10;

struct LocalCurvature {
  std::size_t state = 0;
  Curvature curvature;
  // Minimizer of Gamma2(f)(x) / Gamma(f)(x), scaled so that Gamma(f)(x) = 1.
  // Empty when the curvature is negative infinity or x has no neighbors.
  ScalarField witness;
  // Rank of the Gamma form at x (its number of range directions).
  std::size_t gamma_rank = 0;
  // Smallest eigenvalue of the Gamma2 form restricted to the kernel of the Gamma form.
  double kernel_min_eigenvalue = 0.0;
};

struct CurvatureReport {
  std::vector<LocalCurvature> states;
  Curvature global;
  std::size_t argmin = 0;
  // Mass of the singular part of Gamma2* - K Gamma m, identically zero on a finite space.
  static constexpr double singular_part = 0.0;
};

// Matrix B_x with f^T B_x f = Gamma(f)(x), supported on the 1-ball of x.
Eigen::MatrixXd gamma_form_at(const MarkovTriple& triple, std::size_t x);
// Matrix A_x with f^T A_x f = Gamma2(f)(x), supported on the 2-ball of x. Exactly symmetric.
Eigen::MatrixXd gamma2_form_at(const MarkovTriple& triple, std::size_t x);

// The states within graph distance two of x, ascending.
std::vector<std::size_t> two_ball(const MarkovTriple& triple, std::size_t x);

// Curvature at one state by a range/kernel split of B_x and a Schur complement of A_x.
LocalCurvature curvature_at(const MarkovTriple& triple, std::size_t x,
                            double kernel_tolerance = kDefaultKernelTolerance);

// Curvature at every state; the global constant is the minimum.
CurvatureReport curvature_global(const MarkovTriple& triple,
                                 double kernel_tolerance = kDefaultKernelTolerance);

struct BakryEmeryDiagnostics {
  // Ch(Gamma f) + int (2K Gamma(f)^2 + 2 Gamma(f) Gamma(f, Lf)) dm
  double g3_margin = 0.0;
  // |int (Gamma2(f) - K Gamma(f)) dm - int ((Lf)^2 - K Gamma(f)) dm| / max(1, int (Lf)^2 dm)
  double mass_identity_residual = 0.0;
  // max_x [ Gamma(Gamma f) - 4 (Gamma2(f) - K Gamma(f)) Gamma(f) ](x)
  double self_improvement_margin = 0.0;
};

BakryEmeryDiagnostics be_diagnostics(const MarkovTriple& triple, const ScalarField& f, double curvature);

// gamma_{2,K}[f] = Gamma2(f) - K Gamma(f), the density of Gamma2* - K Gamma m.
ScalarField gamma2_k(const MarkovTriple& triple, const ScalarField& f, double curvature);

}  // namespace gammalab
