#pragma once

// Heat flow H_t = exp(tL) of a reversible triple through the spectral
// decomposition of the symmetrized generator S = M^{1/2} L M^{-1/2}.

#include <cstddef>

#include <Eigen/Dense>

#include "gammalab/triple.hpp"

namespace gammalab {

struct HeatKernel {
  // P(x,y) with (H_t f)(x) = sum_y P(x,y) f(y).
  Eigen::MatrixXd matrix;
  // Entries in [-1e-12, 0) that were clipped to zero.
  std::size_t clipped = 0;
};

// Immutable eigendecomposition of a triple's generator. Eigenvalues are sorted
// descending (the first is exactly 0, its eigenvector sqrt(m)); each other
// eigenvector has its first nonzero component positive.
class SpectralCache {
 public:
  // Throws NumericError if the eigensolver fails or the spectrum violates
  // the reconstruction / single-zero / nonpositivity checks.
  explicit SpectralCache(MarkovTriple triple);

  const MarkovTriple& triple() const noexcept { return triple_; }
  std::size_t size() const noexcept { return triple_.size(); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  const Eigen::MatrixXd& eigenvectors() const noexcept { return eigenvectors_; }
  // -lambda_2; zero for a single state.
  double spectral_gap() const noexcept;

  // H_t f. Throws DomainError for t < 0.
  ScalarField heat(const ScalarField& f, double t) const;
  // Dense kernel of H_t for t > 0, computed independently of the spectrum
  // (uniformization and squaring). Throws NumericError if an entry is below -1e-12.
  HeatKernel heat_kernel(double t) const;

 private:
  MarkovTriple triple_;
  Eigen::VectorXd sqrt_measure_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
};

// |H_t f - int f dm|_{L^2(m)}.
double ergodic_defect(const SpectralCache& cache, const ScalarField& f, double t);

// max_x [ Gamma(H_t f) - exp(-2Kt) H_t Gamma(f) ](x).
double gradient_estimate_margin(const SpectralCache& cache, const ScalarField& f, double t, double curvature);

// Squared-slope form of the pointwise gradient bound,
// max_x [ (lip H_t f)^2 - exp(-2Kt) H_t Gamma(f) ](x). Diagnostic only: on
// graphs the slope and sqrt(Gamma) are not comparable.
double slope_gradient_diagnostic(const SpectralCache& cache, const ScalarField& f, double t, double curvature);

// (exp(2Kt) - 1) / (2K), continuously extended by t at K = 0.
double regularization_time(double curvature, double t);

struct VarianceMargin {
  // max_x [ 2 iota(t) Gamma(H_t f) - (H_t f^2 - (H_t f)^2) ](x)
  double lower;
  // max_x [ (H_t f^2 - (H_t f)^2)(x) ] - |f|_inf^2
  double upper;
};
VarianceMargin variance_regularization(const SpectralCache& cache, const ScalarField& f, double t,
                                       double curvature);
double variance_regularization_margin(const SpectralCache& cache, const ScalarField& f, double t,
                                      double curvature);

}  // namespace gammalab
