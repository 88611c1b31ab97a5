#include "gammalab/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

namespace gammalab {

namespace {

constexpr double kSpectrumTolerance = 1e-10;
constexpr double kClipTolerance = 1e-12;

}  // namespace

SpectralCache::SpectralCache(MarkovTriple triple) : triple_(std::move(triple)) {
  const auto n = static_cast<Eigen::Index>(triple_.size());
  sqrt_measure_ = triple_.measure().cwiseSqrt();

  Eigen::MatrixXd sym = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t x = 0; x < triple_.size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    sym(xi, xi) = -triple_.total_rate(x);
    for (const Neighbor& nb : triple_.neighbors(x)) {
      const auto yi = static_cast<Eigen::Index>(nb.state);
      sym(xi, yi) = sqrt_measure_[xi] * nb.rate / sqrt_measure_[yi];
    }
  }
  const Eigen::MatrixXd symmetric = 0.5 * (sym + sym.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return solver.eigenvalues()[a] > solver.eigenvalues()[b];
  });
  eigenvalues_.resize(n);
  eigenvectors_.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    eigenvalues_[k] = solver.eigenvalues()[order[static_cast<std::size_t>(k)]];
    eigenvectors_.col(k) = solver.eigenvectors().col(order[static_cast<std::size_t>(k)]);
  }

  const double scale = symmetric.cwiseAbs().rowwise().sum().maxCoeff();
  const double reconstruction =
      (symmetric - eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose()).cwiseAbs().rowwise().sum().maxCoeff();
  if (reconstruction > kSpectrumTolerance * std::max(scale, 1.0)) {
    throw NumericError("eigendecomposition reconstruction error " + std::to_string(reconstruction));
  }
  if (eigenvalues_[0] > kSpectrumTolerance * std::max(scale, 1.0)) {
    throw NumericError("generator has a positive eigenvalue " + std::to_string(eigenvalues_[0]));
  }
  if (n > 1 && std::abs(eigenvalues_[1]) <= kSpectrumTolerance) {
    throw NumericError("generator has more than one zero eigenvalue (disconnected support)");
  }

  // The null space is known exactly: sqrt(m) spans it.
  eigenvalues_[0] = 0.0;
  eigenvectors_.col(0) = sqrt_measure_ / sqrt_measure_.norm();
  for (Eigen::Index k = 1; k < n; ++k) {
    auto column = eigenvectors_.col(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(column[i]) > 1e-14) {
        if (column[i] < 0.0) column = -column;
        break;
      }
    }
  }
}

double SpectralCache::spectral_gap() const noexcept {
  return eigenvalues_.size() > 1 ? -eigenvalues_[1] : 0.0;
}

ScalarField SpectralCache::heat(const ScalarField& f, double t) const {
  triple_.check_field(f);
  if (!(t >= 0.0)) throw DomainError("heat: time must be nonnegative");
  if (t == 0.0) return f;
  Eigen::VectorXd coeffs = eigenvectors_.transpose() * sqrt_measure_.cwiseProduct(f);
  coeffs.array() *= (t * eigenvalues_.array()).exp();
  return (eigenvectors_ * coeffs).cwiseQuotient(sqrt_measure_);
}

HeatKernel SpectralCache::heat_kernel(double t) const {
  if (!(t > 0.0)) throw DomainError("heat_kernel: time must be positive");
  // Uniformization at a short time step followed by repeated squaring. Every
  // term is a product of nonnegative matrices, so small kernel entries keep
  // their sign; the spectral route loses them to the M^{-1/2} rescaling when
  // the measure spans many orders of magnitude.
  const auto n = static_cast<Eigen::Index>(size());
  double max_rate = 0.0;
  for (std::size_t x = 0; x < size(); ++x) max_rate = std::max(max_rate, triple_.total_rate(x));
  HeatKernel kernel;
  if (max_rate == 0.0) {
    kernel.matrix = Eigen::MatrixXd::Identity(n, n);
    return kernel;
  }
  int squarings = 0;
  double step = t;
  while (step * max_rate > 0.5) {
    step *= 0.5;
    ++squarings;
  }
  Eigen::MatrixXd jump = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t x = 0; x < size(); ++x) {
    const auto xi = static_cast<Eigen::Index>(x);
    jump(xi, xi) -= triple_.total_rate(x) / max_rate;
    for (const Neighbor& nb : triple_.neighbors(x)) jump(xi, static_cast<Eigen::Index>(nb.state)) = nb.rate / max_rate;
  }
  const double intensity = step * max_rate;
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd series = term;
  for (int k = 1; k <= 30; ++k) {
    term = (intensity / k) * (term * jump);
    series += term;
  }
  kernel.matrix = std::exp(-intensity) * series;
  for (int s = 0; s < squarings; ++s) kernel.matrix = kernel.matrix * kernel.matrix;
  for (Eigen::Index i = 0; i < kernel.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < kernel.matrix.cols(); ++j) {
      double& entry = kernel.matrix(i, j);
      if (entry >= 0.0) continue;
      if (entry < -kClipTolerance) {
        throw NumericError("heat kernel entry (" + std::to_string(i) + "," + std::to_string(j) + ") = " +
                           std::to_string(entry) + " is negative beyond roundoff");
      }
      entry = 0.0;
      ++kernel.clipped;
    }
  }
  return kernel;
}

double ergodic_defect(const SpectralCache& cache, const ScalarField& f, double t) {
  const MarkovTriple& triple = cache.triple();
  const double mean = integral(triple, f);
  const ScalarField centered = cache.heat(f, t).array() - mean;
  return l2_norm(triple, centered);
}

double gradient_estimate_margin(const SpectralCache& cache, const ScalarField& f, double t, double curvature) {
  const MarkovTriple& triple = cache.triple();
  const ScalarField lhs = gamma(triple, cache.heat(f, t));
  const ScalarField rhs = std::exp(-2.0 * curvature * t) * cache.heat(gamma(triple, f), t);
  return (lhs - rhs).maxCoeff();
}

double slope_gradient_diagnostic(const SpectralCache& cache, const ScalarField& f, double t, double curvature) {
  const MarkovTriple& triple = cache.triple();
  const ScalarField slope = lip_slope(triple, cache.heat(f, t));
  const ScalarField rhs = std::exp(-2.0 * curvature * t) * cache.heat(gamma(triple, f), t);
  return (slope.cwiseProduct(slope) - rhs).maxCoeff();
}

double regularization_time(double curvature, double t) {
  if (curvature == 0.0) return t;
  return std::expm1(2.0 * curvature * t) / (2.0 * curvature);
}

VarianceMargin variance_regularization(const SpectralCache& cache, const ScalarField& f, double t,
                                       double curvature) {
  if (!(t > 0.0)) throw DomainError("variance regularization needs t > 0");
  const MarkovTriple& triple = cache.triple();
  const ScalarField flow = cache.heat(f, t);
  const ScalarField variance = cache.heat(f.cwiseProduct(f), t) - flow.cwiseProduct(flow);
  const ScalarField lhs = 2.0 * regularization_time(curvature, t) * gamma(triple, flow);
  const double sup = f.cwiseAbs().maxCoeff();
  return VarianceMargin{(lhs - variance).maxCoeff(), variance.maxCoeff() - sup * sup};
}

double variance_regularization_margin(const SpectralCache& cache, const ScalarField& f, double t,
                                      double curvature) {
  return variance_regularization(cache, f, t, curvature).lower;
}

}  // namespace gammalab
