#include "gammalab/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace gammalab {

namespace {

constexpr double kKernelNegativity = 1e-9;

struct LocalForms {
  std::vector<std::size_t> ball;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd gamma2;
};

Eigen::Index local_index(const std::vector<std::size_t>& ball, std::size_t state) {
  return static_cast<Eigen::Index>(std::lower_bound(ball.begin(), ball.end(), state) - ball.begin());
}

// weight * B_z in ball coordinates.
void add_gamma_form(const MarkovTriple& triple, const std::vector<std::size_t>& ball, std::size_t z,
                    double weight, Eigen::MatrixXd& out) {
  const Eigen::Index zi = local_index(ball, z);
  for (const Neighbor& nb : triple.neighbors(z)) {
    const Eigen::Index yi = local_index(ball, nb.state);
    const double w = 0.5 * weight * nb.rate;
    out(zi, zi) += w;
    out(yi, yi) += w;
    out(zi, yi) -= w;
    out(yi, zi) -= w;
  }
}

// Row of the generator at z in ball coordinates.
Eigen::VectorXd generator_row(const MarkovTriple& triple, const std::vector<std::size_t>& ball, std::size_t z) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ball.size()));
  for (const Neighbor& nb : triple.neighbors(z)) row[local_index(ball, nb.state)] += nb.rate;
  row[local_index(ball, z)] -= triple.total_rate(z);
  return row;
}

LocalForms local_forms(const MarkovTriple& triple, std::size_t x) {
  LocalForms forms;
  forms.ball = two_ball(triple, x);
  const auto size = static_cast<Eigen::Index>(forms.ball.size());
  forms.gamma = Eigen::MatrixXd::Zero(size, size);
  add_gamma_form(triple, forms.ball, x, 1.0, forms.gamma);

  // 1/2 L Gamma(f) at x.
  Eigen::MatrixXd half_laplacian_of_gamma = Eigen::MatrixXd::Zero(size, size);
  for (const Neighbor& nb : triple.neighbors(x)) add_gamma_form(triple, forms.ball, nb.state, 0.5 * nb.rate, half_laplacian_of_gamma);
  half_laplacian_of_gamma -= 0.5 * triple.total_rate(x) * forms.gamma;

  // Gamma(f, Lf) at x = f^T C f with C = 1/2 sum_y L(x,y) (e_y - e_x)(l_y - l_x)^T.
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(size, size);
  const Eigen::Index xi = local_index(forms.ball, x);
  const Eigen::VectorXd row_x = generator_row(triple, forms.ball, x);
  for (const Neighbor& nb : triple.neighbors(x)) {
    const Eigen::Index yi = local_index(forms.ball, nb.state);
    const Eigen::VectorXd diff_row = generator_row(triple, forms.ball, nb.state) - row_x;
    cross.row(yi) += 0.5 * nb.rate * diff_row.transpose();
    cross.row(xi) -= 0.5 * nb.rate * diff_row.transpose();
  }
  const Eigen::MatrixXd a = half_laplacian_of_gamma - 0.5 * (cross + cross.transpose());
  forms.gamma2 = 0.5 * (a + a.transpose());
  return forms;
}

Eigen::MatrixXd embed(const LocalForms& forms, const Eigen::MatrixXd& local, std::size_t n) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < forms.ball.size(); ++a) {
    for (std::size_t b = 0; b < forms.ball.size(); ++b) {
      out(static_cast<Eigen::Index>(forms.ball[a]), static_cast<Eigen::Index>(forms.ball[b])) =
          local(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return out;
}

}  // namespace

double Curvature::value() const {
  if (neg_inf_) throw DomainError("curvature is negative infinity");
  return value_;
}

std::vector<std::size_t> two_ball(const MarkovTriple& triple, std::size_t x) {
  triple.check_state(x);
  std::vector<std::size_t> ball{x};
  for (const Neighbor& nb : triple.neighbors(x)) {
    ball.push_back(nb.state);
    for (const Neighbor& second : triple.neighbors(nb.state)) ball.push_back(second.state);
  }
  std::sort(ball.begin(), ball.end());
  ball.erase(std::unique(ball.begin(), ball.end()), ball.end());
  return ball;
}

Eigen::MatrixXd gamma_form_at(const MarkovTriple& triple, std::size_t x) {
  const LocalForms forms = local_forms(triple, x);
  return embed(forms, forms.gamma, triple.size());
}

Eigen::MatrixXd gamma2_form_at(const MarkovTriple& triple, std::size_t x) {
  const LocalForms forms = local_forms(triple, x);
  return embed(forms, forms.gamma2, triple.size());
}

LocalCurvature curvature_at(const MarkovTriple& triple, std::size_t x, double kernel_tolerance) {
  const LocalForms forms = local_forms(triple, x);
  LocalCurvature result;
  result.state = x;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gamma_eig(forms.gamma);
  if (gamma_eig.info() != Eigen::Success) throw NumericError("eigensolver failed on the Gamma form");
  const Eigen::VectorXd& lambda = gamma_eig.eigenvalues();
  const double lambda_max = lambda.maxCoeff();
  if (!(lambda_max > 0.0)) {
    // No neighbors: Gamma vanishes identically and every constant works.
    result.curvature = Curvature(std::numeric_limits<double>::infinity());
    return result;
  }
  std::vector<Eigen::Index> range;
  std::vector<Eigen::Index> kernel;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    (lambda[k] > kernel_tolerance * lambda_max ? range : kernel).push_back(k);
  }
  result.gamma_rank = range.size();
  const Eigen::MatrixXd q_range = gamma_eig.eigenvectors()(Eigen::all, range);
  const Eigen::MatrixXd q_kernel = gamma_eig.eigenvectors()(Eigen::all, kernel);
  const Eigen::VectorXd lambda_range = lambda(range);

  const Eigen::MatrixXd a_rr = q_range.transpose() * forms.gamma2 * q_range;
  const Eigen::MatrixXd a_rn = q_range.transpose() * forms.gamma2 * q_kernel;
  Eigen::MatrixXd a_nn = q_kernel.transpose() * forms.gamma2 * q_kernel;
  a_nn = 0.5 * (a_nn + a_nn.transpose());

  const double scale = std::max(1.0, forms.gamma2.cwiseAbs().maxCoeff());
  Eigen::MatrixXd schur = a_rr;
  Eigen::MatrixXd kernel_solve = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kernel.size()),
                                                       static_cast<Eigen::Index>(range.size()));
  if (!kernel.empty()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> kernel_eig(a_nn);
    if (kernel_eig.info() != Eigen::Success) throw NumericError("eigensolver failed on the kernel block");
    const Eigen::VectorXd& mu = kernel_eig.eigenvalues();
    result.kernel_min_eigenvalue = mu.minCoeff();
    if (result.kernel_min_eigenvalue < -kKernelNegativity * scale) {
      result.curvature = Curvature::negative_infinity();
      return result;
    }
    const double mu_max = std::max(mu.maxCoeff(), 0.0);
    Eigen::VectorXd mu_inv = Eigen::VectorXd::Zero(mu.size());
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
      if (mu[k] > kernel_tolerance * std::max(mu_max, 1.0)) {
        mu_inv[k] = 1.0 / mu[k];
      } else {
        // A null direction of the kernel block must not couple to the range,
        // otherwise the form is unbounded below for every K.
        const double coupling = (kernel_eig.eigenvectors().col(k).transpose() * a_rn.transpose()).cwiseAbs().maxCoeff();
        if (coupling > kKernelNegativity * scale) {
          result.curvature = Curvature::negative_infinity();
          return result;
        }
      }
    }
    const Eigen::MatrixXd pinv = kernel_eig.eigenvectors() * mu_inv.asDiagonal() * kernel_eig.eigenvectors().transpose();
    kernel_solve = pinv * a_rn.transpose();
    schur -= a_rn * kernel_solve;
  }

  const Eigen::VectorXd inv_sqrt = lambda_range.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd pencil = inv_sqrt.asDiagonal() * schur * inv_sqrt.asDiagonal();
  pencil = 0.5 * (pencil + pencil.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pencil_eig(pencil);
  if (pencil_eig.info() != Eigen::Success) throw NumericError("eigensolver failed on the curvature pencil");
  result.curvature = Curvature(pencil_eig.eigenvalues()[0]);

  const Eigen::VectorXd f_range = inv_sqrt.cwiseProduct(pencil_eig.eigenvectors().col(0));
  const Eigen::VectorXd f_kernel = -kernel_solve * f_range;
  Eigen::VectorXd local = q_range * f_range;
  if (!kernel.empty()) local += q_kernel * f_kernel;
  const double gamma_value = local.dot(forms.gamma * local);
  local /= std::sqrt(gamma_value);
  result.witness = ScalarField::Zero(static_cast<Eigen::Index>(triple.size()));
  for (std::size_t a = 0; a < forms.ball.size(); ++a) {
    result.witness[static_cast<Eigen::Index>(forms.ball[a])] = local[static_cast<Eigen::Index>(a)];
  }
  return result;
}

CurvatureReport curvature_global(const MarkovTriple& triple, double kernel_tolerance) {
  CurvatureReport report;
  report.states.reserve(triple.size());
  for (std::size_t x = 0; x < triple.size(); ++x) report.states.push_back(curvature_at(triple, x, kernel_tolerance));
  report.argmin = 0;
  for (std::size_t x = 1; x < report.states.size(); ++x) {
    if (report.states[x].curvature < report.states[report.argmin].curvature) report.argmin = x;
  }
  report.global = report.states[report.argmin].curvature;
  return report;
}

ScalarField gamma2_k(const MarkovTriple& triple, const ScalarField& f, double curvature) {
  return gamma2(triple, f) - curvature * gamma(triple, f);
}

BakryEmeryDiagnostics be_diagnostics(const MarkovTriple& triple, const ScalarField& f, double curvature) {
  const ScalarField gf = gamma(triple, f);
  const ScalarField lf = laplacian(triple, f);
  const ScalarField g2 = gamma2(triple, f);

  BakryEmeryDiagnostics out;
  out.g3_margin = cheeger_energy(triple, gf) +
                  integral(triple, 2.0 * curvature * gf.cwiseProduct(gf) + 2.0 * gf.cwiseProduct(gamma(triple, f, lf)));
  const double pointwise_side = integral(triple, g2 - curvature * gf);
  const double laplacian_side = integral(triple, lf.cwiseProduct(lf) - curvature * gf);
  out.mass_identity_residual =
      std::abs(pointwise_side - laplacian_side) / std::max(1.0, integral(triple, lf.cwiseProduct(lf)));
  out.self_improvement_margin = (gamma(triple, gf) - 4.0 * (g2 - curvature * gf).cwiseProduct(gf)).maxCoeff();
  return out;
}

}  // namespace gammalab
