#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls the library routine it is used to check: Gamma and Gamma2 are rebuilt
// from the dense generator, curvature from a PSD bisection and a Rayleigh
// descent, the normal cdf from 50-digit erfc.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "gammalab/gauss.hpp"
#include "gammalab/spaces.hpp"
#include "gammalab/triple.hpp"

namespace testing {

using gammalab::MarkovTriple;
using gammalab::ScalarField;

struct NamedSpace {
  std::string name;
  MarkovTriple triple;
};

inline std::vector<NamedSpace> model_spaces(bool with_ou = true) {
  std::vector<NamedSpace> out{{"two_point", gammalab::build_two_point(1.0)},
                              {"cycle5", gammalab::build_cycle(5)},
                              {"complete4", gammalab::build_complete(4)},
                              {"hypercube3", gammalab::build_hypercube(3, 1.0)}};
  if (with_ou) out.push_back({"ou200", gammalab::build_ou_chain(200, 6.0)});
  return out;
}

// Spaces with at most 12 states, for the brute-force curvature oracle.
inline std::vector<NamedSpace> small_spaces() {
  return {{"two_point(0.5)", gammalab::build_two_point(0.5)},
          {"two_point(1)", gammalab::build_two_point(1.0)},
          {"two_point(2)", gammalab::build_two_point(2.0)},
          {"cycle4", gammalab::build_cycle(4)},
          {"cycle5", gammalab::build_cycle(5)},
          {"complete4", gammalab::build_complete(4)},
          {"hypercube1", gammalab::build_hypercube(1, 1.0)},
          {"hypercube2", gammalab::build_hypercube(2, 1.0)},
          {"hypercube3", gammalab::build_hypercube(3, 1.0)}};
}

inline ScalarField random_field(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  ScalarField f(static_cast<Eigen::Index>(n));
  for (auto& v : f) v = dist(rng);
  return f;
}

inline ScalarField sigmoid(const ScalarField& x, double slope, double center) {
  return x.unaryExpr([&](double v) { return 1.0 / (1.0 + std::exp(-slope * (v - center))); });
}

// ---- dense Gamma calculus ----

inline ScalarField dense_gamma(const Eigen::MatrixXd& L, const ScalarField& f, const ScalarField& g) {
  const ScalarField fg = f.cwiseProduct(g);
  return 0.5 * (L * fg - f.cwiseProduct(L * g) - g.cwiseProduct(L * f));
}

inline ScalarField dense_gamma2(const Eigen::MatrixXd& L, const ScalarField& f, const ScalarField& g) {
  return 0.5 * (L * dense_gamma(L, f, g)) - 0.5 * (dense_gamma(L, f, L * g) + dense_gamma(L, g, L * f));
}

// Quadratic forms at x by polarization over basis vectors.
inline Eigen::MatrixXd polarized_form(const Eigen::MatrixXd& L, std::size_t x, bool second_order) {
  const Eigen::Index n = L.rows();
  auto q = [&](const ScalarField& f) {
    return second_order ? dense_gamma2(L, f, f)(static_cast<Eigen::Index>(x)) : dense_gamma(L, f, f)(static_cast<Eigen::Index>(x));
  };
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const ScalarField ei = ScalarField::Unit(n, i);
      const ScalarField ej = ScalarField::Unit(n, j);
      out(i, j) = 0.25 * (q(ei + ej) - q(ei - ej));
    }
  }
  return 0.5 * (out + out.transpose());
}

// ---- curvature oracles ----

// Orthonormal basis of the complement of the constants.
inline Eigen::MatrixXd nonconstant_basis(Eigen::Index n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  m.col(0).setOnes();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(n - 1);
}

inline bool is_psd(const Eigen::MatrixXd& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

// sup { K : A - K B is PSD on non-constant fields }, by bisection.
// Returns -infinity when no K works.
inline double psd_bisection_curvature(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::MatrixXd P = nonconstant_basis(A.rows());
  const Eigen::MatrixXd a = P.transpose() * A * P;
  const Eigen::MatrixXd b = P.transpose() * B * P;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  auto ok = [&](double k) { return is_psd(a - k * b, 1e-13 * scale * (1.0 + std::abs(k))); };
  double lo = -1e6;
  if (!ok(lo)) return -std::numeric_limits<double>::infinity();
  double hi = 1.0;
  while (ok(hi)) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

// Minimizes f'Af / f'Bf from random starts by exact line minimization along
// coordinates. Returns the smallest quotient found.
inline double rayleigh_descent_curvature(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, std::uint64_t seed,
                                         int starts = 24, int sweeps = 400) {
  const Eigen::Index n = A.rows();
  std::mt19937_64 rng(seed);
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    ScalarField f = random_field(static_cast<std::size_t>(n), rng);
    if (f.dot(B * f) <= 1e-12) continue;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      for (Eigen::Index i = 0; i < n; ++i) {
        // quotient along f + s e_i: (a0 + 2 a1 s + a2 s^2) / (b0 + 2 b1 s + b2 s^2)
        const double a0 = f.dot(A * f), a1 = A.row(i).dot(f), a2 = A(i, i);
        const double b0 = f.dot(B * f), b1 = B.row(i).dot(f), b2 = B(i, i);
        // stationary points solve (a1 + a2 s)(b0 + 2 b1 s + b2 s^2) = (b1 + b2 s)(a0 + 2 a1 s + a2 s^2)
        const double c2 = a2 * b1 - a1 * b2;
        const double c1 = a2 * b0 - a0 * b2;
        const double c0 = a1 * b0 - a0 * b1;
        std::vector<double> roots;
        if (std::abs(c2) > 1e-300) {
          const double disc = c1 * c1 - 4 * c2 * c0;
          if (disc >= 0) {
            roots.push_back((-c1 + std::sqrt(disc)) / (2 * c2));
            roots.push_back((-c1 - std::sqrt(disc)) / (2 * c2));
          }
        } else if (std::abs(c1) > 1e-300) {
          roots.push_back(-c0 / c1);
        }
        double best_s = 0.0, best_q = a0 / b0;
        for (double r : roots) {
          const double den = b0 + 2 * b1 * r + b2 * r * r;
          if (!(den > 1e-12 * b0) || !std::isfinite(r)) continue;
          const double q = (a0 + 2 * a1 * r + a2 * r * r) / den;
          if (q < best_q) {
            best_q = q;
            best_s = r;
          }
        }
        f(i) += best_s;
        f /= std::sqrt(f.dot(B * f));
      }
    }
    best = std::min(best, f.dot(A * f) / f.dot(B * f));
  }
  return best;
}

// ---- Gaussian oracles ----

using mp50 = boost::multiprecision::cpp_bin_float_50;

inline double mp_normal_cdf(double r) {
  const mp50 x = mp50(r) / boost::multiprecision::sqrt(mp50(2));
  return static_cast<double>(boost::math::erfc(-x) / 2);
}

inline double mp_normal_pdf(double r) {
  const mp50 x(r);
  return static_cast<double>(boost::multiprecision::exp(-x * x / 2) / boost::multiprecision::sqrt(2 * boost::math::constants::pi<mp50>()));
}

// Quantile by bisection on the 50-digit cdf.
inline double mp_normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mp_normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Double-precision quantile from boost's inverse erfc, independent of the library.
inline double boost_normal_quantile(double p) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p); }

inline double gaussian_profile_oracle(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  const double r = boost_normal_quantile(p);
  return std::exp(-0.5 * r * r) / std::sqrt(2 * boost::math::constants::pi<double>());
}

// Continuum Bobkov margin I(int f) - int sqrt(I(f)^2 + f'^2) dgamma (K = 1) for
// f = sigmoid(slope x) under the standard Gaussian, by the midpoint rule.
inline double continuum_sigmoid_bobkov_margin(double slope, int nodes = 400000, double half_width = 12.0) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2 * boost::math::constants::pi<double>());
  double mean = 0.0, rhs = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double x = -half_width + 2 * half_width * (i + 0.5) / nodes;
    const double w = 2 * half_width / nodes * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    const double f = 1.0 / (1.0 + std::exp(-slope * x));
    const double fp = slope * f * (1.0 - f);
    const double prof = gaussian_profile_oracle(f);
    mean += w * f;
    rhs += w * std::sqrt(prof * prof + fp * fp);
  }
  return gaussian_profile_oracle(mean) - rhs;
}

// ---- finite differences ----

inline double central_difference(const std::function<double(double)>& g, double x, double h) {
  return (g(x + h) - g(x - h)) / (2 * h);
}

inline double five_point_derivative(const std::function<double(double)>& g, double x, double h) {
  return (-g(x + 2 * h) + 8 * g(x + h) - 8 * g(x - h) + g(x - 2 * h)) / (12 * h);
}

// Test values of alpha: 0, 0.3 and 1/K when K > 0.
inline std::vector<double> alphas_for(double curvature) {
  std::vector<double> out{0.0, 0.3};
  if (curvature > 1e-9) out.push_back(1.0 / curvature);
  return out;
}

}  // namespace testing
