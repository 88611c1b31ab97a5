#pragma once

// Standard Gaussian special functions and the Gaussian isoperimetric profile
// I = h o H^{-1}, where H is the standard normal distribution function and
// h = H' its density.

#include <optional>

namespace gammalab {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934381868;

// H(r).
double normal_cdf(double r);
// h(r) = exp(-r^2/2) / sqrt(2 pi).
double normal_pdf(double r);
// H^{-1}(p) for p in (0,1). Newton refinement of a rational starting guess,
// so that |H(r) - p| <= 1e-13. Throws DomainError outside (0,1).
double normal_quantile(double p);

struct ProfilePoint {
  double p = 0.0;
  double value = 0.0;
  // I'(p) = -H^{-1}(p); undefined at p in {0, 1}.
  std::optional<double> derivative;
  // I''(p) = -1 / I(p); undefined at p in {0, 1}.
  std::optional<double> second_derivative;
};

// Profile with derivatives. Throws DomainError for p outside [0,1].
ProfilePoint profile(double p);
// I(p) alone; I(0) = I(1) = 0.
double isoperimetric_profile(double p);
// I'(p); throws DomainError at the endpoints.
double isoperimetric_profile_derivative(double p);

// c_alpha(t) = (1 - exp(-2Kt)) / K + alpha exp(-2Kt), and 2t + alpha at K = 0.
// For |K| < 1e-8 a second-order expansion in K is used so that the map is
// continuous through K = 0. Requires alpha >= 0 and t >= 0.
double c_alpha(double curvature, double alpha, double t);
// d/dt c_alpha(t) = 2 (1 - K alpha) exp(-2Kt).
double c_alpha_dt(double curvature, double alpha, double t);

}  // namespace gammalab
