#include "gammalab/gauss.hpp"

#include <cmath>
#include <string>

#include "gammalab/errors.hpp"

namespace gammalab {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880168872420969808;
constexpr double kSmallCurvature = 1e-8;

// Acklam's rational approximation, relative error about 1e-9 on (0,1).
double quantile_guess(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Lower half p <= 1/2, where H(r) is evaluated without cancellation.
double lower_quantile(double p) {
  double r = quantile_guess(p);
  double lo = -40.0;
  double hi = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    const double residual = normal_cdf(r) - p;
    if (residual > 0.0) hi = std::min(hi, r);
    if (residual < 0.0) lo = std::max(lo, r);
    if (residual == 0.0) break;
    const double density = normal_pdf(r);
    double next = r - residual / density;
    if (!(density > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - r) <= 1e-16 * std::max(1.0, std::abs(r))) {
      r = next;
      break;
    }
    r = next;
  }
  return r;
}

}  // namespace

double normal_cdf(double r) { return 0.5 * std::erfc(-r / kSqrt2); }

double normal_pdf(double r) { return kInvSqrt2Pi * std::exp(-0.5 * r * r); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p = " + std::to_string(p) + " is outside (0,1)");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -lower_quantile(1.0 - p);
  return lower_quantile(p);
}

ProfilePoint profile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("profile: p = " + std::to_string(p) + " is outside [0,1]");
  ProfilePoint point;
  point.p = p;
  if (p == 0.0 || p == 1.0) return point;
  const double r = normal_quantile(p);
  point.value = normal_pdf(r);
  point.derivative = -r;
  point.second_derivative = -1.0 / point.value;
  return point;
}

double isoperimetric_profile(double p) { return profile(p).value; }

double isoperimetric_profile_derivative(double p) {
  const ProfilePoint point = profile(p);
  if (!point.derivative) throw DomainError("profile derivative is undefined at p = " + std::to_string(p));
  return *point.derivative;
}

double c_alpha(double curvature, double alpha, double t) {
  if (alpha < 0.0) throw DomainError("c_alpha: alpha must be nonnegative");
  if (t < 0.0) throw DomainError("c_alpha: t must be nonnegative");
  const double k = curvature;
  if (std::abs(k) < kSmallCurvature && std::abs(k * t) < 1e-4) {
    return 2.0 * t * (1.0 - k * t + (2.0 / 3.0) * k * k * t * t) + alpha * (1.0 - 2.0 * k * t + 2.0 * k * k * t * t);
  }
  return -std::expm1(-2.0 * k * t) / k + alpha * std::exp(-2.0 * k * t);
}

double c_alpha_dt(double curvature, double alpha, double t) {
  if (alpha < 0.0) throw DomainError("c_alpha_dt: alpha must be nonnegative");
  if (t < 0.0) throw DomainError("c_alpha_dt: t must be nonnegative");
  return 2.0 * (1.0 - curvature * alpha) * std::exp(-2.0 * curvature * t);
}

}  // namespace gammalab
