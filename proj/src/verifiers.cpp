#include "gammalab/verifiers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "gammalab/gauss.hpp"

namespace gammalab {

namespace {

ScalarField profile_of(const ScalarField& f) {
  return f.unaryExpr([](double p) { return isoperimetric_profile(p); });
}

void require_unit_range(const ScalarField& f, const char* op) {
  if (f.size() > 0 && (f.minCoeff() < 0.0 || f.maxCoeff() > 1.0)) {
    throw DomainError(std::string(op) + ": field must take values in [0,1]");
  }
}

void require_open_unit_range(const ScalarField& f, const char* op) {
  if (f.size() > 0 && (f.minCoeff() <= 0.0 || f.maxCoeff() >= 1.0)) {
    throw DomainError(std::string(op) + ": field must take values in (0,1); truncate it first");
  }
}

double finite_curvature(Curvature curvature, const char* op) {
  if (curvature.is_negative_infinity()) {
    throw DomainError(std::string(op) + ": curvature is negative infinity, no inequality to check");
  }
  return curvature.value();
}

void require_positive_curvature(double curvature, const char* op) {
  if (!(curvature > 0.0) || !std::isfinite(curvature)) {
    throw DomainError(std::string(op) + ": needs a finite curvature K > 0");
  }
}

std::string format_parameter(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.12g", value);
  return buffer;
}

}  // namespace

void VerifierReport::add_parameter(std::string key, double value) {
  parameters.emplace_back(std::move(key), format_parameter(value));
}

void VerifierReport::add_parameter(std::string key, std::string value) {
  parameters.emplace_back(std::move(key), std::move(value));
}

void VerifierReport::add_row(const MarginRow& row) { rows.push_back(row); }

void VerifierReport::finalize(double tol) {
  tolerance = tol;
  samples = rows.size();
  worst_margin = -std::numeric_limits<double>::infinity();
  worst_state.reset();
  worst_time.reset();
  double total = 0.0;
  for (const MarginRow& row : rows) {
    total += row.margin;
    if (row.margin > worst_margin) {
      worst_margin = row.margin;
      worst_state = row.state;
      worst_time = row.time;
    }
  }
  mean_margin = rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
  if (rows.empty()) worst_margin = 0.0;
  pass = worst_margin <= tolerance;
}

ScalarField truncate(const ScalarField& f, double eps) {
  if (!(eps > 0.0 && eps < 0.5)) throw DomainError("truncate: eps must lie in (0, 1/2)");
  require_unit_range(f, "truncate");
  return f.cwiseMax(eps).cwiseMin(1.0 - eps);
}

PsiDerivatives psi(double t, double u, double v, double curvature, double alpha) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("psi: u must lie in (0,1)");
  if (!(v >= 0.0)) throw DomainError("psi: v must be nonnegative");
  const double c = c_alpha(curvature, alpha, t);
  const double c_dot = c_alpha_dt(curvature, alpha, t);
  const ProfilePoint point = profile(u);
  const double i = point.value;
  const double ip = *point.derivative;
  const double square = i * i + c * v;
  if (!(square > 0.0)) throw DomainError("psi: I(u)^2 + c_alpha(t) v must be positive");

  PsiDerivatives out;
  out.value = std::sqrt(square);
  const double cube = square * out.value;
  out.dt = 0.5 * c_dot * v / out.value;
  out.du = i * ip / out.value;
  out.dv = 0.5 * c / out.value;
  out.duu = (-i * i * ip * ip + square * (ip * ip - 1.0)) / cube;
  out.duv = -0.5 * c * i * ip / cube;
  out.dvv = -0.25 * c * c / cube;
  return out;
}

double ZetaField::relative_disagreement() const {
  double worst = 0.0;
  for (Eigen::Index x = 0; x < six_term.size(); ++x) {
    const double scale = std::max({1.0, std::abs(six_term[x]), std::abs(closed_form[x])});
    worst = std::max(worst, std::abs(six_term[x] - closed_form[x]) / scale);
  }
  return worst;
}

ZetaField zeta_field(const SpectralCache& cache, const ScalarField& f, double horizon, double t, double alpha,
                     Curvature curvature) {
  const double k = finite_curvature(curvature, "zeta_field");
  if (!(t > 0.0 && t < horizon)) throw DomainError("zeta_field: need 0 < t < T");
  const MarkovTriple& triple = cache.triple();
  triple.check_field(f);
  require_open_unit_range(f, "zeta_field");

  const ScalarField g = cache.heat(f, horizon - t);
  const ScalarField grad = gamma(triple, g);
  const ScalarField grad_grad = gamma(triple, grad);
  const ScalarField cross = gamma(triple, g, grad);
  const ScalarField excess = gamma2_k(triple, g, k);
  const double c = c_alpha(k, alpha, t);

  const auto n = g.size();
  ZetaField out;
  out.six_term.resize(n);
  out.closed_form.resize(n);
  out.field.resize(n);
  out.quadratic_form = ScalarField::Zero(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    const PsiDerivatives p = psi(t, g[x], grad[x], k, alpha);
    out.six_term[x] = p.dt + p.duu * grad[x] + 2.0 * p.duv * cross[x] + p.dvv * grad_grad[x] +
                      2.0 * k * p.dv * grad[x] + 2.0 * p.dv * excess[x];

    const double i = isoperimetric_profile(g[x]);
    const double ip = isoperimetric_profile_derivative(g[x]);
    const double cube = p.value * p.value * p.value;
    const double second_bracket = -ip * i * cross[x] + ip * ip * grad[x] * grad[x] + i * i * excess[x];
    out.closed_form[x] = (c * c * (-0.25 * grad_grad[x] + grad[x] * excess[x]) + c * second_bracket) / cube;
    out.field[x] = out.closed_form[x];
    if (grad[x] == 0.0) {
      out.flat_states.push_back(static_cast<std::size_t>(x));
      if (grad_grad[x] > 0.0) out.unresolved_states.push_back(static_cast<std::size_t>(x));
      out.field[x] = (c * c * grad[x] * excess[x] + c * second_bracket) / cube;
    } else {
      out.quadratic_form[x] = i * i * grad_grad[x] / (4.0 * grad[x]) - ip * i * cross[x] + ip * ip * grad[x] * grad[x];
    }
  }
  return out;
}

PhiTrace phi_trace(const SpectralCache& cache, const ScalarField& f, const ScalarField& phi, double horizon,
                   double alpha, Curvature curvature, std::span<const double> times) {
  const double k = finite_curvature(curvature, "phi_trace");
  const MarkovTriple& triple = cache.triple();
  triple.check_field(f, "f");
  triple.check_field(phi, "phi");
  require_open_unit_range(f, "phi_trace");
  if (phi.minCoeff() < 0.0) throw DomainError("phi_trace: phi must be nonnegative");
  if (times.empty()) throw DomainError("phi_trace: empty time grid");
  if (!(horizon > 0.0)) throw DomainError("phi_trace: T must be positive");
  for (double t : times) {
    if (!(t > 0.0 && t < horizon)) throw DomainError("phi_trace: grid times must lie in (0,T)");
  }

  auto evaluate = [&](double t) {
    const ScalarField g = cache.heat(f, horizon - t);
    const ScalarField grad = gamma(triple, g);
    ScalarField integrand(g.size());
    for (Eigen::Index x = 0; x < g.size(); ++x) integrand[x] = psi(t, g[x], grad[x], k, alpha).value;
    return inner(triple, cache.heat(integrand, t), phi);
  };

  PhiTrace trace;
  trace.start = evaluate(0.0);
  trace.end = evaluate(horizon);
  const double c_end = c_alpha(k, alpha, horizon);
  const ScalarField at_end = cache.heat(f, horizon);
  const ScalarField upper =
      cache.heat((profile_of(f).array().square() + c_end * gamma(triple, f).array()).sqrt().matrix(), horizon);
  const ScalarField lower = (profile_of(at_end).array().square() + alpha * gamma(triple, at_end).array()).sqrt();
  trace.endpoint_rhs = inner(triple, upper - lower, phi);
  trace.endpoint_residual = std::abs((trace.end - trace.start) - trace.endpoint_rhs);

  trace.worst_derivative_gap = -std::numeric_limits<double>::infinity();
  for (double t : times) {
    const double step = std::min(1e-4 * horizon, 0.5 * std::min(t, horizon - t));
    const double derivative = (evaluate(t + step) - evaluate(t - step)) / (2.0 * step);
    const ZetaField zeta = zeta_field(cache, f, horizon, t, alpha, curvature);
    const double bound = inner(triple, zeta.field, cache.heat(phi, t));
    trace.times.push_back(t);
    trace.values.push_back(evaluate(t));
    trace.derivatives.push_back(derivative);
    trace.lower_bounds.push_back(bound);
    trace.worst_derivative_gap = std::max(trace.worst_derivative_gap, bound - derivative);
  }
  return trace;
}

VerifierReport bobkov_local(const SpectralCache& cache, const ScalarField& f, double alpha, Curvature curvature,
                            std::span<const double> times, double eps, double tol) {
  const double k = finite_curvature(curvature, "bobkov_local");
  if (!(alpha >= 0.0)) throw DomainError("bobkov_local: alpha must be nonnegative");
  const MarkovTriple& triple = cache.triple();
  triple.check_field(f);
  require_unit_range(f, "bobkov_local");
  const ScalarField truncated = truncate(f, eps);
  const ScalarField profile_sq = profile_of(truncated).array().square();
  const ScalarField grad = gamma(triple, truncated);

  VerifierReport report;
  report.name = "bobkov-local";
  report.add_parameter("K", k);
  report.add_parameter("alpha", alpha);
  report.add_parameter("eps", eps);
  for (double t : times) {
    if (!(t >= 0.0)) throw DomainError("bobkov_local: times must be nonnegative");
    const ScalarField flow = cache.heat(truncated, t);
    const ScalarField lhs = (profile_of(flow).array().square() + alpha * gamma(triple, flow).array()).sqrt();
    const double c = c_alpha(k, alpha, t);
    const ScalarField rhs = cache.heat((profile_sq.array() + c * grad.array()).sqrt().matrix(), t);
    for (Eigen::Index x = 0; x < lhs.size(); ++x) {
      report.add_row(MarginRow{static_cast<std::size_t>(x), t, lhs[x] - rhs[x], lhs[x], rhs[x]});
    }
  }
  report.finalize(tol);
  return report;
}

VerifierReport bobkov_global(const MarkovTriple& triple, const ScalarField& f, double curvature, double tol) {
  require_positive_curvature(curvature, "bobkov_global");
  triple.check_field(f);
  require_unit_range(f, "bobkov_global");
  const double root_k = std::sqrt(curvature);
  const double lhs = root_k * isoperimetric_profile(std::clamp(integral(triple, f), 0.0, 1.0));
  const ScalarField integrand = (curvature * profile_of(f).array().square() + gamma(triple, f).array()).sqrt();
  const double rhs = integral(triple, integrand);

  VerifierReport report;
  report.name = "bobkov-global";
  report.add_parameter("K", curvature);
  report.add_row(MarginRow{std::nullopt, std::nullopt, lhs - rhs, lhs, rhs});
  report.finalize(tol);
  return report;
}

double two_point_bobkov_margin(double a, double b) {
  if (!(a >= 0.0 && a <= 1.0 && b >= 0.0 && b <= 1.0)) throw DomainError("two_point_bobkov_margin: a, b must lie in [0,1]");
  const double jump = 0.25 * (a - b) * (a - b);
  const double ia = isoperimetric_profile(a);
  const double ib = isoperimetric_profile(b);
  const double rhs = 0.5 * std::sqrt(ia * ia + jump) + 0.5 * std::sqrt(ib * ib + jump);
  return isoperimetric_profile(0.5 * (a + b)) - rhs;
}

ScalarField indicator(const MarkovTriple& triple, const StateSet& set) {
  ScalarField chi = ScalarField::Zero(static_cast<Eigen::Index>(triple.size()));
  for (std::size_t x : set) {
    triple.check_state(x);
    chi[static_cast<Eigen::Index>(x)] = 1.0;
  }
  return chi;
}

double measure_of(const MarkovTriple& triple, const StateSet& set) { return integral(triple, indicator(triple, set)); }

double total_variation(const MarkovTriple& triple, const ScalarField& f) {
  triple.check_field(f);
  const Eigen::VectorXd& m = triple.measure();
  double total = 0.0;
  for (const Edge& e : triple.edges()) {
    const auto i = static_cast<Eigen::Index>(e.i);
    const auto j = static_cast<Eigen::Index>(e.j);
    const double weight = std::sqrt(m[i] * e.rate_ij * m[j] * e.rate_ji) * e.length;
    total += weight * std::abs(f[j] - f[i]);
  }
  return total;
}

double perimeter(const MarkovTriple& triple, const StateSet& set) { return total_variation(triple, indicator(triple, set)); }

VerifierReport isoperimetric_margin(const MarkovTriple& triple, const StateSet& set, double curvature,
                                    double relative_tol) {
  require_positive_curvature(curvature, "isoperimetric_margin");
  const double mass = std::clamp(measure_of(triple, set), 0.0, 1.0);
  const double lhs = std::sqrt(curvature) * isoperimetric_profile(mass);
  const double rhs = perimeter(triple, set);

  VerifierReport report;
  report.name = "isoperimetry";
  report.add_parameter("K", curvature);
  report.add_parameter("mass", mass);
  report.add_parameter("relative_tolerance", relative_tol);
  report.add_row(MarginRow{std::nullopt, std::nullopt, lhs - rhs, lhs, rhs});
  report.finalize(relative_tol * lhs);
  return report;
}

double bv_corollary_margin(const MarkovTriple& triple, const ScalarField& f, double curvature) {
  require_positive_curvature(curvature, "bv_corollary_margin");
  triple.check_field(f);
  require_unit_range(f, "bv_corollary_margin");
  const double root_k = std::sqrt(curvature);
  const double lhs = root_k * isoperimetric_profile(std::clamp(integral(triple, f), 0.0, 1.0));
  return lhs - (root_k * integral(triple, profile_of(f)) + total_variation(triple, f));
}

double lip_corollary_margin(const MarkovTriple& triple, const ScalarField& f, double curvature) {
  require_positive_curvature(curvature, "lip_corollary_margin");
  triple.check_field(f);
  require_unit_range(f, "lip_corollary_margin");
  const double root_k = std::sqrt(curvature);
  const double lhs = root_k * isoperimetric_profile(std::clamp(integral(triple, f), 0.0, 1.0));
  return lhs - integral(triple, root_k * profile_of(f) + lip_slope(triple, f));
}

double discriminant_margin(const MarkovTriple& triple, const ScalarField& g) {
  const ScalarField grad = gamma(triple, g);
  const ScalarField grad_grad = gamma(triple, grad);
  const ScalarField cross = gamma(triple, g, grad);
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index x = 0; x < g.size(); ++x) {
    if (!(grad[x] > 0.0)) continue;
    const double product = grad[x] * grad_grad[x];
    worst = std::max(worst, (cross[x] * cross[x] - product) / std::max(1.0, product));
  }
  return std::isfinite(worst) ? worst : 0.0;
}

IntervalUnion::IntervalUnion(std::vector<Interval> intervals) {
  for (const Interval& iv : intervals) {
    if (std::isnan(iv.lo) || std::isnan(iv.hi)) throw DomainError("interval endpoint is NaN");
    if (iv.lo > iv.hi) throw DomainError("interval has lo > hi");
  }
  std::erase_if(intervals, [](const Interval& iv) { return iv.lo == iv.hi; });
  std::sort(intervals.begin(), intervals.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  for (const Interval& iv : intervals) {
    if (!intervals_.empty() && iv.lo <= intervals_.back().hi) {
      intervals_.back().hi = std::max(intervals_.back().hi, iv.hi);
    } else {
      intervals_.push_back(iv);
    }
  }
}

IntervalUnion IntervalUnion::parse(std::string_view text) {
  std::vector<Interval> intervals;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == ',' || text[pos] == 'U' || text[pos] == '\t')) ++pos;
  };
  auto read_number = [&](char stop1, char stop2) {
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] != stop1 && text[pos] != stop2) ++pos;
    if (pos >= text.size()) throw DomainError("interval list: unterminated interval in '" + std::string(text) + "'");
    std::string token(text.substr(start, pos - start));
    std::erase(token, ' ');
    if (token == "inf" || token == "+inf") return std::numeric_limits<double>::infinity();
    if (token == "-inf") return -std::numeric_limits<double>::infinity();
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size()) {
      throw DomainError("interval list: bad endpoint '" + token + "'");
    }
    return value;
  };
  skip();
  while (pos < text.size()) {
    if (text[pos] != '[' && text[pos] != '(') {
      throw DomainError("interval list: expected '[' at position " + std::to_string(pos + 1));
    }
    ++pos;
    const double lo = read_number(',', ',');
    ++pos;
    const double hi = read_number(']', ')');
    ++pos;
    intervals.push_back(Interval{lo, hi});
    skip();
  }
  return IntervalUnion(std::move(intervals));
}

GaussianSet gaussian_interval_oracle(const IntervalUnion& set) {
  GaussianSet out;
  for (const auto& iv : set.intervals()) {
    const double upper = std::isinf(iv.hi) ? 1.0 : normal_cdf(iv.hi);
    const double lower = std::isinf(iv.lo) ? 0.0 : normal_cdf(iv.lo);
    out.mass += upper - lower;
    if (std::isfinite(iv.lo)) out.perimeter += normal_pdf(iv.lo);
    if (std::isfinite(iv.hi)) out.perimeter += normal_pdf(iv.hi);
  }
  return out;
}

std::vector<double> geometric_time_grid(double t_min, double t_max, std::size_t count) {
  if (!(t_min > 0.0 && t_max >= t_min) || count == 0) throw DomainError("geometric_time_grid: need 0 < t_min <= t_max");
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = t_min;
    return grid;
  }
  const double ratio = std::log(t_max / t_min);
  for (std::size_t k = 0; k < count; ++k) {
    grid[k] = t_min * std::exp(ratio * static_cast<double>(k) / static_cast<double>(count - 1));
  }
  grid.back() = t_max;
  return grid;
}

}  // namespace gammalab
