#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gammalab/curvature.hpp"
#include "gammalab/spaces.hpp"
#include "gammalab/verifiers.hpp"
#include "support.hpp"

using namespace gammalab;
using testing::random_field;

namespace {

ScalarField vec(double a, double b) {
  ScalarField out(2);
  out << a, b;
  return out;
}

const double kInvSqrt2Pi_ = 1.0 / std::sqrt(2 * M_PI);

}  // namespace

TEST_CASE("truncate") {
  CHECK((truncate(vec(0, 1), 0.1) - vec(0.1, 0.9)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((truncate(vec(0.3, 0.6), 0.1) - vec(0.3, 0.6)).cwiseAbs().maxCoeff() == 0.0);
  std::mt19937_64 rng(2);
  const MarkovTriple c5 = build_cycle(5);
  for (int k = 0; k < 100; ++k) {
    const ScalarField f = random_field(5, rng, 0.0, 1.0);
    CHECK((gamma(c5, truncate(f, 0.05)) - gamma(c5, f)).maxCoeff() <= 1e-15);
  }
}

TEST_CASE("psi values and partials") {
  const PsiDerivatives p0 = psi(0.7, 0.3, 0.0, 1.3, 0.4);
  CHECK(std::abs(p0.value - isoperimetric_profile(0.3)) <= 1e-15);
  CHECK(std::abs(p0.dv - c_alpha(1.3, 0.4, 0.7) / (2 * isoperimetric_profile(0.3))) <= 1e-14);
  CHECK(psi(0.5, 0.3, 0.2, 1.0, 1.0).dt == 0.0);

  const double t = 0.5, u = 0.3, v = 0.2, k = 1.0, a = 0.5, h = 1e-5;
  auto val = [&](double tt, double uu, double vv) { return psi(tt, uu, vv, k, a).value; };
  const PsiDerivatives p = psi(t, u, v, k, a);
  CHECK(std::abs(p.dt - (val(t + h, u, v) - val(t - h, u, v)) / (2 * h)) <= 1e-8);
  CHECK(std::abs(p.du - (val(t, u + h, v) - val(t, u - h, v)) / (2 * h)) <= 1e-8);
  CHECK(std::abs(p.dv - (val(t, u, v + h) - val(t, u, v - h)) / (2 * h)) <= 1e-8);
  const double hh = 1e-4;
  auto du = [&](double uu, double vv) { return psi(t, uu, vv, k, a).du; };
  auto dv = [&](double uu, double vv) { return psi(t, uu, vv, k, a).dv; };
  CHECK(std::abs(p.duu - (du(u + hh, v) - du(u - hh, v)) / (2 * hh)) <= 1e-6);
  CHECK(std::abs(p.duv - (du(u, v + hh) - du(u, v - hh)) / (2 * hh)) <= 1e-6);
  CHECK(std::abs(p.dvv - (dv(u, v + hh) - dv(u, v - hh)) / (2 * hh)) <= 1e-6);
}

TEST_CASE("zeta and phi on constant fields") {
  const MarkovTriple c5 = build_cycle(5);
  const SpectralCache cache(c5);
  const Curvature k = curvature_global(c5).global;
  const ScalarField f = ScalarField::Constant(5, 0.3);
  const ZetaField z = zeta_field(cache, f, 1.0, 0.4, 0.5, k);
  CHECK(z.field.cwiseAbs().maxCoeff() <= 1e-15);
  std::mt19937_64 rng(1);
  const ScalarField phi = random_field(5, rng, 0.0, 1.0);
  const std::vector<double> times{0.2, 0.5, 0.8};
  const PhiTrace trace = phi_trace(cache, f, phi, 1.0, 0.5, k, times);
  for (double v : trace.values) CHECK(std::abs(v - isoperimetric_profile(0.3) * integral(c5, phi)) <= 1e-14);
  CHECK(std::abs(trace.end - trace.start) <= 1e-14);
}

TEST_CASE("zeta: two formulas agree, and the quadratic form discriminant") {
  std::mt19937_64 rng(9);
  for (const auto& [name, t] : testing::model_spaces()) {
    CAPTURE(name);
    const SpectralCache cache(t);
    const Curvature k = curvature_global(t).global;
    const ScalarField x = state_coordinates(t);
    for (int s = 0; s < 5; ++s) {
      const ScalarField f = t.size() > 50 ? testing::sigmoid(x, 0.5 + s * 0.4, 0.2 * s) : random_field(t.size(), rng, 0.05, 0.95);
      for (double alpha : testing::alphas_for(k.value())) {
        CHECK(zeta_field(cache, f, 1.0, 0.5, alpha, k).relative_disagreement() <= 1e-10);
      }
      CHECK(discriminant_margin(t, cache.heat(f, 0.5)) <= 1e-10);
    }
  }
}

TEST_CASE("phi endpoint identity and the transfer to the local inequality") {
  std::mt19937_64 rng(10);
  for (const auto& [name, t] : testing::model_spaces()) {
    CAPTURE(name);
    const SpectralCache cache(t);
    const Curvature k = curvature_global(t).global;
    const ScalarField f = random_field(t.size(), rng, 0.05, 0.95);
    const double horizon = 0.7;
    const std::vector<double> times{0.35};
    const PhiTrace trace = phi_trace(cache, f, random_field(t.size(), rng, 0.0, 1.0), horizon, 0.2, k, times);
    CHECK(trace.endpoint_residual <= 1e-10);

    const std::vector<double> local_times{horizon};
    const VerifierReport local = bobkov_local(cache, f, 0.2, k, local_times, 1e-4);
    const std::size_t step = t.size() > 20 ? 41 : 1;
    for (std::size_t x = 0; x < t.size(); x += step) {
      ScalarField point = ScalarField::Zero(static_cast<Eigen::Index>(t.size()));
      point(static_cast<Eigen::Index>(x)) = 1.0 / t.measure()(static_cast<Eigen::Index>(x));
      const PhiTrace p = phi_trace(cache, f, point, horizon, 0.2, k, times);
      CHECK(std::abs(local.rows[x].margin + p.endpoint_rhs) <= 1e-10);
    }
  }
}

TEST_CASE("local inequality at t=0 and for constants") {
  std::mt19937_64 rng(12);
  for (const auto& [name, t] : testing::model_spaces()) {
    CAPTURE(name);
    const SpectralCache cache(t);
    const Curvature k = curvature_global(t).global;
    const std::vector<double> times{0.0};
    for (double alpha : testing::alphas_for(k.value())) {
      CHECK(bobkov_local(cache, random_field(t.size(), rng, 0.0, 1.0), alpha, k, times).worst_margin <= 1e-12);
    }
    const std::vector<double> later{0.0, 0.5, 2.0};
    const VerifierReport constant = bobkov_local(cache, ScalarField::Constant(static_cast<Eigen::Index>(t.size()), 0.4), 0.5, k, later);
    CHECK(std::abs(constant.worst_margin) <= 1e-12);
  }
  const SpectralCache cache(build_two_point(1.0));
  const std::vector<double> times{0.1};
  CHECK_THROWS_AS(bobkov_local(cache, vec(0.2, 0.4), 0.5, Curvature::negative_infinity(), times), DomainError);
}

TEST_CASE("global inequality and the two-point form") {
  CHECK(two_point_bobkov_margin(0.3, 0.3) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(two_point_bobkov_margin(0.0, 1.0) - (kInvSqrt2Pi_ - 0.5)) <= 1e-15);
  const MarkovTriple tp = build_two_point(1.0);
  for (double a : {0.0, 0.2, 0.9}) {
    for (double b : {0.1, 0.5, 1.0}) {
      const VerifierReport r = bobkov_global(tp, vec(a, b), 2.0);
      CHECK(std::abs(r.worst_margin - std::sqrt(2.0) * two_point_bobkov_margin(a, b)) <= 1e-12);
      CHECK(lip_corollary_margin(tp, vec(a, b), 2.0) <= 1e-12);
    }
  }
  CHECK(std::abs(bobkov_global(tp, vec(0.4, 0.4), 2.0).worst_margin) <= 1e-15);
  CHECK(std::abs(bv_corollary_margin(tp, vec(0.4, 0.4), 2.0)) <= 1e-15);
  CHECK_THROWS_AS(bobkov_global(tp, vec(0.4, 0.5), -1.0), DomainError);
}

TEST_CASE("perimeter and isoperimetry") {
  const MarkovTriple tp = build_two_point(1.0);
  CHECK(perimeter(tp, {}) == 0.0);
  CHECK(perimeter(tp, {0, 1}) == 0.0);
  CHECK(std::abs(perimeter(tp, {0}) - 0.5) <= 1e-15);
  const VerifierReport iso = isoperimetric_margin(tp, {0}, 2.0);
  CHECK(std::abs(iso.worst_margin - (std::sqrt(2.0) * kInvSqrt2Pi_ - 0.5)) <= 1e-12);
  CHECK(std::abs(isoperimetric_margin(tp, {}, 2.0).worst_margin) <= 1e-15);
  CHECK(measure_of(tp, {1}) == 0.5);
  CHECK(std::abs(total_variation(tp, vec(0, 1)) - 0.5) <= 1e-15);
}

TEST_CASE("square-root subadditivity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng);
    CHECK(std::sqrt(x + y) <= std::sqrt(x) + std::sqrt(y) + 1e-15);
  }
}

TEST_CASE("gaussian interval oracle") {
  auto g = gaussian_interval_oracle(IntervalUnion::parse("[-inf,0]"));
  CHECK(std::abs(g.mass - 0.5) <= 1e-15);
  CHECK(std::abs(g.perimeter - kInvSqrt2Pi_) <= 1e-15);
  g = gaussian_interval_oracle(IntervalUnion::parse("[-inf,inf]"));
  CHECK(g.mass == 1.0);
  CHECK(g.perimeter == 0.0);
  g = gaussian_interval_oracle(IntervalUnion::parse("[-1,1]"));
  CHECK(std::abs(g.mass - 0.682689492137086) <= 1e-14);
  CHECK(std::abs(g.perimeter - 0.483941449038287) <= 1e-14);
  CHECK(g.perimeter - isoperimetric_profile(g.mass) > 0.12);
  const IntervalUnion merged = IntervalUnion::parse("[2,3] U [-1,0.5] U [0,1]");
  REQUIRE(merged.intervals().size() == 2);
  CHECK(merged.intervals()[0].lo == -1.0);
  CHECK(merged.intervals()[0].hi == 1.0);
  CHECK_THROWS_AS(IntervalUnion::parse("[1,0"), DomainError);
}

TEST_CASE("time grid") {
  const auto grid = geometric_time_grid(0.01, 1.0, 5);
  REQUIRE(grid.size() == 5);
  CHECK(grid.front() == doctest::Approx(0.01));
  CHECK(grid.back() == 1.0);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] / grid[i - 1] == doctest::Approx(std::sqrt(std::sqrt(100.0))));
}

TEST_CASE("report finalization") {
  VerifierReport r;
  r.add_row({1, 0.5, -0.2, 0, 0});
  r.add_row({2, 0.1, 0.3, 0, 0});
  r.finalize(0.5);
  CHECK(r.worst_margin == 0.3);
  CHECK(r.worst_state == std::optional<std::size_t>(2));
  CHECK(r.worst_time == std::optional<double>(0.1));
  CHECK(r.samples == 2);
  CHECK(r.pass);
  r.finalize(0.1);
  CHECK_FALSE(r.pass);
}

TEST_CASE("global inequality sharpens toward half-lines on refined chains") {
  // s * h held fixed at 0.03, K = computed K*.
  double previous = -1.0;
  for (double s : {4.0, 8.0, 16.0}) {
    const MarkovTriple ou = build_ou_chain(static_cast<std::size_t>(400 * s), 6.0);
    const double k = curvature_global(ou).global.value();
    const double m = bobkov_global(ou, testing::sigmoid(state_coordinates(ou), s, 0.0), k).worst_margin;
    CAPTURE(s);
    CHECK(m < 0.0);
    CHECK(m > previous);
    previous = m;
  }
}

TEST_CASE("global margin converges to the continuum quadrature") {
  for (double s : {4.0, 8.0}) {
    CAPTURE(s);
    const double continuum = testing::continuum_sigmoid_bobkov_margin(s);
    CHECK(continuum < 0.0);
    double gap = 1.0;
    for (std::size_t n : {1600, 3200, 6400}) {
      const MarkovTriple ou = build_ou_chain(n, 6.0);
      const double k = curvature_global(ou).global.value();
      const double m = bobkov_global(ou, testing::sigmoid(state_coordinates(ou), s, 0.0), k).worst_margin;
      const double next = std::abs(m - continuum);
      CHECK(next <= gap / 3.0);
      gap = next;
    }
    CHECK(gap <= 0.05 * std::abs(continuum));
  }
}

TEST_CASE("zeta for a steep sigmoid improves under refinement") {
  double previous = -1.0;
  for (std::size_t n : {200, 400, 800}) {
    const MarkovTriple ou = build_ou_chain(n, 6.0);
    const SpectralCache cache(ou);
    const Curvature k = curvature_global(ou).global;
    const ScalarField f = testing::sigmoid(state_coordinates(ou), 4.0, 0.0);
    const double worst = zeta_field(cache, f, 1.0, 0.9, 1.0 / k.value(), k).field.minCoeff();
    CAPTURE(n);
    CHECK(worst > previous);
    previous = worst;
  }
  CHECK(previous >= -5e-3);
}
