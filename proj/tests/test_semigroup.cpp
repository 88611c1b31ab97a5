#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "gammalab/semigroup.hpp"
#include "gammalab/spaces.hpp"
#include "support.hpp"

using namespace gammalab;
using testing::random_field;

TEST_CASE("two-point closed forms") {
  const SpectralCache cache(build_two_point(1.0));
  CHECK(cache.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cache.eigenvalues()(1) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(cache.spectral_gap() == doctest::Approx(2.0).epsilon(1e-14));
  ScalarField f(2);
  f << 0, 1;
  for (double t : {0.0, 0.3, 1.0, 4.0}) {
    const double e = std::exp(-2 * t);
    const ScalarField h = cache.heat(f, t);
    CHECK(std::abs(h(0) - (0.5 - 0.5 * e)) <= 1e-15);
    CHECK(std::abs(h(1) - (0.5 + 0.5 * e)) <= 1e-15);
    CHECK(std::abs(gradient_estimate_margin(cache, f, t, 2.0)) <= 1e-12);
    if (t > 0) {
      const Eigen::MatrixXd P = cache.heat_kernel(t).matrix;
      CHECK(std::abs(P(0, 0) - (0.5 + 0.5 * e)) <= 1e-14);
      CHECK(std::abs(P(0, 1) - (0.5 - 0.5 * e)) <= 1e-14);
    }
  }
  CHECK(std::abs(ergodic_defect(cache, f, 1.0) - 0.5 * std::exp(-2.0)) <= 1e-15);
}

TEST_CASE("complete graph spectrum") {
  const SpectralCache cache(build_complete(3));
  const Eigen::VectorXd ev = cache.eigenvalues();
  // build_complete uses unit rates to every other state
  CHECK(ev(0) == doctest::Approx(0.0));
  CHECK(std::abs(ev(1) + 3.0) <= 1e-12);
  CHECK(std::abs(ev(2) + 3.0) <= 1e-12);
}

TEST_CASE("spectral heat agrees with the matrix exponential and the uniformized kernel") {
  std::mt19937_64 rng(3);
  for (const auto& [name, t] : testing::model_spaces()) {
    CAPTURE(name);
    const SpectralCache cache(t);
    const Eigen::MatrixXd L = t.generator_matrix();
    for (double time : {0.05, 0.5, 2.0}) {
      const ScalarField f = random_field(t.size(), rng);
      const ScalarField h = cache.heat(f, time);
      const auto kernel = cache.heat_kernel(time);
      CHECK((kernel.matrix * f - h).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((kernel.matrix.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
      CHECK(kernel.matrix.minCoeff() >= 0.0);
      const Eigen::MatrixXd sym = t.measure().asDiagonal() * kernel.matrix;
      CHECK((sym - sym.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      if (t.size() <= 16) {
        const Eigen::MatrixXd expm = (time * L).exp();
        CHECK((expm * f - h).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("semigroup properties") {
  std::mt19937_64 rng(8);
  for (const auto& [name, t] : testing::model_spaces()) {
    CAPTURE(name);
    const SpectralCache cache(t);
    const double gap = cache.spectral_gap();
    for (int k = 0; k < 10; ++k) {
      const ScalarField f = random_field(t.size(), rng);
      const ScalarField g = random_field(t.size(), rng);
      CHECK((cache.heat(f, 0.0) - f).cwiseAbs().maxCoeff() == 0.0);
      CHECK((cache.heat(cache.heat(f, 0.3), 0.4) - cache.heat(f, 0.7)).cwiseAbs().maxCoeff() <= 1e-10);
      const ScalarField h = cache.heat(f, 0.6);
      CHECK(std::abs(integral(t, h) - integral(t, f)) <= 1e-10);
      CHECK(h.maxCoeff() <= f.maxCoeff() + 1e-10);
      CHECK(h.minCoeff() >= f.minCoeff() - 1e-10);
      CHECK(std::abs(inner(t, h, g) - inner(t, f, cache.heat(g, 0.6))) <= 1e-12);
      CHECK(l2_norm(t, h) <= l2_norm(t, f) + 1e-12);
      CHECK((cache.heat(laplacian(t, f), 0.6) - laplacian(t, h)).cwiseAbs().maxCoeff() <=
            1e-10 * std::max(1.0, laplacian(t, f).cwiseAbs().maxCoeff()));
      for (double time : {0.5, 2.0}) {
        CHECK(ergodic_defect(cache, f, time) <= std::exp(-gap * time) * ergodic_defect(cache, f, 0.0) + 1e-10);
      }
    }
    const ScalarField f = random_field(t.size(), rng);
    CHECK(ergodic_defect(cache, f, 10.0 / gap) <= 5e-5 * ergodic_defect(cache, f, 0.0));
  }
}

TEST_CASE("time derivative is the generator") {
  const MarkovTriple t = build_cycle(5);
  const SpectralCache cache(t);
  std::mt19937_64 rng(2);
  const ScalarField f = random_field(t.size(), rng);
  const ScalarField lh = laplacian(t, cache.heat(f, 0.5));
  double previous = 1.0;
  for (double h : {1e-2, 5e-3, 2.5e-3}) {
    const double err = ((cache.heat(f, 0.5 + h) - cache.heat(f, 0.5)) / h - lh).cwiseAbs().maxCoeff();
    CHECK(err <= 0.6 * previous);
    previous = err;
  }
}

TEST_CASE("variance regularization") {
  CHECK(regularization_time(1.0, 1.0) == doctest::Approx((std::exp(2.0) - 1) / 2).epsilon(1e-14));
  CHECK(std::abs(regularization_time(1e-8, 1.0) - 1.0) <= 1e-6);
  CHECK(regularization_time(0.0, 1.7) == 1.7);
  const SpectralCache cache(build_cycle(5));
  CHECK(std::abs(variance_regularization_margin(cache, ScalarField::Constant(5, 0.2), 1.0, 0.5)) <= 1e-15);
}

TEST_CASE("invalid times") {
  const SpectralCache cache(build_two_point(1.0));
  CHECK_THROWS_AS(cache.heat(ScalarField::Zero(2), -1.0), DomainError);
}
