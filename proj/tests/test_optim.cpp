#include "npga/optim.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

using npga::AdamConfig;
using npga::AdamState;
using npga::ESConfig;
using npga::Matrix;
using npga::Vector;

TEST_CASE("fitness-weighted noise combination is exact on paper values", "[optim]") {
  Matrix epsilons(1, 2);
  epsilons << 1.0, -0.5;
  Vector fitness(2);
  fitness << 2.0, 1.0;

  const Vector with_baseline =
      npga::es_combine(epsilons, fitness, 0.5, 0.5, true);
  REQUIRE(with_baseline(0) == Catch::Approx(2.5).margin(1e-15));

  const Vector without_baseline =
      npga::es_combine(epsilons, fitness, 0.5, 0.5, false);
  REQUIRE(without_baseline(0) == Catch::Approx(3.0).margin(1e-15));

  REQUIRE_THROWS_AS(npga::es_combine(epsilons, Vector::Ones(3), 0.0, 0.5, true),
                    npga::Error);
  REQUIRE_THROWS_AS(npga::es_combine(epsilons, fitness, 0.0, 0.0, true),
                    npga::Error);
}

TEST_CASE("constant fitness yields an exactly zero gradient", "[optim]") {
  const Vector theta = Vector::Constant(5, 0.7);
  const npga::RngStream rng(3, 3);
  auto constant = [](const Vector&) { return 1.25; };

  ESConfig baseline_on;
  baseline_on.population = 9;
  REQUIRE(npga::es_gradient(baseline_on, theta, constant, rng).isZero(0.0));

  ESConfig antithetic_off_baseline;
  antithetic_off_baseline.population = 16;
  antithetic_off_baseline.baseline = false;
  antithetic_off_baseline.antithetic = true;
  REQUIRE(npga::es_gradient(antithetic_off_baseline, theta, constant, rng)
              .isZero(0.0));
}

TEST_CASE("gradient draws are reproducible and stream-scoped", "[optim]") {
  const Vector theta = Vector::Zero(3);
  const npga::RngStream rng(8, 4);
  auto fitness = [](const Vector& x) { return x.sum() - x.squaredNorm(); };
  ESConfig es;
  es.population = 8;
  es.sigma = 0.2;
  const Vector first = npga::es_gradient(es, theta, fitness, rng);
  const Vector second = npga::es_gradient(es, theta, fitness, rng);
  REQUIRE(first == second);
  const Vector other = npga::es_gradient(es, theta, fitness, rng.child(1));
  REQUIRE(first != other);
}

TEST_CASE("pseudogradients are unbiased on a smooth objective", "[optim]") {
  const Vector theta = [] {
    Vector t(2);
    t << 0.5, -0.3;
    return t;
  }();
  const Vector target = [] {
    Vector t(2);
    t << 0.1, 0.2;
    return t;
  }();
  auto fitness = [&](const Vector& x) { return -(x - target).squaredNorm(); };
  Vector truth = -2.0 * (theta - target);

  const npga::RngStream rng(77, 0);
  const int runs = 4000;
  auto estimate = [&](ESConfig es, std::uint64_t tag) {
    Matrix grads(2, runs);
    for (int r = 0; r < runs; ++r)
      grads.col(r) =
          npga::es_gradient(es, theta, fitness, rng.child(tag).child(r));
    return grads;
  };
  auto check_unbiased = [&](const Matrix& grads) {
    for (int j = 0; j < 2; ++j) {
      const double mean = grads.row(j).mean();
      const double var =
          (grads.row(j).array() - mean).square().sum() / (runs - 1);
      const double se = std::sqrt(var / runs);
      REQUIRE(std::abs(mean - truth(j)) <= 3.5 * se);
    }
  };
  auto trace_var = [&](const Matrix& grads) {
    double total = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double mean = grads.row(j).mean();
      total += (grads.row(j).array() - mean).square().sum() / (runs - 1);
    }
    return total;
  };

  ESConfig es;
  es.population = 16;
  es.sigma = 0.3;

  const Matrix with_baseline = estimate(es, 1);
  check_unbiased(with_baseline);

  ESConfig plain = es;
  plain.baseline = false;
  const Matrix without_baseline = estimate(plain, 2);
  check_unbiased(without_baseline);

  ESConfig anti = plain;
  anti.antithetic = true;
  const Matrix antithetic = estimate(anti, 3);
  check_unbiased(antithetic);

  REQUIRE(trace_var(with_baseline) < 0.5 * trace_var(without_baseline));
  REQUIRE(trace_var(antithetic) < 0.5 * trace_var(without_baseline));
}

TEST_CASE("first ascent step moves by the learning rate", "[optim]") {
  const AdamConfig config;
  AdamState state = npga::make_adam_state(1);
  const auto [next, delta] = npga::adam_step(config, state, Vector::Ones(1));
  REQUIRE(next.t == 1);
  REQUIRE(delta(0) == Catch::Approx(0.001).margin(1e-9));
  REQUIRE(next.m(0) == Catch::Approx(0.1).margin(1e-15));
  REQUIRE(next.v(0) == Catch::Approx(0.001).margin(1e-15));

  const auto [after, delta2] = npga::adam_step(config, next, Vector::Ones(1));
  REQUIRE(after.t == 2);
  REQUIRE(delta2(0) == Catch::Approx(0.001).margin(1e-9));
}

TEST_CASE("zero gradients leave the parameters untouched", "[optim]") {
  const AdamConfig config;
  const auto [next, delta] =
      npga::adam_step(config, npga::make_adam_state(4), Vector::Zero(4));
  REQUIRE(delta.isZero(0.0));
  REQUIRE(next.m.isZero(0.0));
}

TEST_CASE("ill-formed optimizer inputs are rejected", "[optim]") {
  const AdamConfig config;
  Vector bad = Vector::Ones(2);
  bad(1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(npga::adam_step(config, npga::make_adam_state(2), bad),
                    npga::Error);
  REQUIRE_THROWS_AS(
      npga::adam_step(config, npga::make_adam_state(3), Vector::Ones(2)),
      npga::Error);

  ESConfig es;
  es.population = 0;
  REQUIRE_THROWS_AS(npga::validate_es_config(es), npga::Error);
  es.population = 4;
  es.sigma = -1.0;
  REQUIRE_THROWS_AS(npga::validate_es_config(es), npga::Error);
  REQUIRE(npga::default_sigma(141) == Catch::Approx(1.0 / std::sqrt(141.0)));
}
