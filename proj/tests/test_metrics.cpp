#include "npga/metrics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

using npga::BNEOracle;
using npga::Matrix;
using npga::MetricOptions;
using npga::PaymentRule;
using npga::PriorSpec;
using npga::RngStream;
using npga::SettingSpec;
using npga::StrategyFn;
using npga::UtilityModel;
using npga::Vector;

namespace {

std::vector<StrategyFn> oracle_profile(const BNEOracle& oracle) {
  return oracle.strategies;
}

}  // namespace

TEST_CASE("equilibrium loss is exactly zero under common random numbers",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const UtilityModel model;
  const RngStream rng(11, 5);

  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  for (int bidder = 0; bidder < 2; ++bidder) {
    const double loss =
        npga::l_star(spec, PaymentRule::first_price, prior, model, fpsb,
                     bidder, fpsb.strategies[bidder], 1 << 12, rng);
    REQUIRE(loss == 0.0);
  }

  const BNEOracle truthful = npga::bne_truthful(2);
  const double loss =
      npga::l_star(spec, PaymentRule::second_price, prior, model, truthful, 0,
                   truthful.strategies[0], 1 << 12, rng);
  REQUIRE(loss == 0.0);
}

TEST_CASE("constant-zero bidding forfeits the first-price equilibrium payoff",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  const double loss = npga::l_star(
      spec, PaymentRule::first_price, prior, UtilityModel{}, fpsb, 0,
      npga::constant_strategy(Vector::Zero(1)), 1 << 16, RngStream(12, 5));
  REQUIRE(loss == Catch::Approx(1.0 / 6.0).margin(0.005));
}

TEST_CASE("bid distance matches the closed-form integral", "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  const RngStream rng(13, 5);

  REQUIRE(npga::strategy_rmse(spec, prior, fpsb, 0, fpsb.strategies[0],
                              1 << 14, rng) == 0.0);

  const double rmse = npga::strategy_rmse(
      spec, prior, fpsb, 1, npga::truthful_strategy(), 1 << 16, rng);
  REQUIRE(rmse == Catch::Approx(1.0 / std::sqrt(12.0)).margin(0.005));

  REQUIRE_THROWS_AS(npga::strategy_rmse(spec, prior, fpsb, 2,
                                        npga::truthful_strategy(), 16, rng),
                    npga::Error);
}

TEST_CASE("best-response gain reproduces the closed-form deviation value",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const std::vector<StrategyFn> truthful(2, npga::truthful_strategy());

  const double gain = npga::lambda_hat(
      spec, PaymentRule::first_price, prior, UtilityModel{}, truthful, 0,
      Vector::Ones(1), Vector::Zero(1), 1 << 14, 1 << 8, RngStream(14, 5));
  REQUIRE(gain == Catch::Approx(0.25).margin(0.02));
}

TEST_CASE("best-response gain is nonnegative on the grid and zero at argmax",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  const RngStream rng(15, 5);

  const int grid_points = 16;
  const double hi = npga::kActionBoxScale;
  Vector value(1);
  value << 0.8;
  double smallest = std::numeric_limits<double>::infinity();
  for (int w = 0; w < grid_points; ++w) {
    Vector bid(1);
    bid << hi * w / (grid_points - 1);
    const double gain = npga::lambda_hat(
        spec, PaymentRule::first_price, prior, UtilityModel{},
        oracle_profile(fpsb), 0, value, bid, 1 << 10, grid_points, rng);
    REQUIRE(gain >= 0.0);
    smallest = std::min(smallest, gain);
  }
  REQUIRE(smallest == 0.0);
}

TEST_CASE("truthful second-price bids never lose to a grid deviation",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const std::vector<StrategyFn> truthful(2, npga::truthful_strategy());

  Vector value(1);
  value << 0.55;
  const double gain = npga::lambda_hat(
      spec, PaymentRule::second_price, prior, UtilityModel{}, truthful, 0,
      value, value, 1 << 12, 1 << 6, RngStream(16, 5));
  REQUIRE(gain <= 0.0);
  REQUIRE(gain >= -0.02);
}

TEST_CASE("interim losses of the first-price equilibrium stay near zero",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  const RngStream rng(17, 5);

  const npga::InterimReport report = npga::interim_metrics(
      spec, PaymentRule::first_price, prior, UtilityModel{},
      oracle_profile(fpsb), 1 << 9, 1 << 6, rng);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(report.l_hat(i) <= report.eps_hat(i));
    REQUIRE(report.l_hat(i) >= -0.005);
    REQUIRE(report.eps_hat(i) <= 0.05);
  }

  const npga::InterimReport doubled = npga::interim_metrics(
      spec, PaymentRule::first_price, prior, UtilityModel{},
      oracle_profile(fpsb), 1 << 10, 1 << 6, rng.child("doubled"));
  for (int i = 0; i < 2; ++i)
    REQUIRE(std::abs(doubled.l_hat(i) - report.l_hat(i)) <= 0.01);
}

TEST_CASE("truthful second-price play has nonpositive interim losses",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const std::vector<StrategyFn> truthful(2, npga::truthful_strategy());

  const npga::InterimReport report = npga::interim_metrics(
      spec, PaymentRule::second_price, prior, UtilityModel{}, truthful, 1 << 9,
      1 << 6, RngStream(18, 5));
  for (int i = 0; i < 2; ++i) {
    REQUIRE(report.eps_hat(i) <= 1e-12);
    REQUIRE(report.l_hat(i) <= report.eps_hat(i));
    REQUIRE(report.l_hat(i) >= -0.02);
  }
}

TEST_CASE("interim losses reject correlated priors", "[metrics]") {
  const SettingSpec spec = npga::llg_setting();
  const PriorSpec prior = PriorSpec::correlated_llg(1.0, 2.0, 0.5);
  const std::vector<StrategyFn> truthful(3, npga::truthful_strategy());
  const RngStream rng(19, 5);

  REQUIRE_THROWS_AS(
      npga::interim_metrics(spec, PaymentRule::nearest_zero, prior,
                            UtilityModel{}, truthful, 1 << 6, 1 << 4, rng),
      npga::Error);
  REQUIRE_THROWS_AS(
      npga::lambda_hat(spec, PaymentRule::nearest_zero, prior, UtilityModel{},
                       truthful, 0, Vector::Ones(1), Vector::Ones(1), 1 << 6,
                       1 << 4, rng),
      npga::Error);
  REQUIRE_THROWS_AS(
      npga::monotonicity_check(spec, PaymentRule::nearest_zero, prior,
                               UtilityModel{}, truthful, 8, 0.01, 1 << 6, rng),
      npga::Error);
}

TEST_CASE("full evaluation reports and flags unavailable metrics",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  MetricOptions options;
  options.h_primary = 1 << 12;
  options.h_interim = 1 << 8;
  options.grid_points = 1 << 5;
  const RngStream rng(20, 5);

  const npga::MetricReport with_oracle = npga::evaluate_strategies(
      spec, PaymentRule::first_price, prior, UtilityModel{},
      oracle_profile(fpsb), &fpsb, options, rng);
  REQUIRE(with_oracle.oracle_available);
  REQUIRE(with_oracle.interim_available);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(with_oracle.l_star(i) == 0.0);
    REQUIRE(with_oracle.rmse(i) == 0.0);
    REQUIRE(with_oracle.l_hat(i) <= with_oracle.eps_hat(i));
    REQUIRE(std::isfinite(with_oracle.eps_hat(i)));
  }

  const npga::MetricReport no_oracle = npga::evaluate_strategies(
      spec, PaymentRule::first_price, prior, UtilityModel{},
      oracle_profile(fpsb), nullptr, options, rng);
  REQUIRE_FALSE(no_oracle.oracle_available);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(std::isnan(no_oracle.l_star(i)));
    REQUIRE(std::isnan(no_oracle.rmse(i)));
    REQUIRE(std::isfinite(no_oracle.eps_hat(i)));
  }

  const SettingSpec llg = npga::llg_setting();
  const PriorSpec correlated = PriorSpec::correlated_llg(1.0, 2.0, 0.5);
  const std::vector<StrategyFn> truthful(3, npga::truthful_strategy());
  const npga::MetricReport no_interim = npga::evaluate_strategies(
      llg, PaymentRule::nearest_zero, correlated, UtilityModel{}, truthful,
      nullptr, options, rng);
  REQUIRE_FALSE(no_interim.interim_available);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(std::isnan(no_interim.l_hat(i)));
    REQUIRE(std::isnan(no_interim.eps_hat(i)));
  }
}

TEST_CASE("synthetic gradient games pin the monotonicity fraction",
          "[metrics]") {
  const RngStream rng(21, 5);
  const int n_pairs = 64;
  std::vector<Matrix> first(2, Matrix(n_pairs, 1));
  std::vector<Matrix> second(2, Matrix(n_pairs, 1));
  for (int p = 0; p < n_pairs; ++p) {
    for (int i = 0; i < 2; ++i) {
      first[i](p, 0) = rng.child("first").uniform(2 * p + i);
      second[i](p, 0) = rng.child("second").uniform(2 * p + i);
    }
  }

  const auto convex = [](int, int, const Vector& action) {
    return action.squaredNorm();
  };
  REQUIRE(npga::monotonicity_fraction(first, second, convex, 0.01) == 0.0);

  const auto concave = [](int, int, const Vector& action) {
    return -action.squaredNorm();
  };
  REQUIRE(npga::monotonicity_fraction(first, second, concave, 0.01) == 1.0);

  REQUIRE_THROWS_AS(npga::monotonicity_fraction(first, first, convex, 0.01),
                    npga::Error);
  REQUIRE_THROWS_AS(npga::monotonicity_fraction(first, second, convex, 0.0),
                    npga::Error);
}

TEST_CASE("equilibrium strategies satisfy payoff monotonicity on their range",
          "[metrics]") {
  const SettingSpec spec = npga::single_item_setting(2);
  const PriorSpec prior = PriorSpec::uniform(0.0, 1.0, 2);
  const BNEOracle fpsb = npga::bne_fpsb_symmetric(prior, 2, 1.0);
  const RngStream rng(22, 5);

  const double first_price = npga::monotonicity_check(
      spec, PaymentRule::first_price, prior, UtilityModel{},
      oracle_profile(fpsb), 128, 0.01, 1 << 14, rng);
  REQUIRE(first_price >= 0.95);

  const std::vector<StrategyFn> truthful(2, npga::truthful_strategy());
  const double second_price = npga::monotonicity_check(
      spec, PaymentRule::second_price, prior, UtilityModel{}, truthful, 128,
      0.01, 1 << 14, rng.child("second_price"));
  REQUIRE(second_price >= 0.95);
}

TEST_CASE("metric options validate their ranges", "[metrics]") {
  MetricOptions options;
  options.grid_points = 1;
  REQUIRE_THROWS_AS(npga::validate_metric_options(options), npga::Error);
  options.grid_points = 8;
  options.box_scale = 0.0;
  REQUIRE_THROWS_AS(npga::validate_metric_options(options), npga::Error);
  options.box_scale = 1.2;
  options.h_primary = 0;
  REQUIRE_THROWS_AS(npga::validate_metric_options(options), npga::Error);
}
