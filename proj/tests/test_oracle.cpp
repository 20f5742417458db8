#include "npga/oracle.hpp"

#include "npga/core_pricing.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using npga::BNEOracle;
using npga::Matrix;
using npga::PaymentRule;
using npga::PriorSpec;
using npga::RngStream;
using npga::Vector;

TEST_CASE("truthful and constant strategies pass values through", "[oracle]") {
  const Matrix values = Matrix::Random(16, 2).cwiseAbs();
  REQUIRE(npga::truthful_strategy()(values) == values);

  Vector bid(2);
  bid << 0.25, 1.5;
  const Matrix bids = npga::constant_strategy(bid)(values);
  REQUIRE(bids.rows() == 16);
  for (Eigen::Index s = 0; s < bids.rows(); ++s) {
    REQUIRE(bids(s, 0) == 0.25);
    REQUIRE(bids(s, 1) == 1.5);
  }
  REQUIRE_THROWS_AS(npga::constant_strategy(Vector::Ones(3))(values),
                    npga::Error);
}

TEST_CASE("network strategy wraps the forward pass", "[oracle]") {
  const npga::NetworkArchitecture arch;
  Vector theta = Vector::Zero(141);
  theta(0) = 1.0;
  theta(20) = 1.0;
  theta(130) = 1.0 / (npga::kSeluLambda * npga::kSeluLambda);
  const Matrix values = Matrix::Random(32, 1).cwiseAbs();
  const Matrix bids = npga::network_strategy(arch, theta)(values);
  REQUIRE((bids - values).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE_THROWS_AS(npga::network_strategy(arch, Vector::Zero(7)),
                    npga::Error);
}

TEST_CASE("scalar strategies reject multi-bundle values", "[oracle]") {
  const npga::StrategyFn doubler =
      npga::scalar_strategy([](double v) { return 2.0 * v; });
  const Matrix values = Matrix::Random(8, 1).cwiseAbs();
  REQUIRE(doubler(values) == (2.0 * values).eval());
  REQUIRE_THROWS_AS(doubler(Matrix::Zero(8, 2)), npga::Error);
}

TEST_CASE("uniform first-price equilibria match closed forms", "[oracle]") {
  const BNEOracle shaded =
      npga::bne_fpsb_symmetric(PriorSpec::uniform(0.0, 10.0, 2), 2, 1.0);
  REQUIRE(shaded.strategies.size() == 2);
  Matrix v(3, 1);
  v << 10.0, 4.0, 0.0;
  const Matrix b = shaded.strategies[0](v);
  REQUIRE(b(0, 0) == Catch::Approx(5.0).margin(1e-12));
  REQUIRE(b(1, 0) == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(b(2, 0) == Catch::Approx(0.0).margin(1e-12));

  const BNEOracle shifted =
      npga::bne_fpsb_symmetric(PriorSpec::uniform(2.0, 10.0, 4), 4, 1.0);
  Matrix w(2, 1);
  w << 10.0, 2.0;
  const Matrix bw = shifted.strategies[3](w);
  REQUIRE(bw(0, 0) == Catch::Approx(8.0).margin(1e-12));
  REQUIRE(bw(1, 0) == Catch::Approx(2.0).margin(1e-12));

  const BNEOracle averse =
      npga::bne_fpsb_symmetric(PriorSpec::uniform(0.0, 10.0, 2), 2, 0.5);
  Matrix u(2, 1);
  u << 9.0, 10.0;
  const Matrix bu = averse.strategies[1](u);
  REQUIRE(bu(0, 0) == Catch::Approx(6.0).margin(1e-12));
  REQUIRE(bu(1, 0) == Catch::Approx(10.0 * 2.0 / 3.0).margin(1e-12));
}

TEST_CASE("first-price equilibrium rejects unsupported cases", "[oracle]") {
  const PriorSpec uniform = PriorSpec::uniform(0.0, 10.0, 2);
  REQUIRE_THROWS_AS(npga::bne_fpsb_symmetric(uniform, 1, 1.0), npga::Error);
  REQUIRE_THROWS_AS(npga::bne_fpsb_symmetric(uniform, 2, 0.0), npga::Error);
  REQUIRE_THROWS_AS(npga::bne_fpsb_symmetric(uniform, 2, 1.2), npga::Error);
  REQUIRE_THROWS_AS(
      npga::bne_fpsb_symmetric(PriorSpec::uniform(2.0, 10.0, 2), 2, 0.5),
      npga::Error);

  Vector lo(2), hi(2);
  lo << 0.0, 0.0;
  hi << 10.0, 8.0;
  REQUIRE_THROWS_AS(
      npga::bne_fpsb_symmetric(PriorSpec::uniform(lo, hi), 2, 1.0),
      npga::Error);
  REQUIRE_THROWS_AS(
      npga::bne_fpsb_symmetric(PriorSpec::correlated_llg(1.0, 2.0, 0.5), 3,
                               1.0),
      npga::Error);
}

TEST_CASE("gaussian first-price bids equal the rival-conditional mean",
          "[oracle]") {
  const double mean = 15.0, stddev = 5.0;
  const BNEOracle oracle =
      npga::bne_fpsb_symmetric(PriorSpec::gaussian(mean, stddev), 2, 1.0);
  const auto bid = [&](double v) {
    Matrix value(1, 1);
    value(0, 0) = v;
    return oracle.strategies[0](value)(0, 0);
  };

  // With two bidders the equilibrium bid is the expected rival value
  // conditional on losing, estimated here by direct simulation.
  const RngStream rng(91, 7);
  const std::int64_t draws = 1 << 17;
  for (const double v : {10.0, 15.0, 22.0}) {
    double sum = 0.0, sum_sq = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < draws; ++i) {
      const double rival = std::max(0.0, mean + stddev * rng.normal(i));
      if (rival >= v) continue;
      sum += rival;
      sum_sq += rival * rival;
      ++count;
    }
    const double mc = sum / static_cast<double>(count);
    const double var =
        (sum_sq / static_cast<double>(count) - mc * mc) /
        static_cast<double>(count);
    REQUIRE(bid(v) == Catch::Approx(mc).margin(3.0 * std::sqrt(var) + 1e-3));
  }

  double prev = 0.0;
  for (int k = 0; k <= 200; ++k) {
    const double v = 0.2 * k;
    const double beta = bid(v);
    REQUIRE(beta <= v + 1e-12);
    REQUIRE(beta >= prev - 1e-9);
    prev = beta;
  }
}

TEST_CASE("risk-averse gaussian bids survive a best-response search",
          "[oracle]") {
  const double mean = 15.0, stddev = 5.0, rho = 0.5;
  const BNEOracle oracle =
      npga::bne_fpsb_symmetric(PriorSpec::gaussian(mean, stddev), 2, rho);
  const auto bid = [&](double v) {
    Matrix value(1, 1);
    value(0, 0) = v;
    return oracle.strategies[0](value)(0, 0);
  };

  const RngStream rng(92, 7);
  const std::int64_t draws = 1 << 14;
  std::vector<double> rival_bids(draws);
  for (std::int64_t i = 0; i < draws; ++i)
    rival_bids[i] = bid(std::max(0.0, mean + stddev * rng.normal(i)));

  for (const double v : {5.0, 15.0, 25.0}) {
    const auto mean_utility = [&](double b) {
      double total = 0.0;
      for (const double rival : rival_bids)
        if (b > rival) total += std::pow(v - b, rho);
      return total / static_cast<double>(draws);
    };
    const double own = mean_utility(bid(v));
    double best = own;
    for (int w = 0; w < 256; ++w)
      best = std::max(best, mean_utility(v * w / 256.0));
    REQUIRE(best - own < 0.02);
  }
}

TEST_CASE("local bid formulas match frozen points", "[oracle]") {
  using npga::detail::llg_local_bid;
  const auto zero = PaymentRule::nearest_zero;
  const auto nbid = PaymentRule::nearest_bid;
  const auto nvcg = PaymentRule::nearest_vcg;

  REQUIRE(llg_local_bid(zero, 0.0, 1.0) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(llg_local_bid(zero, 0.0, std::exp(-1.0)) ==
          Catch::Approx(0.0).margin(1e-12));
  REQUIRE(llg_local_bid(zero, 0.0, 0.5) ==
          Catch::Approx(0.3068528194400547).margin(1e-12));
  REQUIRE(llg_local_bid(zero, 0.0, 0.2) == 0.0);
  REQUIRE(llg_local_bid(zero, 0.5, 0.5) ==
          Catch::Approx(0.4246358550964382).margin(1e-12));
  REQUIRE(llg_local_bid(zero, 0.5, 1.0) == Catch::Approx(1.0).margin(1e-12));

  REQUIRE(llg_local_bid(nbid, 0.0, 1.0) ==
          Catch::Approx(0.6931471805599453).margin(1e-12));
  REQUIRE(llg_local_bid(nbid, 0.0, 0.5) ==
          Catch::Approx(0.2876820724517809).margin(1e-12));
  REQUIRE(llg_local_bid(nbid, 0.5, 1.0) ==
          Catch::Approx(0.5753641449035618).margin(1e-12));
  REQUIRE(llg_local_bid(nbid, 0.0, 0.0) == 0.0);

  REQUIRE(llg_local_bid(nvcg, 0.0, 1.0) ==
          Catch::Approx(0.8284271247461903).margin(1e-12));
  REQUIRE(llg_local_bid(nvcg, 0.0, 0.1) == 0.0);
  REQUIRE(llg_local_bid(nvcg, 0.5, 1.0) ==
          Catch::Approx(0.7328638264796928).margin(1e-12));

  REQUIRE_THROWS_AS(llg_local_bid(PaymentRule::first_price, 0.0, 0.5),
                    npga::Error);
}

TEST_CASE("fast local utility equals the mechanism path", "[oracle]") {
  const npga::SettingSpec spec = npga::llg_setting();
  const RngStream rng(7, 3);
  const double value = 0.7;
  for (const auto rule : {PaymentRule::nearest_zero, PaymentRule::nearest_bid,
                          PaymentRule::nearest_vcg}) {
    for (int t = 0; t < 20000; ++t) {
      const std::uint64_t i = 3 * static_cast<std::uint64_t>(t);
      double b = 1.2 * rng.uniform(i);
      double o = 1.2 * rng.uniform(i + 1);
      double g = 2.0 * rng.uniform(i + 2);
      if (t % 7 == 0) o = 0.0;
      if (t % 13 == 0) b = 0.0;
      if (t % 11 == 0) g = b + o;
      Vector row(3);
      row << b, o, g;
      const int index = npga::winner_determination(spec, row);
      const bool wins = spec.allocations[index][0] != npga::kNoBundle;
      const double expected =
          wins ? value - npga::llg_core_closed_form(row, rule)(0) : 0.0;
      REQUIRE(npga::detail::llg_local1_utility(rule, value, b, o, g) ==
              expected);
    }
  }
}

TEST_CASE("LLG oracles pass their construction self-check", "[oracle]") {
  for (const auto rule : {PaymentRule::nearest_zero, PaymentRule::nearest_bid,
                          PaymentRule::nearest_vcg}) {
    for (const double gamma : {0.0, 0.5}) {
      const BNEOracle oracle = npga::bne_llg(rule, gamma);
      REQUIRE(oracle.strategies.size() == 3);
      const Matrix values = Matrix::Random(4, 1).cwiseAbs();
      REQUIRE(oracle.strategies[2](values) == values);
    }
  }
  REQUIRE_THROWS_AS(npga::bne_llg(PaymentRule::first_price, 0.0), npga::Error);
  REQUIRE_THROWS_AS(npga::bne_llg(PaymentRule::nearest_bid, 1.0), npga::Error);
}

TEST_CASE("oracle bids map bidder columns through their strategies",
          "[oracle]") {
  const npga::SettingSpec spec = npga::llg_setting();
  const BNEOracle oracle = npga::bne_llg(PaymentRule::nearest_bid, 0.0);
  Matrix values(2, 3);
  values << 0.5, 1.0, 1.7, 0.25, 0.75, 0.1;
  const Matrix bids = npga::oracle_bids(oracle, spec, values);
  REQUIRE(bids.rows() == 2);
  REQUIRE(bids.cols() == 3);
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < 2; ++i)
      REQUIRE(bids(s, i) ==
              Catch::Approx(npga::detail::llg_local_bid(
                                PaymentRule::nearest_bid, 0.0, values(s, i)))
                  .margin(1e-15));
    REQUIRE(bids(s, 2) == values(s, 2));
  }

  const BNEOracle truthful = npga::bne_truthful(3);
  REQUIRE(npga::oracle_bids(truthful, spec, values) == values);
  REQUIRE_THROWS_AS(npga::oracle_bids(npga::bne_truthful(2), spec, values),
                    npga::Error);
}
