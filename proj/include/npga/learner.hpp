#pragma once

/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================
*/

#include "npga/mechanism.hpp"
#include "npga/oracle.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace npga {

// One bidder's policy network and optimizer state.
struct BidderState {
  NetworkArchitecture arch;
  Vector theta;
  AdamState adam;
};

// Simultaneous self-play state: one network per bidder plus the run-level
// rng all iteration substreams derive from.
struct LearnerState {
  std::vector<BidderState> bidders;
  std::int64_t iteration = 0;
  RngStream rng;
};

struct LearnerConfig {
  ESConfig es;
  AdamConfig adam;
  std::int64_t batch = std::int64_t{1} << 12;
  QPOptions qp;
};

inline void validate_learner_config(const LearnerConfig& config) {
  validate_es_config(config.es);
  if (config.batch < 1) throw Error("learning batch must be at least 1");
  if (!(config.adam.learning_rate > 0.0))
    throw Error("learning rate must be positive");
  if (!(config.adam.beta1 >= 0.0 && config.adam.beta1 < 1.0) ||
      !(config.adam.beta2 >= 0.0 && config.adam.beta2 < 1.0))
    throw Error("Adam betas must lie in [0, 1)");
  if (!(config.adam.epsilon > 0.0))
    throw Error("Adam epsilon must be positive");
}

// Fresh networks with one input and output per own bundle, fan-in uniform
// initialization, and zeroed optimizer moments.
inline LearnerState make_learner_state(const SettingSpec& spec,
                                       const RngStream& rng,
                                       const std::vector<int>& hidden = {10,
                                                                         10}) {
  LearnerState state;
  state.rng = rng;
  for (int i = 0; i < spec.n_bidders; ++i) {
    NetworkArchitecture arch;
    arch.input_dim = spec.bundle_count(i);
    arch.hidden = hidden;
    arch.output_dim = spec.bundle_count(i);
    validate_architecture(arch);
    BidderState bidder;
    bidder.arch = arch;
    bidder.theta =
        init_params(arch, rng.child("init").child(static_cast<std::uint64_t>(i)));
    bidder.adam = make_adam_state(arch.parameter_count());
    state.bidders.push_back(std::move(bidder));
  }
  return state;
}

// Current networks wrapped as batched strategies, for evaluation.
inline std::vector<StrategyFn> learner_strategies(const LearnerState& state) {
  std::vector<StrategyFn> strategies;
  strategies.reserve(state.bidders.size());
  for (const BidderState& bidder : state.bidders)
    strategies.push_back(network_strategy(bidder.arch, bidder.theta));
  return strategies;
}

// Monte-Carlo estimate of one bidder's expected utility when it plays theta
// and everyone else plays their snapshot network, on a fresh valuation draw.
inline double fitness(const SettingSpec& spec, PaymentRule rule,
                      const PriorSpec& prior, const UtilityModel& model,
                      const std::vector<BidderState>& bidders, int bidder,
                      const Vector& theta, std::int64_t batch,
                      const RngStream& rng, const QPOptions& qp_opts = {}) {
  if (static_cast<int>(bidders.size()) != spec.n_bidders)
    throw Error("bidder state count does not match the setting");
  if (bidder < 0 || bidder >= spec.n_bidders)
    throw Error("bidder out of range");
  const Matrix valuations = sample_valuations(prior, spec, batch, rng);
  Matrix bids(batch, spec.total_slots);
  for (int j = 0; j < spec.n_bidders; ++j) {
    const Vector& params = j == bidder ? theta : bidders[j].theta;
    bids.middleCols(spec.slot_offset[j], spec.bundle_count(j)) = forward(
        bidders[j].arch, params, extract_bidder_columns(spec, j, valuations));
  }
  const BatchOutcome outcome = run_auction_batch(spec, rule, bids, qp_opts);
  return batch_utilities(spec, model, outcome, valuations).col(bidder).mean();
}

// One bidder's update against a frozen snapshot of everyone's parameters.
// All perturbations share one valuation draw and one opponent context, so
// fitness differences reflect only the perturbed parameters.
inline BidderState npga_bidder_update(const SettingSpec& spec,
                                      PaymentRule rule, const PriorSpec& prior,
                                      const UtilityModel& model,
                                      const std::vector<BidderState>& snapshot,
                                      int bidder, const LearnerConfig& config,
                                      const RngStream& iter_rng) {
  if (static_cast<int>(snapshot.size()) != spec.n_bidders)
    throw Error("bidder state count does not match the setting");
  if (bidder < 0 || bidder >= spec.n_bidders)
    throw Error("bidder out of range");
  const BidderState& self = snapshot[bidder];
  const Matrix valuations = sample_valuations(
      prior, spec, config.batch,
      iter_rng.child("values").child(static_cast<std::uint64_t>(bidder)));
  Matrix bids(config.batch, spec.total_slots);
  for (int j = 0; j < spec.n_bidders; ++j) {
    bids.middleCols(spec.slot_offset[j], spec.bundle_count(j)) =
        forward(snapshot[j].arch, snapshot[j].theta,
                extract_bidder_columns(spec, j, valuations));
  }
  const OpponentContext ctx =
      make_opponent_context(spec, rule, model, bids, bidder);
  const Matrix own_values = extract_bidder_columns(spec, bidder, valuations);
  const auto fitness_of = [&](const Vector& theta) {
    return player_utilities(spec, ctx, forward(self.arch, theta, own_values),
                            own_values, config.qp)
        .mean();
  };
  const Vector gradient = es_gradient(
      config.es, self.theta, fitness_of,
      iter_rng.child("grad").child(static_cast<std::uint64_t>(bidder)));
  auto [adam, delta] = adam_step(config.adam, self.adam, gradient);
  BidderState next{self.arch, self.theta + delta, std::move(adam)};
  if (!next.theta.allFinite())
    throw Error("non-finite parameters after update");
  return next;
}

// One simultaneous ascent step: every bidder's pseudogradient is computed
// against the same frozen snapshot, so the update order cannot matter.
inline LearnerState npga_iteration(const SettingSpec& spec, PaymentRule rule,
                                   const PriorSpec& prior,
                                   const UtilityModel& model,
                                   const LearnerState& state,
                                   const LearnerConfig& config) {
  validate_learner_config(config);
  const RngStream iter_rng = state.rng.child("iteration")
                                 .child(static_cast<std::uint64_t>(state.iteration));
  LearnerState next = state;
  for (int i = 0; i < spec.n_bidders; ++i)
    next.bidders[i] = npga_bidder_update(spec, rule, prior, model,
                                         state.bidders, i, config, iter_rng);
  next.iteration = state.iteration + 1;
  return next;
}

}  // namespace npga
