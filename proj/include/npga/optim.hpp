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

#include "npga/common.hpp"
#include "npga/rng.hpp"

#include <cmath>
#include <functional>
#include <utility>

namespace npga {

// Evolutionary-strategies gradient estimation: perturb parameters with
// Gaussian noise, weight the noise by the observed fitness, and average.
struct ESConfig {
  int population = 64;
  double sigma = 0.0;
  bool baseline = true;
  bool antithetic = false;
};

inline void validate_es_config(const ESConfig& es) {
  if (es.population < 1) throw Error("population must be at least 1");
  if (es.sigma < 0.0) throw Error("sigma must be positive (or 0 for default)");
}

inline double default_sigma(Eigen::Index dimension) {
  return 1.0 / std::sqrt(static_cast<double>(dimension));
}

// (1 / (sigma^2 P)) * sum_p (phi_p - phi_0) eps_p, with phi_0 = 0 when the
// baseline is off. Columns of epsilons are the perturbations eps_p.
inline Vector es_combine(const Matrix& epsilons, const Vector& fitness,
                         double baseline_fitness, double sigma,
                         bool use_baseline) {
  if (epsilons.cols() != fitness.size())
    throw Error("one fitness value per perturbation required");
  if (!(sigma > 0.0)) throw Error("sigma must be positive");
  const Eigen::Index population = epsilons.cols();
  Vector gradient = Vector::Zero(epsilons.rows());
  for (Eigen::Index p = 0; p < population; ++p) {
    const double weight =
        fitness(p) - (use_baseline ? baseline_fitness : 0.0);
    gradient += weight * epsilons.col(p);
  }
  return gradient / (sigma * sigma * static_cast<double>(population));
}

// Draws the perturbations from rng (antithetic pairs when enabled), queries
// the fitness of each perturbed parameter vector, and combines. The fitness
// callback owns any Monte-Carlo batching; it is called with theta itself
// exactly once when the baseline is on.
inline Vector es_gradient(const ESConfig& es, const Vector& theta,
                          const std::function<double(const Vector&)>& fitness,
                          const RngStream& rng) {
  validate_es_config(es);
  const Eigen::Index d = theta.size();
  const int population = es.population;
  const double sigma = es.sigma > 0.0 ? es.sigma : default_sigma(d);

  Matrix epsilons(d, population);
  for (int p = 0; p < population; ++p) {
    if (es.antithetic && p % 2 == 1) {
      epsilons.col(p) = -epsilons.col(p - 1);
      continue;
    }
    for (Eigen::Index j = 0; j < d; ++j)
      epsilons(j, p) =
          sigma * rng.normal(static_cast<std::int64_t>(p) * d + j);
  }

  const double baseline_fitness = es.baseline ? fitness(theta) : 0.0;
  Vector phi(population);
  for (int p = 0; p < population; ++p) phi(p) = fitness(theta + epsilons.col(p));
  return es_combine(epsilons, phi, baseline_fitness, sigma, es.baseline);
}

// Canonical Adam with bias correction, oriented as an ascent step: the
// returned delta is added to the parameters to increase the objective.
struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t t = 0;
};

inline AdamState make_adam_state(Eigen::Index dimension) {
  return {Vector::Zero(dimension), Vector::Zero(dimension), 0};
}

inline std::pair<AdamState, Vector> adam_step(const AdamConfig& config,
                                              const AdamState& state,
                                              const Vector& gradient) {
  if (!gradient.allFinite()) throw Error("non-finite gradient");
  if (gradient.size() != state.m.size())
    throw Error("gradient dimension mismatch");
  AdamState next;
  next.t = state.t + 1;
  next.m = config.beta1 * state.m + (1.0 - config.beta1) * gradient;
  next.v = config.beta2 * state.v +
           (1.0 - config.beta2) * gradient.cwiseProduct(gradient);
  const double m_scale =
      1.0 - std::pow(config.beta1, static_cast<double>(next.t));
  const double v_scale =
      1.0 - std::pow(config.beta2, static_cast<double>(next.t));
  const Vector m_hat = next.m / m_scale;
  const Vector v_hat = next.v / v_scale;
  const Vector denom = (v_hat.cwiseSqrt().array() + config.epsilon).matrix();
  const Vector delta = config.learning_rate * m_hat.cwiseQuotient(denom);
  return {std::move(next), delta};
}

}  // namespace npga
