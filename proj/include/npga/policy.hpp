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

#include "npga/optim.hpp"
#include "npga/priors.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace npga {

// Bid strategy network: fully connected, SELU hidden layers, ReLU output so
// bids are always nonnegative. Parameters live in one flat vector laid out
// layer by layer as [weights column-major, biases].
struct NetworkArchitecture {
  int input_dim = 1;
  std::vector<int> hidden = {10, 10};
  int output_dim = 1;

  std::vector<int> layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(input_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(output_dim);
    return sizes;
  }
  Eigen::Index parameter_count() const {
    const auto sizes = layer_sizes();
    Eigen::Index count = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      count += static_cast<Eigen::Index>(sizes[l] + 1) * sizes[l + 1];
    return count;
  }
};

inline void validate_architecture(const NetworkArchitecture& arch) {
  if (arch.input_dim < 1 || arch.output_dim < 1)
    throw Error("network needs positive input and output dimensions");
  for (const int width : arch.hidden)
    if (width < 1) throw Error("hidden layer widths must be positive");
}

inline bool operator==(const NetworkArchitecture& a,
                       const NetworkArchitecture& b) {
  return a.input_dim == b.input_dim && a.hidden == b.hidden &&
         a.output_dim == b.output_dim;
}

inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluLambda = 1.0507009873554805;

inline double selu(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

struct LayerParams {
  Matrix weights;
  Vector bias;
};

inline std::vector<LayerParams> unflatten(const NetworkArchitecture& arch,
                                          const Vector& theta) {
  if (theta.size() != arch.parameter_count())
    throw Error("parameter vector length mismatch");
  std::vector<LayerParams> layers;
  const auto sizes = arch.layer_sizes();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    LayerParams layer;
    layer.weights = Matrix(in, out);
    for (int u = 0; u < out; ++u)
      for (int k = 0; k < in; ++k) layer.weights(k, u) = theta(offset++);
    layer.bias = theta.segment(offset, out);
    offset += out;
    layers.push_back(std::move(layer));
  }
  return layers;
}

inline Vector flatten(const NetworkArchitecture& arch,
                      const std::vector<LayerParams>& layers) {
  Vector theta(arch.parameter_count());
  Eigen::Index offset = 0;
  for (const auto& layer : layers) {
    for (Eigen::Index u = 0; u < layer.weights.cols(); ++u)
      for (Eigen::Index k = 0; k < layer.weights.rows(); ++k)
        theta(offset++) = layer.weights(k, u);
    theta.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return theta;
}

// Batched forward pass. Each output unit is accumulated input by input in a
// fixed order, so a batch row equals the same sample pushed through alone.
inline Matrix forward(const NetworkArchitecture& arch, const Vector& theta,
                      const Matrix& values) {
  if (values.cols() != arch.input_dim)
    throw Error("input column count must equal input_dim");
  if (theta.size() != arch.parameter_count())
    throw Error("parameter vector length mismatch");
  const auto sizes = arch.layer_sizes();
  const Eigen::Index batch = values.rows();

  Matrix activations = values;
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const bool last = l + 2 == sizes.size();
    Matrix next(batch, out);
    for (int u = 0; u < out; ++u) {
      Vector acc = Vector::Constant(
          batch, theta(offset + static_cast<Eigen::Index>(in) * out + u));
      for (int k = 0; k < in; ++k)
        acc += theta(offset + static_cast<Eigen::Index>(u) * in + k) *
               activations.col(k);
      if (last) {
        next.col(u) = acc.cwiseMax(0.0);
      } else {
        next.col(u) = acc.unaryExpr([](double x) { return selu(x); });
      }
    }
    offset += static_cast<Eigen::Index>(in + 1) * out;
    activations = std::move(next);
  }
  return activations;
}

// Uniform fan-in initialization: every weight and bias of a layer with k
// inputs is drawn from U(-1/sqrt(k), 1/sqrt(k)).
inline Vector init_params(const NetworkArchitecture& arch,
                          const RngStream& rng) {
  validate_architecture(arch);
  Vector theta(arch.parameter_count());
  const auto sizes = arch.layer_sizes();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const Eigen::Index count = static_cast<Eigen::Index>(in + 1) * out;
    for (Eigen::Index j = 0; j < count; ++j)
      theta(offset + j) = bound * (2.0 * rng.uniform(offset + j) - 1.0);
    offset += count;
  }
  return theta;
}

inline void save_checkpoint(const std::string& path,
                            const NetworkArchitecture& arch,
                            const Vector& theta) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint file '" + path + "'");
  out << "npga_checkpoint 1\n";
  out << "input_dim " << arch.input_dim << "\n";
  out << "hidden";
  for (const int width : arch.hidden) out << ' ' << width;
  out << "\n";
  out << "output_dim " << arch.output_dim << "\n";
  out << "params " << theta.size() << "\n";
  out.precision(17);
  for (Eigen::Index j = 0; j < theta.size(); ++j) out << theta(j) << "\n";
  if (!out) throw Error("failed while writing checkpoint '" + path + "'");
}

inline std::pair<NetworkArchitecture, Vector> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint file '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "npga_checkpoint" || version != 1)
    throw Error("'" + path + "' is not a version-1 checkpoint");
  NetworkArchitecture arch;
  arch.hidden.clear();
  std::string key;
  in >> key >> arch.input_dim;
  if (key != "input_dim") throw Error("malformed checkpoint header");
  in >> key;
  if (key != "hidden") throw Error("malformed checkpoint header");
  std::string rest;
  std::getline(in, rest);
  std::istringstream widths(rest);
  int width = 0;
  while (widths >> width) arch.hidden.push_back(width);
  in >> key >> arch.output_dim;
  if (key != "output_dim") throw Error("malformed checkpoint header");
  Eigen::Index count = 0;
  in >> key >> count;
  if (key != "params") throw Error("malformed checkpoint header");
  if (count != arch.parameter_count())
    throw Error("checkpoint parameter count does not match architecture");
  Vector theta(count);
  for (Eigen::Index j = 0; j < count; ++j) {
    if (!(in >> theta(j))) throw Error("checkpoint truncated");
  }
  return {arch, theta};
}

struct PretrainOptions {
  std::int64_t batch = 256;
  double rmse_threshold_scale = 0.1;
  double dead_output_scale = 1e-3;
  int max_restarts = 3;
  ESConfig es;
  AdamConfig adam{0.01, 0.9, 0.999, 1e-8};
};

struct PretrainResult {
  Vector theta;
  double rmse = 0.0;
  int iterations = 0;
  int restarts = 0;
  bool reached_threshold = false;
};

// Supervised pretraining toward truthful bidding, run through the same
// ES-gradient plus Adam path as equilibrium learning (fitness is the negated
// mean squared error on a fresh valuation batch per iteration). Exits early
// once the RMSE falls under the threshold; a network whose mean output
// collapsed toward zero is reinitialized and retrained.
inline PretrainResult pretrain_truthful(const NetworkArchitecture& arch,
                                        const Vector& theta0,
                                        const PriorSpec& prior,
                                        const SettingSpec& spec, int bidder,
                                        int iters, const RngStream& rng,
                                        const PretrainOptions& options = {}) {
  if (iters < 1) throw Error("pretraining needs at least one iteration");
  if (arch.input_dim != spec.bundle_count(bidder) ||
      arch.output_dim != spec.bundle_count(bidder))
    throw Error("truthful pretraining needs one output per own bundle");
  const double scale = bidder_scale(prior, bidder);
  const double threshold = options.rmse_threshold_scale * scale;

  PretrainResult result;
  result.theta = theta0;
  for (int attempt = 0;; ++attempt) {
    result.restarts = attempt;
    const RngStream attempt_rng =
        rng.child("pretrain_attempt_" + std::to_string(attempt));
    AdamState adam = make_adam_state(arch.parameter_count());
    Matrix values;
    auto rmse_on = [&](const Vector& theta) {
      const Matrix bids = forward(arch, theta, values);
      return std::sqrt((bids - values).squaredNorm() /
                       static_cast<double>(values.size()));
    };
    for (int iter = 0; iter < iters; ++iter) {
      values = extract_bidder_columns(
          spec, bidder,
          sample_valuations(prior, spec, options.batch,
                            attempt_rng.child("values"),
                            static_cast<std::int64_t>(iter) * options.batch));
      result.rmse = rmse_on(result.theta);
      result.iterations = iter;
      if (result.rmse <= threshold) break;
      auto fitness = [&](const Vector& theta) {
        const double rmse = rmse_on(theta);
        return -rmse * rmse;
      };
      const Vector gradient =
          es_gradient(options.es, result.theta, fitness,
                      attempt_rng.child("grad_" + std::to_string(iter)));
      auto [next, delta] = adam_step(options.adam, adam, gradient);
      adam = std::move(next);
      result.theta += delta;
    }
    result.rmse = rmse_on(result.theta);
    result.reached_threshold = result.rmse <= threshold;
    const double mean_output =
        forward(arch, result.theta, values).mean();
    if (mean_output >= options.dead_output_scale * scale || attempt >= options.max_restarts)
      break;
    result.theta = init_params(arch, attempt_rng.child("reinit"));
  }
  return result;
}

}  // namespace npga
