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

#include "npga/learner.hpp"
#include "npga/metrics.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace npga {

enum class SettingKind { single_item, llg, llllgg };

inline std::string to_string(SettingKind kind) {
  switch (kind) {
    case SettingKind::single_item: return "single_item";
    case SettingKind::llg: return "llg";
    case SettingKind::llllgg: return "llllgg";
  }
  throw Error("unknown setting kind");
}

inline SettingKind parse_setting_kind(const std::string& name) {
  if (name == "single_item") return SettingKind::single_item;
  if (name == "llg") return SettingKind::llg;
  if (name == "llllgg") return SettingKind::llllgg;
  throw Error("unknown setting '" + name + "'");
}

inline int default_bidders(SettingKind kind) {
  switch (kind) {
    case SettingKind::single_item: return 2;
    case SettingKind::llg: return 3;
    case SettingKind::llllgg: return 6;
  }
  throw Error("unknown setting kind");
}

// One experiment: a market, a payment rule, a prior, and the training and
// evaluation budgets. Defaults are the desk-scale counterparts of the
// published full-scale runs.
struct ExperimentConfig {
  std::string name = "experiment";
  SettingKind setting = SettingKind::single_item;
  int n_bidders = 2;
  PaymentRule rule = PaymentRule::first_price;
  PriorSpec prior = PriorSpec::uniform(0.0, 10.0, 2);
  double risk_rho = 1.0;
  LearnerConfig learner;
  bool pretrain = true;
  std::int64_t iterations = 2000;
  std::int64_t eval_interval = 100;
  MetricOptions metrics;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "runs";
};

inline SettingSpec build_setting(const ExperimentConfig& config) {
  switch (config.setting) {
    case SettingKind::single_item:
      return single_item_setting(config.n_bidders);
    case SettingKind::llg:
      return llg_setting();
    case SettingKind::llllgg:
      return llllgg_setting();
  }
  throw Error("unknown setting kind");
}

// Uniform per-bundle prior with the local/global scale split used by the
// combinatorial settings: locals come first in the bidder order.
inline PriorSpec combinatorial_uniform_prior(SettingKind kind,
                                             double local_scale,
                                             double global_scale) {
  const int locals = kind == SettingKind::llg ? 2 : 4;
  const int n = default_bidders(kind);
  Vector lo = Vector::Zero(n);
  Vector hi(n);
  for (int i = 0; i < n; ++i) hi(i) = i < locals ? local_scale : global_scale;
  return PriorSpec::uniform(std::move(lo), std::move(hi));
}

namespace detail {

inline bool power_of_two(std::int64_t x) { return x > 0 && (x & (x - 1)) == 0; }

inline std::string join_problems(const std::vector<std::string>& problems) {
  std::string text = "invalid config: ";
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (i > 0) text += "; ";
    text += problems[i];
  }
  return text;
}

}  // namespace detail

// Every violated constraint, one entry per problem, so a bad config file
// reports all of its mistakes in a single round trip.
inline std::vector<std::string> experiment_config_problems(
    const ExperimentConfig& config) {
  std::vector<std::string> problems;
  const auto collect = [&problems](const std::string& where, auto&& body) {
    try {
      body();
    } catch (const std::exception& error) {
      problems.push_back(where.empty() ? error.what()
                                       : where + ": " + error.what());
    }
  };

  if (config.name.empty()) problems.push_back("name must be nonempty");
  if (config.name.find('/') != std::string::npos ||
      config.name.find_first_of(" \t\n") != std::string::npos)
    problems.push_back("name must not contain '/' or whitespace");
  if (config.output_dir.empty()) problems.push_back("output_dir must be nonempty");

  switch (config.setting) {
    case SettingKind::single_item:
      if (config.n_bidders < 2)
        problems.push_back("n_bidders must be at least 2 for single_item");
      break;
    case SettingKind::llg:
      if (config.n_bidders != 3)
        problems.push_back("n_bidders must be 3 for llg");
      break;
    case SettingKind::llllgg:
      if (config.n_bidders != 6)
        problems.push_back("n_bidders must be 6 for llllgg");
      break;
  }
  if (config.rule == PaymentRule::second_price &&
      config.setting != SettingKind::single_item)
    problems.push_back("rule second_price applies to single_item only");

  collect("risk_rho", [&] { validate_utility_model(UtilityModel{config.risk_rho}); });
  collect("training", [&] { validate_learner_config(config.learner); });
  collect("evaluation", [&] { validate_metric_options(config.metrics); });

  if (!detail::power_of_two(config.learner.batch))
    problems.push_back("training.batch must be a power of two");
  if (!detail::power_of_two(config.metrics.h_primary))
    problems.push_back("evaluation.primary_batch must be a power of two");
  if (!detail::power_of_two(config.metrics.h_interim))
    problems.push_back("evaluation.interim_batch must be a power of two");
  if (!detail::power_of_two(config.metrics.grid_points))
    problems.push_back("evaluation.grid_points must be a power of two");

  if (config.iterations < 0)
    problems.push_back("training.iterations must be nonnegative");
  if (config.eval_interval < 1)
    problems.push_back("training.eval_interval must be at least 1");
  if (config.seeds.empty()) problems.push_back("seeds must be nonempty");

  collect("prior", [&] {
    const SettingSpec spec = build_setting(config);
    validate_prior(config.prior, spec);
  });
  if (is_correlated(config.prior) && config.metrics.include_interim)
    problems.push_back(
        "evaluation.interim is unsupported with correlated priors (grid "
        "best-response estimates need independent opponent draws)");
  return problems;
}

inline void validate_experiment_config(const ExperimentConfig& config) {
  const std::vector<std::string> problems = experiment_config_problems(config);
  if (!problems.empty()) throw Error(detail::join_problems(problems));
}

namespace detail {

inline std::string qualify(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

inline void check_known_keys(const YAML::Node& node, const std::string& section,
                             const std::set<std::string>& allowed,
                             std::vector<std::string>& problems) {
  for (const auto& entry : node) {
    const std::string key = entry.first.as<std::string>();
    if (!allowed.count(key))
      problems.push_back("unknown key '" + qualify(section, key) + "'");
  }
}

template <typename T>
void read_field(const YAML::Node& node, const std::string& section,
                const std::string& key, std::optional<T>& out,
                std::vector<std::string>& problems) {
  const YAML::Node field = node[key];
  if (!field.IsDefined()) return;
  try {
    out = field.as<T>();
  } catch (const YAML::Exception&) {
    problems.push_back("field '" + qualify(section, key) +
                       "' has an invalid value");
  }
}

// Parses a string-valued field through an enum parser, keeping the parser's
// message but pointing at the offending field.
template <typename T, typename Parser>
void read_enum(const YAML::Node& node, const std::string& section,
               const std::string& key, Parser parse, std::optional<T>& out,
               std::vector<std::string>& problems) {
  std::optional<std::string> text;
  read_field(node, section, key, text, problems);
  if (!text) return;
  try {
    out = parse(*text);
  } catch (const std::exception& error) {
    problems.push_back("field '" + qualify(section, key) +
                       "': " + error.what());
  }
}

struct ParsedPrior {
  std::optional<std::string> family;
  std::optional<double> lo, hi, mean, stddev, local_scale, global_scale, gamma;
};

// Resolves the prior section against the setting, flagging keys that do not
// apply to the chosen family.
inline PriorSpec resolve_prior(const ParsedPrior& raw, SettingKind setting,
                               int n_bidders,
                               std::vector<std::string>& problems) {
  const auto reject = [&](const std::optional<double>& field,
                          const std::string& key, const std::string& why) {
    if (field) problems.push_back("prior." + key + " " + why);
  };
  const std::string family = raw.family.value_or("uniform");
  const bool combinatorial = setting != SettingKind::single_item;

  if (family == "uniform") {
    reject(raw.mean, "mean", "applies to the gaussian family");
    reject(raw.stddev, "stddev", "applies to the gaussian family");
    reject(raw.gamma, "gamma", "applies to the correlated family");
    if (combinatorial) {
      reject(raw.lo, "lo", "applies to single_item settings");
      reject(raw.hi, "hi", "applies to single_item settings");
      return combinatorial_uniform_prior(setting, raw.local_scale.value_or(1.0),
                                         raw.global_scale.value_or(2.0));
    }
    reject(raw.local_scale, "local_scale", "applies to combinatorial settings");
    reject(raw.global_scale, "global_scale",
           "applies to combinatorial settings");
    return PriorSpec::uniform(raw.lo.value_or(0.0), raw.hi.value_or(10.0),
                              std::max(1, n_bidders));
  }
  if (family == "gaussian") {
    reject(raw.lo, "lo", "applies to the uniform family");
    reject(raw.hi, "hi", "applies to the uniform family");
    reject(raw.local_scale, "local_scale", "applies to the uniform family");
    reject(raw.global_scale, "global_scale", "applies to the uniform family");
    reject(raw.gamma, "gamma", "applies to the correlated family");
    return PriorSpec::gaussian(raw.mean.value_or(15.0),
                               raw.stddev.value_or(10.0));
  }
  if (family == "correlated") {
    reject(raw.lo, "lo", "applies to the uniform family");
    reject(raw.hi, "hi", "applies to the uniform family");
    reject(raw.mean, "mean", "applies to the gaussian family");
    reject(raw.stddev, "stddev", "applies to the gaussian family");
    return PriorSpec::correlated_llg(raw.local_scale.value_or(1.0),
                                     raw.global_scale.value_or(2.0),
                                     raw.gamma.value_or(0.5));
  }
  problems.push_back("field 'prior.family': unknown family '" + family +
                     "' (expected uniform, gaussian, or correlated)");
  return PriorSpec::uniform(0.0, 10.0, std::max(1, n_bidders));
}

inline ExperimentConfig config_from_yaml(const YAML::Node& root) {
  if (!root.IsMap())
    throw Error("invalid config: root must be a key/value map");
  std::vector<std::string> problems;
  check_known_keys(root, "",
                   {"name", "setting", "rule", "n_bidders", "risk_rho",
                    "prior", "training", "evaluation", "seeds", "output_dir"},
                   problems);

  std::optional<SettingKind> setting;
  std::optional<PaymentRule> rule;
  read_enum(root, "", "setting", parse_setting_kind, setting, problems);
  read_enum(root, "", "rule", parse_payment_rule, rule, problems);
  if (!root["setting"].IsDefined())
    problems.push_back("missing required key 'setting'");
  if (!root["rule"].IsDefined())
    problems.push_back("missing required key 'rule'");

  ExperimentConfig config;
  config.setting = setting.value_or(SettingKind::single_item);
  config.rule = rule.value_or(PaymentRule::first_price);

  std::optional<std::string> name, output_dir;
  std::optional<int> n_bidders;
  std::optional<double> risk_rho;
  std::optional<std::vector<std::uint64_t>> seeds;
  read_field(root, "", "name", name, problems);
  read_field(root, "", "output_dir", output_dir, problems);
  read_field(root, "", "n_bidders", n_bidders, problems);
  read_field(root, "", "risk_rho", risk_rho, problems);
  read_field(root, "", "seeds", seeds, problems);
  config.name = name.value_or(config.name);
  config.output_dir = output_dir.value_or(config.output_dir);
  config.n_bidders = n_bidders.value_or(default_bidders(config.setting));
  config.risk_rho = risk_rho.value_or(config.risk_rho);
  config.seeds = seeds.value_or(config.seeds);

  ParsedPrior prior;
  if (const YAML::Node node = root["prior"]; node.IsDefined()) {
    if (!node.IsMap()) {
      problems.push_back("'prior' must be a key/value map");
    } else {
      check_known_keys(node, "prior",
                       {"family", "lo", "hi", "mean", "stddev", "local_scale",
                        "global_scale", "gamma"},
                       problems);
      read_field(node, "prior", "family", prior.family, problems);
      read_field(node, "prior", "lo", prior.lo, problems);
      read_field(node, "prior", "hi", prior.hi, problems);
      read_field(node, "prior", "mean", prior.mean, problems);
      read_field(node, "prior", "stddev", prior.stddev, problems);
      read_field(node, "prior", "local_scale", prior.local_scale, problems);
      read_field(node, "prior", "global_scale", prior.global_scale, problems);
      read_field(node, "prior", "gamma", prior.gamma, problems);
    }
  }
  config.prior =
      resolve_prior(prior, config.setting, config.n_bidders, problems);

  if (const YAML::Node node = root["training"]; node.IsDefined()) {
    if (!node.IsMap()) {
      problems.push_back("'training' must be a key/value map");
    } else {
      check_known_keys(node, "training",
                       {"iterations", "eval_interval", "batch", "population",
                        "sigma", "baseline", "antithetic", "learning_rate",
                        "pretrain"},
                       problems);
      std::optional<std::int64_t> iterations, eval_interval, batch;
      std::optional<int> population;
      std::optional<double> sigma, learning_rate;
      std::optional<bool> baseline, antithetic, pretrain;
      read_field(node, "training", "iterations", iterations, problems);
      read_field(node, "training", "eval_interval", eval_interval, problems);
      read_field(node, "training", "batch", batch, problems);
      read_field(node, "training", "population", population, problems);
      read_field(node, "training", "sigma", sigma, problems);
      read_field(node, "training", "baseline", baseline, problems);
      read_field(node, "training", "antithetic", antithetic, problems);
      read_field(node, "training", "learning_rate", learning_rate, problems);
      read_field(node, "training", "pretrain", pretrain, problems);
      config.iterations = iterations.value_or(config.iterations);
      config.eval_interval = eval_interval.value_or(config.eval_interval);
      config.learner.batch = batch.value_or(config.learner.batch);
      config.learner.es.population =
          population.value_or(config.learner.es.population);
      config.learner.es.sigma = sigma.value_or(config.learner.es.sigma);
      config.learner.es.baseline = baseline.value_or(config.learner.es.baseline);
      config.learner.es.antithetic =
          antithetic.value_or(config.learner.es.antithetic);
      config.learner.adam.learning_rate =
          learning_rate.value_or(config.learner.adam.learning_rate);
      config.pretrain = pretrain.value_or(config.pretrain);
    }
  }

  std::optional<bool> interim;
  if (const YAML::Node node = root["evaluation"]; node.IsDefined()) {
    if (!node.IsMap()) {
      problems.push_back("'evaluation' must be a key/value map");
    } else {
      check_known_keys(
          node, "evaluation",
          {"primary_batch", "interim_batch", "grid_points", "interim"},
          problems);
      std::optional<std::int64_t> primary_batch, interim_batch;
      std::optional<int> grid_points;
      read_field(node, "evaluation", "primary_batch", primary_batch, problems);
      read_field(node, "evaluation", "interim_batch", interim_batch, problems);
      read_field(node, "evaluation", "grid_points", grid_points, problems);
      read_field(node, "evaluation", "interim", interim, problems);
      config.metrics.h_primary = primary_batch.value_or(config.metrics.h_primary);
      config.metrics.h_interim = interim_batch.value_or(config.metrics.h_interim);
      config.metrics.grid_points =
          grid_points.value_or(config.metrics.grid_points);
    }
  }
  config.metrics.include_interim =
      interim ? *interim : !is_correlated(config.prior);

  const std::vector<std::string> semantic = experiment_config_problems(config);
  problems.insert(problems.end(), semantic.begin(), semantic.end());
  if (!problems.empty()) throw Error(join_problems(problems));
  return config;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& error) {
    throw Error(std::string("config parse error: ") + error.what());
  }
  return detail::config_from_yaml(root);
}

inline ExperimentConfig parse_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw Error("cannot read config file '" + path + "'");
  } catch (const YAML::Exception& error) {
    throw Error("config parse error in '" + path + "': " + error.what());
  }
  return detail::config_from_yaml(root);
}

// Closed-form equilibrium for the configured market when one is known;
// settings without one (first-price combinatorial, off-scale variants) run
// without oracle metrics.
inline std::optional<BNEOracle> config_oracle(const ExperimentConfig& config) {
  switch (config.setting) {
    case SettingKind::single_item:
      if (config.rule == PaymentRule::second_price ||
          config.rule == PaymentRule::vcg)
        return bne_truthful(config.n_bidders);
      if (config.rule == PaymentRule::first_price) {
        if (config.prior.family == PriorSpec::Family::uniform &&
            config.risk_rho != 1.0 && config.prior.lo(0) != 0.0)
          return std::nullopt;
        return bne_fpsb_symmetric(config.prior, config.n_bidders,
                                  config.risk_rho);
      }
      return std::nullopt;
    case SettingKind::llg: {
      if (config.rule == PaymentRule::vcg) return bne_truthful(3);
      const PriorSpec& prior = config.prior;
      const bool canonical_scales =
          (prior.family == PriorSpec::Family::correlated_uniform_llg &&
           prior.local_scale == 1.0 && prior.global_scale == 2.0) ||
          (prior.family == PriorSpec::Family::uniform && prior.lo.isZero() &&
           prior.hi.size() == 3 && prior.hi(0) == 1.0 && prior.hi(1) == 1.0 &&
           prior.hi(2) == 2.0);
      if (is_core_rule(config.rule) && config.risk_rho == 1.0 &&
          canonical_scales)
        return bne_llg(config.rule,
                       is_correlated(prior) ? prior.gamma : 0.0);
      return std::nullopt;
    }
    case SettingKind::llllgg:
      if (config.rule == PaymentRule::vcg) return bne_truthful(6);
      return std::nullopt;
  }
  return std::nullopt;
}

// The published experiment grid at desk scale: twelve single-item
// first-price markets, seven LLG markets, two LLLLGG markets, plus a
// second-price control with a dominant-strategy equilibrium.
inline std::vector<ExperimentConfig> builtin_presets() {
  std::vector<ExperimentConfig> presets;

  const auto add_single_item = [&presets](const std::string& name, int n,
                                          PaymentRule rule, PriorSpec prior,
                                          double rho, std::int64_t iterations) {
    ExperimentConfig config;
    config.name = name;
    config.setting = SettingKind::single_item;
    config.n_bidders = n;
    config.rule = rule;
    config.prior = std::move(prior);
    config.risk_rho = rho;
    config.iterations = iterations;
    presets.push_back(std::move(config));
  };
  for (const int n : {2, 3, 5, 10}) {
    const std::string tail = "n" + std::to_string(n);
    add_single_item("fpsb-uniform-" + tail, n, PaymentRule::first_price,
                    PriorSpec::uniform(0.0, 10.0, n), 1.0, 2000);
    add_single_item("fpsb-uniform-ra-" + tail, n, PaymentRule::first_price,
                    PriorSpec::uniform(0.0, 10.0, n), 0.5, 2000);
    add_single_item("fpsb-gaussian-" + tail, n, PaymentRule::first_price,
                    PriorSpec::gaussian(15.0, 10.0), 1.0, 2000);
  }
  add_single_item("vickrey-uniform-n2", 2, PaymentRule::second_price,
                  PriorSpec::uniform(0.0, 10.0, 2), 1.0, 1000);

  const auto add_llg = [&presets](const std::string& name, PaymentRule rule,
                                  double gamma) {
    ExperimentConfig config;
    config.name = name;
    config.setting = SettingKind::llg;
    config.n_bidders = 3;
    config.rule = rule;
    if (gamma > 0.0) {
      config.prior = PriorSpec::correlated_llg(1.0, 2.0, gamma);
      config.metrics.include_interim = false;
    } else {
      config.prior = combinatorial_uniform_prior(SettingKind::llg, 1.0, 2.0);
    }
    config.iterations = 2000;
    presets.push_back(std::move(config));
  };
  add_llg("llg-nearest-vcg-independent", PaymentRule::nearest_vcg, 0.0);
  add_llg("llg-nearest-bid-independent", PaymentRule::nearest_bid, 0.0);
  add_llg("llg-nearest-zero-independent", PaymentRule::nearest_zero, 0.0);
  add_llg("llg-first-price", PaymentRule::first_price, 0.0);
  add_llg("llg-nearest-vcg-correlated", PaymentRule::nearest_vcg, 0.5);
  add_llg("llg-nearest-bid-correlated", PaymentRule::nearest_bid, 0.5);
  add_llg("llg-nearest-zero-correlated", PaymentRule::nearest_zero, 0.5);

  {
    ExperimentConfig config;
    config.name = "llllgg-first-price";
    config.setting = SettingKind::llllgg;
    config.n_bidders = 6;
    config.rule = PaymentRule::first_price;
    config.prior = combinatorial_uniform_prior(SettingKind::llllgg, 1.0, 2.0);
    config.iterations = 500;
    config.learner.batch = std::int64_t{1} << 10;
    config.metrics.h_interim = std::int64_t{1} << 7;
    config.seeds = {1};
    presets.push_back(std::move(config));
  }
  {
    ExperimentConfig config;
    config.name = "llllgg-nearest-vcg";
    config.setting = SettingKind::llllgg;
    config.n_bidders = 6;
    config.rule = PaymentRule::nearest_vcg;
    config.prior = combinatorial_uniform_prior(SettingKind::llllgg, 1.0, 2.0);
    config.iterations = 50;
    config.eval_interval = 50;
    config.learner.batch = std::int64_t{1} << 9;
    config.learner.es.population = 32;
    config.metrics.h_interim = std::int64_t{1} << 7;
    config.metrics.include_interim = false;
    config.seeds = {1};
    presets.push_back(std::move(config));
  }
  return presets;
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const ExperimentConfig& preset : builtin_presets())
    names.push_back(preset.name);
  return names;
}

inline ExperimentConfig preset_config(const std::string& name) {
  for (ExperimentConfig& preset : builtin_presets()) {
    if (preset.name != name) continue;
    validate_experiment_config(preset);
    return preset;
  }
  throw Error("unknown preset '" + name + "'");
}

}  // namespace npga
