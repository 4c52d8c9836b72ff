// Copyright 2026 The tinyma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tinyma/experiment.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "tinyma/errors.h"

namespace tinyma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any key nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string where = path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(where + ": expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) {
        throw ConfigError(where + ": expected an integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(where + ": expected a number");
    }
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected a list of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j[0].size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw ConfigError(where + ": ragged matrix");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(where + ": expected numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

std::string coupling_name(CouplingMode m) {
  switch (m) {
    case CouplingMode::kRandom:
      return "random";
    case CouplingMode::kUniform:
      return "uniform";
    case CouplingMode::kExplicit:
      return "explicit";
  }
  return "random";
}

CouplingMode coupling_from_name(const std::string& s) {
  if (s == "random") return CouplingMode::kRandom;
  if (s == "uniform") return CouplingMode::kUniform;
  if (s == "explicit") return CouplingMode::kExplicit;
  throw ConfigError("instance.coupling.mode: unknown mode '" + s +
                    "' (expected random, uniform or explicit)");
}

std::string mode_name(ThresholdMode m) {
  return m == ThresholdMode::kRank ? "rank" : "literal";
}

ThresholdMode mode_from_name(const std::string& s) {
  if (s == "rank") return ThresholdMode::kRank;
  if (s == "literal") return ThresholdMode::kLiteral;
  throw ConfigError("prune.mode: unknown mode '" + s +
                    "' (expected rank or literal)");
}

void read_rsu(Section& s, RsuProfile& r) {
  s.get("adists", r.adists);
  s.get("adists_threshold", r.adists_threshold);
  s.get("reputation_weight", r.reputation_weight);
  s.get("unit_cost", r.unit_cost);
  s.get("price_cap", r.price_cap);
  s.get("cpu_rate", r.cpu_rate);
  s.get("arrival_rate", r.arrival_rate);
  s.get("service_rate", r.service_rate);
  s.finish();
}

json write_rsu(const RsuProfile& r) {
  return {{"adists", r.adists},
          {"adists_threshold", r.adists_threshold},
          {"reputation_weight", r.reputation_weight},
          {"unit_cost", r.unit_cost},
          {"price_cap", r.price_cap},
          {"cpu_rate", r.cpu_rate},
          {"arrival_rate", r.arrival_rate},
          {"service_rate", r.service_rate}};
}

void read_av(Section& s, AvProfile& a) {
  s.get("data_size", a.data_size);
  s.get("cpu_cycles", a.cpu_cycles);
  s.get("max_delay", a.max_delay);
  s.get("delay_sensitivity", a.delay_sensitivity);
  s.get("satisfaction", a.satisfaction);
  s.finish();
}

json write_av(const AvProfile& a) {
  return {{"data_size", a.data_size},
          {"cpu_cycles", a.cpu_cycles},
          {"max_delay", a.max_delay},
          {"delay_sensitivity", a.delay_sensitivity},
          {"satisfaction", a.satisfaction}};
}

void read_channel(Section& s, ChannelParams& c) {
  s.get("transmit_power", c.transmit_power);
  s.get("noise_power", c.noise_power);
  s.get("gain_coefficient", c.gain_coefficient);
  s.get("light_speed", c.light_speed);
  s.get("carrier_frequency", c.carrier_frequency);
  s.get("bandwidth_unit_hz", c.bandwidth_unit_hz);
  s.finish();
}

json write_channel(const ChannelParams& c) {
  return {{"transmit_power", c.transmit_power},
          {"noise_power", c.noise_power},
          {"gain_coefficient", c.gain_coefficient},
          {"light_speed", c.light_speed},
          {"carrier_frequency", c.carrier_frequency},
          {"bandwidth_unit_hz", c.bandwidth_unit_hz}};
}

void read_range(Section& s, const char* key, double& lo, double& hi) {
  const json* j = s.child(key);
  if (!j) return;
  if (!j->is_array() || j->size() != 2 || !(*j)[0].is_number() ||
      !(*j)[1].is_number()) {
    throw ConfigError(s.path(key) + ": expected [min, max]");
  }
  lo = (*j)[0].get<double>();
  hi = (*j)[1].get<double>();
  if (lo > hi) throw ConfigError(s.path(key) + ": min > max");
}

void read_instance(const json& j, InstanceSpec& spec) {
  Section s(j, "instance");
  s.get("num_avs", spec.num_avs);
  s.get("num_rsus", spec.num_rsus);
  s.get("seed", spec.seed);
  s.get("perturbation", spec.perturbation);
  s.get("symmetric", spec.symmetric);
  s.get("rsu_spacing", spec.rsu_spacing);
  s.get("av_spacing", spec.av_spacing);
  s.get("av_start_x", spec.av_start_x);
  s.get("av_y", spec.av_y);
  if (const json* c = s.child("rsu")) {
    Section sub(*c, "instance.rsu");
    read_rsu(sub, spec.rsu);
  }
  if (const json* c = s.child("av")) {
    Section sub(*c, "instance.av");
    read_av(sub, spec.av);
  }
  if (const json* c = s.child("channel")) {
    Section sub(*c, "instance.channel");
    read_channel(sub, spec.channel);
  }
  if (const json* c = s.child("coupling")) {
    Section sub(*c, "instance.coupling");
    std::string mode = coupling_name(spec.coupling);
    sub.get("mode", mode);
    spec.coupling = coupling_from_name(mode);
    read_range(sub, "social_range", spec.social_min, spec.social_max);
    read_range(sub, "service_range", spec.service_min, spec.service_max);
    sub.get("social_value", spec.social_value);
    sub.get("service_value", spec.service_value);
    if (const json* m = sub.child("social")) {
      spec.social = matrix_from_json(*m, "instance.coupling.social");
    }
    if (const json* m = sub.child("service")) {
      spec.service = matrix_from_json(*m, "instance.coupling.service");
    }
    sub.finish();
  }
  s.finish();
  if (spec.num_avs < 1) throw ConfigError("instance.num_avs must be >= 1");
  if (spec.num_rsus < 1) throw ConfigError("instance.num_rsus must be >= 1");
  if (spec.perturbation < 0 || spec.perturbation >= 1) {
    throw ConfigError("instance.perturbation must be in [0, 1)");
  }
}

json write_instance(const InstanceSpec& spec) {
  json coupling = {{"mode", coupling_name(spec.coupling)},
                   {"social_range", {spec.social_min, spec.social_max}},
                   {"service_range", {spec.service_min, spec.service_max}},
                   {"social_value", spec.social_value},
                   {"service_value", spec.service_value}};
  if (spec.coupling == CouplingMode::kExplicit) {
    coupling["social"] = matrix_to_json(spec.social);
    coupling["service"] = matrix_to_json(spec.service);
  }
  return {{"num_avs", spec.num_avs},
          {"num_rsus", spec.num_rsus},
          {"seed", spec.seed},
          {"perturbation", spec.perturbation},
          {"symmetric", spec.symmetric},
          {"rsu_spacing", spec.rsu_spacing},
          {"av_spacing", spec.av_spacing},
          {"av_start_x", spec.av_start_x},
          {"av_y", spec.av_y},
          {"rsu", write_rsu(spec.rsu)},
          {"av", write_av(spec.av)},
          {"channel", write_channel(spec.channel)},
          {"coupling", coupling}};
}

void read_env(const json& j, EnvConfig& e) {
  Section s(j, "env");
  s.get("history_window", e.history_window);
  s.get("episode_length", e.episode_length);
  s.get("bandwidth_cap", e.bandwidth_cap);
  s.get("delay_penalty", e.delay_penalty);
  s.get("delay_violation_cap", e.delay_violation_cap);
  s.get("arrival_jitter", e.arrival_jitter);
  s.get("service_jitter", e.service_jitter);
  s.get("followers_see_current_prices", e.followers_see_current_prices);
  s.get("seed", e.seed);
  s.finish();
}

json write_env(const EnvConfig& e) {
  return {{"history_window", e.history_window},
          {"episode_length", e.episode_length},
          {"bandwidth_cap", e.bandwidth_cap},
          {"delay_penalty", e.delay_penalty},
          {"delay_violation_cap", e.delay_violation_cap},
          {"arrival_jitter", e.arrival_jitter},
          {"service_jitter", e.service_jitter},
          {"followers_see_current_prices", e.followers_see_current_prices},
          {"seed", e.seed}};
}

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.get("gamma", t.gamma);
  s.get("clip", t.clip);
  s.get("hybrid_weight", t.hybrid_weight);
  s.get("value_weight", t.value_weight);
  s.get("anneal_rate", t.anneal_rate);
  s.get("anneal_offset", t.anneal_offset);
  s.get("entropy_coef", t.entropy_coef);
  s.get("reg_weight", t.reg_weight);
  s.get("actor_lr", t.actor_lr);
  s.get("critic_lr", t.critic_lr);
  s.get("leader_lr_scale", t.leader_lr_scale);
  s.get("rollout_length", t.rollout_length);
  s.get("minibatch_size", t.minibatch_size);
  s.get("epochs", t.epochs);
  s.get("episodes", t.episodes);
  s.get("train_interval", t.train_interval);
  s.get("max_grad_norm", t.max_grad_norm);
  s.get("init_log_std", t.init_log_std);
  s.get("min_log_std", t.min_log_std);
  s.get("hidden", t.hidden);
  s.get("checkpoint_every", t.checkpoint_every);
  if (const json* c = s.child("cvae")) {
    Section sub(*c, "train.cvae");
    sub.get("latent_dim", t.cvae.latent_dim);
    sub.get("hidden", t.cvae.hidden);
    sub.get("learning_rate", t.cvae.learning_rate);
    sub.get("batch_size", t.cvae.batch_size);
    sub.get("js_samples", t.cvae.js_samples);
    sub.get("max_grad_norm", t.cvae.max_grad_norm);
    sub.get("min_log_std", t.cvae.min_log_std);
    sub.get("max_log_std", t.cvae.max_log_std);
    sub.get("tie_posteriors", t.cvae.tie_posteriors);
    sub.finish();
  }
  s.finish();
}

json write_train(const TrainConfig& t) {
  return {{"gamma", t.gamma},
          {"clip", t.clip},
          {"hybrid_weight", t.hybrid_weight},
          {"value_weight", t.value_weight},
          {"anneal_rate", t.anneal_rate},
          {"anneal_offset", t.anneal_offset},
          {"entropy_coef", t.entropy_coef},
          {"reg_weight", t.reg_weight},
          {"actor_lr", t.actor_lr},
          {"critic_lr", t.critic_lr},
          {"leader_lr_scale", t.leader_lr_scale},
          {"rollout_length", t.rollout_length},
          {"minibatch_size", t.minibatch_size},
          {"epochs", t.epochs},
          {"episodes", t.episodes},
          {"train_interval", t.train_interval},
          {"max_grad_norm", t.max_grad_norm},
          {"init_log_std", t.init_log_std},
          {"min_log_std", t.min_log_std},
          {"hidden", t.hidden},
          {"checkpoint_every", t.checkpoint_every},
          {"cvae",
           {{"latent_dim", t.cvae.latent_dim},
            {"hidden", t.cvae.hidden},
            {"learning_rate", t.cvae.learning_rate},
            {"batch_size", t.cvae.batch_size},
            {"js_samples", t.cvae.js_samples},
            {"max_grad_norm", t.cvae.max_grad_norm},
            {"min_log_std", t.cvae.min_log_std},
            {"max_log_std", t.cvae.max_log_std},
            {"tie_posteriors", t.cvae.tie_posteriors}}}};
}

void read_prune(const json& j, PruneConfig& p) {
  Section s(j, "prune");
  s.get("enabled", p.enabled);
  s.get("initial_sparsity", p.initial_sparsity);
  s.get("target_sparsity", p.target_sparsity);
  s.get("start_step", p.start_step);
  s.get("num_steps", p.num_steps);
  s.get("frequency", p.frequency);
  s.get("window", p.window);
  s.get("decay", p.decay);
  s.get("incentive_sensitivity", p.incentive_sensitivity);
  std::string mode = mode_name(p.mode);
  s.get("mode", mode);
  p.mode = mode_from_name(mode);
  s.get("min_neurons_per_layer", p.min_neurons_per_layer);
  s.get("literal_decay_exponent", p.literal_decay_exponent);
  s.get("use_incentive", p.use_incentive);
  s.finish();
}

json write_prune(const PruneConfig& p) {
  return {{"enabled", p.enabled},
          {"initial_sparsity", p.initial_sparsity},
          {"target_sparsity", p.target_sparsity},
          {"start_step", p.start_step},
          {"num_steps", p.num_steps},
          {"frequency", p.frequency},
          {"window", p.window},
          {"decay", p.decay},
          {"incentive_sensitivity", p.incentive_sensitivity},
          {"mode", mode_name(p.mode)},
          {"min_neurons_per_layer", p.min_neurons_per_layer},
          {"literal_decay_exponent", p.literal_decay_exponent},
          {"use_incentive", p.use_incentive}};
}

void read_run(const json& j, ExperimentConfig& c) {
  Section s(j, "run");
  s.get("seeds", c.seeds);
  s.get("output_dir", c.output_dir);
  std::string algo = algorithm_name(c.algorithm);
  s.get("algorithm", algo);
  c.algorithm = algorithm_from_name(algo);
  s.get("eval_episodes", c.eval_episodes);
  s.get("checkpoint", c.checkpoint);
  s.get("threads", c.threads);
  if (const json* a = s.child("sweep_algorithms")) {
    if (!a->is_array()) {
      throw ConfigError("run.sweep_algorithms: expected a list of names");
    }
    c.sweep_algorithms.clear();
    for (const auto& name : *a) {
      if (!name.is_string()) {
        throw ConfigError("run.sweep_algorithms: expected strings");
      }
      c.sweep_algorithms.push_back(
          algorithm_from_name(name.get<std::string>()));
    }
  }
  if (const json* sv = s.child("solver")) {
    Section sub(*sv, "run.solver");
    sub.get("tol", c.solver.tol);
    sub.get("max_outer", c.solver.max_outer);
    sub.get("probe_points", c.solver.probe_points);
    sub.get("run_probe", c.solver.run_probe);
    sub.finish();
  }
  s.finish();
  if (c.seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (c.eval_episodes < 0) throw ConfigError("run.eval_episodes must be >= 0");
  if (c.threads < 1) throw ConfigError("run.threads must be >= 1");
  if (c.solver.tol <= 0 || c.solver.max_outer < 1 ||
      c.solver.probe_points < 2) {
    throw ConfigError("run.solver: need tol > 0, max_outer >= 1, "
                      "probe_points >= 2");
  }
}

json write_run(const ExperimentConfig& c) {
  json algos = json::array();
  for (Algorithm a : c.sweep_algorithms) algos.push_back(algorithm_name(a));
  return {{"seeds", c.seeds},
          {"output_dir", c.output_dir},
          {"algorithm", algorithm_name(c.algorithm)},
          {"eval_episodes", c.eval_episodes},
          {"checkpoint", c.checkpoint},
          {"threads", c.threads},
          {"sweep_algorithms", algos},
          {"solver",
           {{"tol", c.solver.tol},
            {"max_outer", c.solver.max_outer},
            {"probe_points", c.solver.probe_points},
            {"run_probe", c.solver.run_probe}}}};
}

double perturbed(double base, double width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return base * (1.0 + width * u(rng));
}

// Follower-side positivity at the warm-up prices: the follower equilibrium
// exists and every aggregate and effective price p_j - K_ij is positive.
bool warmup_positive(const GameInstance& game) {
  std::vector<double> prices;
  for (const auto& r : game.rsus) {
    prices.push_back(0.5 * (r.unit_cost + r.price_cap));
  }
  StrategyProfile profile;
  profile.prices = prices;
  try {
    profile.bandwidth = solve_follower_nash(prices, game).bandwidth;
  } catch (const std::exception&) {
    return false;
  }
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    for (std::size_t j = 0; j < game.num_rsus(); ++j) {
      const BestResponseTerms t = best_response_terms(i, j, profile, game);
      if (!(t.aggregate > 0) || !(prices[j] - t.marginal_coupling > 0)) {
        return false;
      }
    }
  }
  return true;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path, CommandOutput* out) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  if (out) out->files.push_back(path);
  return os;
}

void write_config_snapshot(const ExperimentConfig& config,
                           const std::string& out_dir, CommandOutput* out) {
  auto os = open_out(out_dir + "/config.json", out);
  os << config_to_json(config).dump(2) << '\n';
}

std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

InstanceSpec::InstanceSpec() {
  av.delay_sensitivity = 1.5;
  channel.bandwidth_unit_hz = 1e7;
  // Just below the AVs' choke price delta / E on the default profiles, so
  // the price box holds no region of zero demand.
  rsu.price_cap = 4.0;
}

ExperimentConfig::ExperimentConfig() {
  env.followers_see_current_prices = true;
  // Leaders move on a slower clock than followers; at equal rates the
  // followers' price response lags and leader prices drift upward.
  train.leader_lr_scale = 0.1;
}

StackelbergOptions SolverSettings::options() const {
  StackelbergOptions o;
  o.tol = tol;
  o.max_outer = max_outer;
  o.probe_points = probe_points;
  o.run_probe = run_probe;
  return o;
}

GameInstance build_instance(const InstanceSpec& spec) {
  if (spec.num_avs < 1 || spec.num_rsus < 1) {
    throw ConfigError("instance: need at least one AV and one RSU");
  }
  std::mt19937_64 rng(spec.seed);
  const double width = spec.symmetric ? 0.0 : spec.perturbation;
  GameInstance g;
  g.channel = spec.channel;
  for (std::size_t j = 0; j < spec.num_rsus; ++j) {
    RsuProfile r = spec.rsu;
    r.id = static_cast<int>(j);
    r.reputation_weight = perturbed(r.reputation_weight, width, rng);
    r.unit_cost = perturbed(r.unit_cost, width, rng);
    r.cpu_rate = perturbed(r.cpu_rate, width, rng);
    r.position = {spec.rsu_spacing * static_cast<double>(j), 0.0};
    g.rsus.push_back(r);
  }
  for (std::size_t i = 0; i < spec.num_avs; ++i) {
    AvProfile a = spec.av;
    a.id = static_cast<int>(i);
    a.data_size = perturbed(a.data_size, width, rng);
    a.cpu_cycles = perturbed(a.cpu_cycles, width, rng);
    a.satisfaction = perturbed(a.satisfaction, width, rng);
    a.delay_sensitivity = perturbed(a.delay_sensitivity, width, rng);
    if (spec.symmetric) {
      // Identical channels too: every AV sits at the same offset.
      a.position = {spec.av_start_x, spec.av_y};
    } else {
      a.position = {spec.av_start_x + spec.av_spacing * static_cast<double>(i),
                    spec.av_y};
    }
    g.avs.push_back(a);
  }
  if (spec.symmetric) {
    // Symmetric RSUs share a location so channel gains are identical.
    for (auto& r : g.rsus) r.position = {0.0, 0.0};
  }
  refresh_qoe(g);

  const std::size_t v = spec.num_avs;
  const std::size_t r = spec.num_rsus;
  g.social = Matrix(v, v);
  g.service = Matrix(r, r);
  switch (spec.coupling) {
    case CouplingMode::kExplicit:
      g.social = spec.social;
      g.service = spec.service;
      break;
    case CouplingMode::kUniform:
      for (std::size_t a = 0; a < v; ++a) {
        for (std::size_t b = 0; b < v; ++b) {
          if (a != b) g.social(a, b) = spec.social_value;
        }
      }
      for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t b = 0; b < r; ++b) {
          if (a != b) g.service(a, b) = spec.service_value;
        }
      }
      break;
    case CouplingMode::kRandom: {
      std::uniform_real_distribution<double> zeta(spec.social_min,
                                                  spec.social_max);
      std::uniform_real_distribution<double> eta(spec.service_min,
                                                 spec.service_max);
      for (std::size_t a = 0; a < v; ++a) {
        for (std::size_t b = a + 1; b < v; ++b) {
          g.social(a, b) = g.social(b, a) = zeta(rng);
        }
      }
      for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t b = a + 1; b < r; ++b) {
          g.service(a, b) = g.service(b, a) = eta(rng);
        }
      }
      break;
    }
  }
  g.validate();
  if (spec.coupling == CouplingMode::kRandom) {
    for (int k = 0; k < 60 && !warmup_positive(g); ++k) {
      for (double& x : g.social.data()) x *= 0.5;
      for (double& x : g.service.data()) x *= 0.5;
    }
  }
  return g;
}

InstanceSpec symmetric_spec(const InstanceSpec& spec, std::size_t num_avs,
                            std::size_t num_rsus) {
  InstanceSpec s = spec;
  s.num_avs = num_avs;
  s.num_rsus = num_rsus;
  s.symmetric = true;
  s.coupling = CouplingMode::kUniform;
  return s;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section s(j, "config");
  if (const json* x = s.child("instance")) read_instance(*x, c.instance);
  if (const json* x = s.child("env")) read_env(*x, c.env);
  if (const json* x = s.child("train")) read_train(*x, c.train);
  if (const json* x = s.child("prune")) read_prune(*x, c.prune);
  if (const json* x = s.child("run")) read_run(*x, c);
  s.finish();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return {{"instance", write_instance(c.instance)},
          {"env", write_env(c.env)},
          {"train", write_train(c.train)},
          {"prune", write_prune(c.prune)},
          {"run", write_run(c)}};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

void validate_config(const ExperimentConfig& config) {
  const GameInstance game = build_instance(config.instance);
  config.env.validate(game);
  config.train.validate();
  config.prune.validate();
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string schema_line(const std::string& kind) {
  return "# tinyma-" + kind + " schema v" + std::to_string(kCsvSchemaVersion);
}

void write_equilibrium_csv(const EquilibriumReport& report, std::ostream& os) {
  os << schema_line("equilibrium") << '\n';
  os << "quantity,av,rsu,value\n";
  auto row = [&](const char* q, const std::string& av, const std::string& rsu,
                 double v) {
    os << q << ',' << av << ',' << rsu << ',' << format_double(v) << '\n';
  };
  for (std::size_t j = 0; j < report.prices.size(); ++j) {
    row("price", "", std::to_string(j), report.prices[j]);
  }
  for (std::size_t i = 0; i < report.bandwidth.rows(); ++i) {
    for (std::size_t j = 0; j < report.bandwidth.cols(); ++j) {
      row("bandwidth", std::to_string(i), std::to_string(j),
          report.bandwidth(i, j));
    }
  }
  for (std::size_t j = 0; j < report.leader_utilities.size(); ++j) {
    row("leader_utility", "", std::to_string(j), report.leader_utilities[j]);
  }
  for (std::size_t i = 0; i < report.follower_utilities.size(); ++i) {
    row("follower_utility", std::to_string(i), "",
        report.follower_utilities[i]);
  }
  row("social_welfare", "", "", report.social_welfare);
  row("residual", "", "", report.residual);
  row("iterations", "", "", report.iterations);
  for (std::size_t j = 0; j < report.leader_max_improvement.size(); ++j) {
    row("leader_probe_gain", "", std::to_string(j),
        report.leader_max_improvement[j]);
  }
  for (std::size_t i = 0; i < report.follower_max_improvement.size(); ++i) {
    row("follower_probe_gain", std::to_string(i), "",
        report.follower_max_improvement[i]);
  }
  for (std::size_t i = 0; i < report.delay_feasible.size(); ++i) {
    row("delay_feasible", std::to_string(i), "",
        report.delay_feasible[i] ? 1.0 : 0.0);
  }
  for (std::size_t j = 0; j < report.closed_form_prices.size(); ++j) {
    row("closed_form_price", "", std::to_string(j),
        report.closed_form_prices[j]);
  }
  for (std::size_t j = 0; j < report.literal_closed_form_prices.size(); ++j) {
    row("literal_closed_form_price", "", std::to_string(j),
        report.literal_closed_form_prices[j]);
  }
}

EquilibriumReport cmd_solve(const ExperimentConfig& config,
                            const std::string& out_dir, CommandOutput* out) {
  const GameInstance game = build_instance(config.instance);
  ensure_dir(out_dir);
  write_config_snapshot(config, out_dir, out);
  const auto start = std::chrono::steady_clock::now();
  EquilibriumReport report = solve_stackelberg(game, config.solver.options());
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  {
    auto os = open_out(out_dir + "/equilibrium.csv", out);
    write_equilibrium_csv(report, os);
  }
  auto os = open_out(out_dir + "/equilibrium_summary.txt", out);
  os << "iterations " << report.iterations << "\n";
  os << "residual " << format_double(report.residual) << "\n";
  os << "seconds " << secs << "\n";
  os << "prices";
  for (double p : report.prices) os << ' ' << format_double(p);
  os << "\nsocial_welfare " << format_double(report.social_welfare) << "\n";
  double probe = -1e300;
  for (double g : report.leader_max_improvement) probe = std::max(probe, g);
  for (double g : report.follower_max_improvement) probe = std::max(probe, g);
  if (config.solver.run_probe) {
    os << "max_unilateral_gain " << format_double(probe) << "\n";
  }
  if (game.num_rsus() == 1) {
    const bool at_cap = report.prices[0] >= game.rsus[0].price_cap - 1e-9;
    const std::string note =
        std::string("single RSU: monopoly pricing, ") +
        (at_cap ? "price clamped at the cap" : "interior monopoly price");
    os << "note " << note << "\n";
    if (out) out->warnings.push_back(note);
  }
  for (const auto& w : report.warnings) {
    os << "warning " << w << "\n";
    if (out) out->warnings.push_back(w);
  }
  return report;
}

void write_metrics_csv(const TrainResult& result, std::size_t num_rsus,
                       std::size_t num_avs, std::ostream& os) {
  os << schema_line("metrics") << '\n';
  os << "episode";
  for (std::size_t j = 0; j < num_rsus; ++j) os << ",reward_rsu" << j;
  for (std::size_t i = 0; i < num_avs; ++i) os << ",reward_av" << i;
  os << ",social_welfare,sparsity,c3,mean_incentive,mean_js";
  for (std::size_t j = 0; j < num_rsus; ++j) os << ",price_rsu" << j;
  os << ",updates\n";
  for (const auto& m : result.metrics) {
    os << m.episode;
    for (double r : m.agent_rewards) os << ',' << format_double(r);
    os << ',' << format_double(m.social_welfare) << ','
       << format_double(m.sparsity) << ',' << format_double(m.c3) << ','
       << format_double(m.mean_incentive) << ',' << format_double(m.mean_js);
    for (double p : m.mean_prices) os << ',' << format_double(p);
    os << ',' << m.updates << '\n';
  }
}

void write_prune_csv(const TrainResult& result, std::ostream& os) {
  os << schema_line("prune") << '\n';
  os << "update,episode,agent,layer,neurons_pruned,sparsity,rate,p_t1,p_t2,"
        "psi,js,js_prev,has_incentive\n";
  for (const auto& e : result.prune_log) {
    os << e.update << ',' << e.episode << ',' << e.agent << ',' << e.layer
       << ',' << e.neurons_pruned << ',' << format_double(e.sparsity) << ','
       << format_double(e.rate) << ',' << format_double(e.p_t1) << ','
       << format_double(e.p_t2) << ',' << format_double(e.psi) << ','
       << format_double(e.js) << ',' << format_double(e.js_prev) << ','
       << (e.has_incentive ? 1 : 0) << '\n';
  }
}

std::vector<TrainResult> cmd_train(const ExperimentConfig& config,
                                   const std::string& out_dir,
                                   CommandOutput* out) {
  const GameInstance game = build_instance(config.instance);
  PruneConfig prune = config.prune;
  if (config.algorithm != Algorithm::kTinyMaIeiPpo && prune.enabled) {
    const std::string w = "pruning settings are ignored for " +
                          algorithm_name(config.algorithm);
    if (out) out->warnings.push_back(w);
    prune.enabled = false;
  }
  Trainer trainer(game, config.env, config.train, prune);
  ensure_dir(out_dir);
  write_config_snapshot(config, out_dir, out);
  std::vector<TrainResult> results;
  for (std::uint64_t seed : config.seeds) {
    const std::string tag = std::to_string(seed);
    TrainOptions opts;
    opts.algorithm = config.algorithm;
    opts.seed = seed;
    if (is_learning(config.algorithm)) {
      opts.checkpoint_dir = out_dir + "/checkpoints_" + tag;
      ensure_dir(opts.checkpoint_dir);
    }
    TrainResult result = trainer.train(opts);
    {
      auto os = open_out(out_dir + "/metrics_" + tag + ".csv", out);
      write_metrics_csv(result, game.num_rsus(), game.num_avs(), os);
    }
    {
      auto os = open_out(out_dir + "/prune_" + tag + ".csv", out);
      write_prune_csv(result, os);
    }
    if (!result.learners.empty()) {
      {
        auto os = open_out(out_dir + "/checkpoint_" + tag + ".txt", out);
        save_learners(result.learners, os);
      }
      for (std::size_t k = 0; k < result.learners.size(); ++k) {
        auto os = open_out(out_dir + "/compact_" + tag + "_agent" +
                               std::to_string(k) + ".txt",
                           out);
        compact(result.learners[k].actor).save(os);
      }
    }
    results.push_back(std::move(result));
  }
  return results;
}

EvalResult cmd_eval(const ExperimentConfig& config, const std::string& out_dir,
                    std::uint64_t seed, CommandOutput* out) {
  const GameInstance game = build_instance(config.instance);
  EvalResult result;
  if (is_learning(config.algorithm)) {
    const std::string path =
        config.checkpoint.empty()
            ? out_dir + "/checkpoint_" + std::to_string(seed) + ".txt"
            : config.checkpoint;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    std::vector<AgentLearner> learners = load_learners(in);
    result = evaluate_learners(game, config.env, learners,
                               config.eval_episodes, seed);
  } else {
    result = evaluate_baseline(config.algorithm, game, config.env,
                               config.eval_episodes, seed);
  }
  SolverSettings settings = config.solver;
  settings.run_probe = false;
  const EquilibriumReport se = solve_stackelberg(game, settings.options());
  const double scale = std::max(std::abs(se.social_welfare), 1e-12);

  ensure_dir(out_dir);
  auto os = open_out(out_dir + "/eval.csv", out);
  os << schema_line("eval") << '\n';
  os << "episode";
  for (std::size_t j = 0; j < game.num_rsus(); ++j) os << ",reward_rsu" << j;
  for (std::size_t i = 0; i < game.num_avs(); ++i) os << ",reward_av" << i;
  os << ",social_welfare,se_welfare,gap_to_se\n";
  for (const auto& m : result.episodes) {
    os << m.episode;
    for (double r : m.agent_rewards) os << ',' << format_double(r);
    os << ',' << format_double(m.social_welfare) << ','
       << format_double(se.social_welfare) << ','
       << format_double((se.social_welfare - m.social_welfare) / scale)
       << '\n';
  }
  return result;
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "n_avs") return SweepAxis::kNumAvs;
  if (name == "n_rsus") return SweepAxis::kNumRsus;
  throw ConfigError("unknown sweep axis '" + name +
                    "' (expected n_avs or n_rsus)");
}

std::string sweep_axis_name(SweepAxis axis) {
  return axis == SweepAxis::kNumAvs ? "n_avs" : "n_rsus";
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config,
                                SweepAxis axis,
                                const std::vector<std::size_t>& values,
                                const std::string& out_dir,
                                CommandOutput* out) {
  for (std::size_t v : values) {
    if (v < 1) throw ConfigError("sweep values must be >= 1");
  }
  std::vector<std::string> cells;
  cells.push_back("se");
  for (Algorithm a : config.sweep_algorithms) cells.push_back(algorithm_name(a));

  auto run_cell = [&config, axis](std::size_t value,
                                  const std::string& cell) -> SweepRow {
    SweepRow row;
    row.value = value;
    row.algorithm = cell;
    try {
      const std::size_t v =
          axis == SweepAxis::kNumAvs ? value : config.instance.num_avs;
      const std::size_t r =
          axis == SweepAxis::kNumRsus ? value : config.instance.num_rsus;
      const GameInstance game =
          build_instance(symmetric_spec(config.instance, v, r));
      if (cell == "se") {
        SolverSettings settings = config.solver;
        settings.run_probe = false;
        const EquilibriumReport rep =
            solve_stackelberg(game, settings.options());
        for (double u : rep.follower_utilities) row.avg_av_reward += u / v;
        for (double u : rep.leader_utilities) row.avg_rsu_reward += u / r;
        row.social_welfare = rep.social_welfare;
        return row;
      }
      const Algorithm algo = algorithm_from_name(cell);
      const std::uint64_t seed = config.seeds.front();
      EvalResult eval;
      if (is_learning(algo)) {
        PruneConfig prune = config.prune;
        if (algo != Algorithm::kTinyMaIeiPpo) prune.enabled = false;
        Trainer trainer(game, config.env, config.train, prune);
        TrainOptions opts;
        opts.algorithm = algo;
        opts.seed = seed;
        TrainResult tr = trainer.train(opts);
        eval = evaluate_learners(game, config.env, tr.learners,
                                 std::max(1, config.eval_episodes), seed);
      } else {
        eval = evaluate_baseline(algo, game, config.env,
                                 std::max(1, config.eval_episodes), seed);
      }
      for (std::size_t j = 0; j < r; ++j) {
        row.avg_rsu_reward += eval.mean_agent_rewards[j] / r;
      }
      for (std::size_t i = 0; i < v; ++i) {
        row.avg_av_reward += eval.mean_agent_rewards[r + i] / v;
      }
      row.social_welfare = eval.mean_social_welfare;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    return row;
  };

  std::vector<SweepRow> rows;
  if (config.threads <= 1) {
    for (std::size_t v : values) {
      for (const auto& c : cells) rows.push_back(run_cell(v, c));
    }
  } else {
    std::vector<std::future<SweepRow>> pending;
    for (std::size_t v : values) {
      for (const auto& c : cells) {
        pending.push_back(std::async(std::launch::deferred, run_cell, v, c));
      }
    }
    // Launch at most `threads` cells at a time; results keep their order.
    for (std::size_t start = 0; start < pending.size();
         start += static_cast<std::size_t>(config.threads)) {
      const std::size_t end = std::min(
          pending.size(), start + static_cast<std::size_t>(config.threads));
      std::vector<std::future<SweepRow>> batch;
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(std::async(std::launch::async,
                                   [&pending, k] { return pending[k].get(); }));
      }
      for (auto& f : batch) rows.push_back(f.get());
    }
  }

  ensure_dir(out_dir);
  auto os = open_out(out_dir + "/sweep_" + sweep_axis_name(axis) + ".csv", out);
  os << schema_line("sweep") << '\n';
  os << sweep_axis_name(axis)
     << ",algorithm,avg_av_reward,avg_rsu_reward,social_welfare,status,"
        "error\n";
  for (const auto& r : rows) {
    os << r.value << ',' << r.algorithm << ',' << format_double(r.avg_av_reward)
       << ',' << format_double(r.avg_rsu_reward) << ','
       << format_double(r.social_welfare) << ',' << (r.ok ? "ok" : "failed")
       << ',' << csv_safe(r.error) << '\n';
    if (!r.ok && out) {
      out->warnings.push_back("sweep cell " + std::to_string(r.value) + "/" +
                              r.algorithm + " failed: " + r.error);
    }
  }
  return rows;
}

}  // namespace tinyma
