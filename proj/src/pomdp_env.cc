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

#include "tinyma/pomdp_env.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tinyma {

void EnvConfig::validate(const GameInstance& game) const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("env: " + what);
  };
  require(history_window >= 1, "history_window must be >= 1");
  require(episode_length >= history_window,
          "episode_length must be >= history_window");
  require(bandwidth_cap > 0, "bandwidth_cap must be > 0");
  require(delay_penalty >= 0, "delay_penalty must be >= 0");
  require(delay_violation_cap > 0, "delay_violation_cap must be > 0");
  require(arrival_jitter >= 0 && arrival_jitter < 1,
          "arrival_jitter must be in [0, 1)");
  require(service_jitter >= 0 && service_jitter < 1,
          "service_jitter must be in [0, 1)");
  for (const auto& r : game.rsus) {
    require(r.service_rate * (1 - service_jitter) >
                r.arrival_rate * (1 + arrival_jitter),
            "rsu " + std::to_string(r.id) +
                " can become unstable under the configured jitter");
  }
  for (const auto& a : game.avs) {
    require(a.log_offset() > 0,
            "av " + std::to_string(a.id) +
                " has alpha * T_max >= e, so b = 0 leaves the log domain");
  }
}

StackelbergEnv::StackelbergEnv(GameInstance game, EnvConfig config)
    : game_(std::move(game)), config_(config), rng_(config.seed) {
  game_.validate();
  config_.validate(game_);
  reset(config_.seed);
}

void StackelbergEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  const std::size_t v = num_followers();
  const std::size_t r = num_leaders();
  state_ = GlobalState{};
  state_.prices.assign(r, 0.0);
  state_.bandwidth = Matrix(v, r);
  state_.leader_rewards.assign(r, 0.0);
  state_.follower_rewards.assign(v, 0.0);
  for (const auto& rsu : game_.rsus) {
    state_.arrival_rates.push_back(rsu.arrival_rate);
    state_.service_rates.push_back(rsu.service_rate);
  }
  history_.clear();
  log_.clear();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int h = 0; h < config_.history_window; ++h) {
    std::vector<double> p(r);
    Matrix b(v, r);
    for (std::size_t j = 0; j < r; ++j) {
      const auto& rsu = game_.rsus[j];
      p[j] = rsu.unit_cost + (rsu.price_cap - rsu.unit_cost) * unit(rng_);
    }
    for (double& x : b.data()) x = config_.bandwidth_cap * unit(rng_);
    push_history(p, b);
    state_.prices = p;
    state_.bandwidth = b;
  }
}

void StackelbergEnv::push_history(const std::vector<double>& prices,
                                  const Matrix& b) {
  std::vector<double> row;
  row.reserve(b.size() + prices.size());
  for (double x : b.data()) row.push_back(unit_from_bandwidth(x));
  for (std::size_t j = 0; j < prices.size(); ++j) {
    row.push_back(unit_from_price(j, prices[j]));
  }
  history_.push_back(std::move(row));
  while (history_.size() > static_cast<std::size_t>(config_.history_window)) {
    history_.pop_front();
  }
}

StepResult StackelbergEnv::step(std::span<const double> prices,
                                const Matrix& bandwidth) {
  const std::size_t v = num_followers();
  const std::size_t r = num_leaders();
  if (prices.size() != r || bandwidth.rows() != v || bandwidth.cols() != r) {
    throw DimensionError("env step: expected " + std::to_string(r) +
                         " prices and a " + std::to_string(v) + "x" +
                         std::to_string(r) + " bandwidth matrix");
  }
  if (done()) throw std::logic_error("env step: episode already finished");

  StepRecord rec;
  rec.t = state_.t;
  rec.prices.assign(prices.begin(), prices.end());
  rec.bandwidth = bandwidth;
  for (std::size_t j = 0; j < r; ++j) {
    const auto& rsu = game_.rsus[j];
    const double c = std::clamp(rec.prices[j], rsu.unit_cost, rsu.price_cap);
    if (c != rec.prices[j]) rec.clamped = true;
    rec.prices[j] = c;
  }
  for (double& x : rec.bandwidth.data()) {
    const double c = std::clamp(x, 0.0, config_.bandwidth_cap);
    if (c != x) rec.clamped = true;
    x = c;
  }
  rec.arrival_rates = state_.arrival_rates;
  rec.service_rates = state_.service_rates;
  recompute_rewards(rec, game_, config_, rec.leader_rewards,
                    rec.follower_rewards);
  rec.follower_penalties.resize(v);
  {
    StrategyProfile profile;
    profile.prices = rec.prices;
    profile.bandwidth = rec.bandwidth;
    for (std::size_t i = 0; i < v; ++i) {
      rec.follower_penalties[i] =
          follower_utility(i, profile, game_) - rec.follower_rewards[i];
    }
  }

  StepResult out;
  out.leader_rewards = rec.leader_rewards;
  out.follower_rewards = rec.follower_rewards;
  out.clamped = rec.clamped;

  state_.prices = rec.prices;
  state_.bandwidth = rec.bandwidth;
  state_.leader_rewards = rec.leader_rewards;
  state_.follower_rewards = rec.follower_rewards;
  push_history(rec.prices, rec.bandwidth);
  log_.push_back(std::move(rec));
  ++state_.t;

  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  for (std::size_t j = 0; j < r; ++j) {
    const auto& rsu = game_.rsus[j];
    state_.arrival_rates[j] =
        rsu.arrival_rate * (1.0 + config_.arrival_jitter * sym(rng_));
    state_.service_rates[j] =
        rsu.service_rate * (1.0 + config_.service_jitter * sym(rng_));
  }
  out.done = done();
  return out;
}

void recompute_rewards(const StepRecord& record, const GameInstance& game,
                       const EnvConfig& config,
                       std::vector<double>& leader_rewards,
                       std::vector<double>& follower_rewards) {
  StrategyProfile profile;
  profile.prices = record.prices;
  profile.bandwidth = record.bandwidth;
  leader_rewards.resize(game.num_rsus());
  follower_rewards.resize(game.num_avs());
  for (std::size_t j = 0; j < game.num_rsus(); ++j) {
    leader_rewards[j] = leader_utility(j, profile, game);
  }
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    double reward = follower_utility(i, profile, game);
    if (config.delay_penalty > 0) {
      const double violation =
          delay_violation(i, profile, game, record.arrival_rates,
                          record.service_rates);
      reward -=
          config.delay_penalty * std::min(violation, config.delay_violation_cap);
    }
    follower_rewards[i] = reward;
  }
}

std::size_t StackelbergEnv::leader_observation_size() const {
  const std::size_t v = num_followers();
  const std::size_t r = num_leaders();
  return config_.history_window * (v * r + r) + 2;
}

std::size_t StackelbergEnv::follower_observation_size() const {
  const std::size_t v = num_followers();
  const std::size_t r = num_leaders();
  return config_.history_window * (v * r + r) +
         (config_.followers_see_current_prices ? r : 0);
}

double StackelbergEnv::normalized_rate(double value, double base,
                                       double jitter) const {
  if (jitter <= 0) return 0.0;
  return std::clamp((value / base - 1.0) / jitter, -1.0, 1.0);
}

std::vector<double> StackelbergEnv::leader_observation(std::size_t rsu) const {
  std::vector<double> obs;
  obs.reserve(leader_observation_size());
  for (const auto& row : history_) obs.insert(obs.end(), row.begin(), row.end());
  const auto& profile = game_.rsus[rsu];
  obs.push_back(normalized_rate(state_.arrival_rates[rsu],
                                profile.arrival_rate, config_.arrival_jitter));
  obs.push_back(normalized_rate(state_.service_rates[rsu],
                                profile.service_rate, config_.service_jitter));
  return obs;
}

std::vector<double> StackelbergEnv::follower_observation(
    std::size_t /*av*/, std::span<const double> current_prices) const {
  std::vector<double> obs;
  obs.reserve(follower_observation_size());
  for (const auto& row : history_) obs.insert(obs.end(), row.begin(), row.end());
  if (config_.followers_see_current_prices) {
    if (current_prices.size() != num_leaders()) {
      throw DimensionError(
          "follower observation: current prices required by config");
    }
    for (std::size_t j = 0; j < num_leaders(); ++j) {
      obs.push_back(unit_from_price(
          j, std::clamp(current_prices[j], game_.rsus[j].unit_cost,
                        game_.rsus[j].price_cap)));
    }
  }
  return obs;
}

double StackelbergEnv::price_from_unit(std::size_t rsu, double u) const {
  const auto& r = game_.rsus[rsu];
  return r.unit_cost + (u + 1.0) * 0.5 * (r.price_cap - r.unit_cost);
}

double StackelbergEnv::unit_from_price(std::size_t rsu, double p) const {
  const auto& r = game_.rsus[rsu];
  return 2.0 * (p - r.unit_cost) / (r.price_cap - r.unit_cost) - 1.0;
}

double StackelbergEnv::bandwidth_from_unit(double u) const {
  return (u + 1.0) * 0.5 * config_.bandwidth_cap;
}

double StackelbergEnv::unit_from_bandwidth(double b) const {
  return 2.0 * b / config_.bandwidth_cap - 1.0;
}

std::vector<double> StackelbergEnv::global_state_features() const {
  std::vector<double> s = joint_action_features(state_.prices,
                                                state_.bandwidth);
  for (std::size_t j = 0; j < num_leaders(); ++j) {
    const auto& profile = game_.rsus[j];
    s.push_back(normalized_rate(state_.arrival_rates[j],
                                profile.arrival_rate, config_.arrival_jitter));
    s.push_back(normalized_rate(state_.service_rates[j],
                                profile.service_rate, config_.service_jitter));
  }
  return s;
}

std::size_t StackelbergEnv::global_state_size() const {
  return joint_action_size() + 2 * num_leaders();
}

std::vector<double> StackelbergEnv::joint_action_features(
    std::span<const double> prices, const Matrix& bandwidth) const {
  std::vector<double> a;
  a.reserve(joint_action_size());
  for (std::size_t j = 0; j < num_leaders(); ++j) {
    a.push_back(unit_from_price(j, prices[j]));
  }
  for (double b : bandwidth.data()) a.push_back(unit_from_bandwidth(b));
  return a;
}

std::size_t StackelbergEnv::joint_action_size() const {
  return num_leaders() + num_followers() * num_leaders();
}

}  // namespace tinyma
