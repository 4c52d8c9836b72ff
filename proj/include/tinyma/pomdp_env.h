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

#ifndef TINYMA_POMDP_ENV_H_
#define TINYMA_POMDP_ENV_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "tinyma/game_model.h"

namespace tinyma {

struct EnvConfig {
  int history_window = 4;   // L
  int episode_length = 32;  // T
  double bandwidth_cap = 8.0;
  double delay_penalty = 10.0;  // reward units per second of violation
  // Violations are capped so that b = 0 (infinite delay) stays finite.
  double delay_violation_cap = 1.0;
  double arrival_jitter = 0.1;  // relative half-width around the profile
  double service_jitter = 0.1;
  bool followers_see_current_prices = false;
  std::uint64_t seed = 0;

  // Throws ConfigError. Checks the queue stays stable under jitter and that
  // every bandwidth in [0, b_max] is inside the utility's log domain.
  void validate(const GameInstance& game) const;
};

struct GlobalState {
  std::vector<double> prices;  // P^t (last submitted)
  Matrix bandwidth;            // B^t
  std::vector<double> arrival_rates;
  std::vector<double> service_rates;
  std::vector<double> leader_rewards;
  std::vector<double> follower_rewards;
  int t = 0;
};

// Everything needed to recompute one step's rewards.
struct StepRecord {
  int t = 0;
  std::vector<double> prices;  // after clamping
  Matrix bandwidth;            // after clamping
  std::vector<double> arrival_rates;
  std::vector<double> service_rates;
  std::vector<double> leader_rewards;
  std::vector<double> follower_rewards;
  std::vector<double> follower_penalties;
  bool clamped = false;
};

struct StepResult {
  std::vector<double> leader_rewards;
  std::vector<double> follower_rewards;
  bool done = false;
  bool clamped = false;
};

// Per-agent transition as stored by the trainer. Agents are ordered leaders
// first, then followers.
struct TransitionRecord {
  std::size_t agent = 0;
  std::vector<double> observation;
  std::vector<double> action;  // raw Gaussian sample (pre-clamp)
  double log_prob = 0.0;
  double value = 0.0;
  double extrinsic = 0.0;
  double intrinsic = 0.0;
  double js_incentive = 0.0;
  double hybrid = 0.0;
  std::vector<double> next_observation;
  bool done = false;
};

class StackelbergEnv {
 public:
  StackelbergEnv(GameInstance game, EnvConfig config);

  // Draws the L-round warm-up history uniformly from the action boxes and
  // resets lambda, mu to the profile values.
  void reset(std::uint64_t seed);

  // Out-of-box actions are clamped and flagged. Throws DimensionError.
  StepResult step(std::span<const double> prices, const Matrix& bandwidth);

  std::size_t num_leaders() const { return game_.num_rsus(); }
  std::size_t num_followers() const { return game_.num_avs(); }
  std::size_t num_agents() const { return num_leaders() + num_followers(); }

  std::size_t leader_observation_size() const;
  std::size_t follower_observation_size() const;
  std::vector<double> leader_observation(std::size_t rsu) const;
  // current_prices is appended (normalised) when the config flag is on and
  // must then have length R.
  std::vector<double> follower_observation(
      std::size_t av, std::span<const double> current_prices = {}) const;

  // Action normalisation: unit u in [-1, 1] maps affinely onto the box.
  double price_from_unit(std::size_t rsu, double u) const;
  double unit_from_price(std::size_t rsu, double p) const;
  double bandwidth_from_unit(double u) const;
  double unit_from_bandwidth(double b) const;

  // Normalised last joint action plus current lambda, mu: the state the
  // exploration module conditions on.
  std::vector<double> global_state_features() const;
  std::size_t global_state_size() const;
  // Normalised joint action (P then B row-major).
  std::vector<double> joint_action_features(std::span<const double> prices,
                                            const Matrix& bandwidth) const;
  std::size_t joint_action_size() const;

  const GameInstance& game() const { return game_; }
  const EnvConfig& config() const { return config_; }
  const GlobalState& state() const { return state_; }
  const std::vector<StepRecord>& log() const { return log_; }
  bool done() const { return state_.t >= config_.episode_length; }

 private:
  void push_history(const std::vector<double>& prices, const Matrix& b);
  double normalized_rate(double value, double base, double jitter) const;

  GameInstance game_;
  EnvConfig config_;
  GlobalState state_;
  std::deque<std::vector<double>> history_;  // normalised (B, P) rows
  std::vector<StepRecord> log_;
  std::mt19937_64 rng_;
};

// Rewards of one logged step recomputed from the game definition.
void recompute_rewards(const StepRecord& record, const GameInstance& game,
                       const EnvConfig& config,
                       std::vector<double>& leader_rewards,
                       std::vector<double>& follower_rewards);

}  // namespace tinyma

#endif  // TINYMA_POMDP_ENV_H_
