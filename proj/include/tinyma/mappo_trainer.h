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

#ifndef TINYMA_MAPPO_TRAINER_H_
#define TINYMA_MAPPO_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tinyma/dense_net.h"
#include "tinyma/exploration_incentive.h"
#include "tinyma/pomdp_env.h"
#include "tinyma/pruning.h"

namespace tinyma {

enum class Algorithm { kTinyMaIeiPpo, kMaIeiPpo, kMappo, kGreedy, kRandom };

std::string algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);  // throws ConfigError
bool is_learning(Algorithm a);

struct TrainConfig {
  double gamma = 0.99;
  double clip = 0.2;
  double hybrid_weight = 0.1;   // c1
  double value_weight = 0.5;    // c2
  double anneal_rate = 0.01;    // alpha
  double anneal_offset = -1.0;  // N0; negative = half the planned updates
  double entropy_coef = 0.01;   // beta
  double reg_weight = 1e-4;     // lambda_reg
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  // Leader actors learn at actor_lr * leader_lr_scale (two-timescale play:
  // slow leaders against fast followers).
  double leader_lr_scale = 1.0;
  std::size_t rollout_length = 2048;  // replay capacity of the CVAE buffer
  std::size_t minibatch_size = 256;
  int epochs = 4;
  int episodes = 3000;
  int train_interval = 128;  // env steps between updates (episode-aligned)
  double max_grad_norm = 0.5;
  double init_log_std = -0.5;
  double min_log_std = -5.0;
  std::vector<std::size_t> hidden{64, 64};
  CvaeConfig cvae;
  int checkpoint_every = 0;  // episodes; 0 = final only

  void validate() const;  // throws ConfigError
};

// c3 = e / (1 + exp(alpha (N - N0))).
double anneal_c3(double step, double alpha, double offset);
double clip_ratio(double f, double eps);
double hybrid_reward(double extrinsic, double intrinsic, double c1);

enum class Role { kLeader, kFollower };

struct AgentLearner {
  Role role = Role::kLeader;
  std::size_t index = 0;  // rsu or av index
  MaskedDenseNetwork actor;
  MaskedDenseNetwork critic;
  std::vector<double> log_std;
  Adam actor_opt;
  Adam critic_opt;
  Adam log_std_opt;
  ImportanceLedger ledger;
  double last_js = -1.0;  // r'_{t-1}; negative until the first prune step

  AgentLearner() = default;
  AgentLearner(Role role, std::size_t index, std::size_t obs_dim,
               std::size_t action_dim, const TrainConfig& config,
               const PruneConfig& prune, std::mt19937_64& rng);

  double value(std::span<const double> obs) const;
  std::vector<double> mean_action(std::span<const double> obs) const;

  void save(std::ostream& out) const;
  static AgentLearner load(std::istream& in);
};

// One agent's slice of a rollout.
using AgentBatch = std::vector<TransitionRecord>;

// Mean squared TD(0) error with targets r + gamma V(o') (0 bootstrap on
// done); targets are treated as constants. Adds c2-free gradient to grad
// when non-empty.
double critic_loss(MaskedDenseNetwork& critic, const AgentBatch& batch,
                   double gamma, std::span<double> grad = {});
double critic_loss_with_targets(MaskedDenseNetwork& critic,
                                const AgentBatch& batch,
                                std::span<const double> targets,
                                std::span<double> grad = {});

// Discounted return truncated at episode end minus the stored value.
std::vector<double> advantage_estimates(const AgentBatch& batch,
                                        double gamma);
void normalize_advantages(std::vector<double>& adv);

struct PolicyObjectiveTerms {
  double surrogate = 0.0;
  double entropy_bonus = 0.0;    // c3 * H, H = beta * entropy
  double intrinsic_bonus = 0.0;  // c3 * mean intrinsic (no gradient)
  double regularizer = 0.0;      // lambda_reg * sum S (current entry)
  double total() const {
    return surrogate + entropy_bonus + intrinsic_bonus - regularizer;
  }
};

// Objective to maximise for the samples `indices` of the batch. When
// actor_grad / log_std_grad are non-empty they receive the gradient of the
// NEGATED objective (a loss), ready for a minimiser.
PolicyObjectiveTerms policy_objective(
    AgentLearner& learner, const AgentBatch& batch,
    std::span<const double> advantages, std::span<const std::size_t> indices,
    double clip, double c3, double beta, double reg_weight,
    double reg_current_weight, std::span<double> actor_grad = {},
    std::span<double> log_std_grad = {});

struct EpisodeMetrics {
  int episode = 0;
  std::vector<double> agent_rewards;  // mean extrinsic per step, per agent
  double social_welfare = 0.0;        // mean per step of sum of rewards
  double sparsity = 0.0;              // mean actor sparsity
  double c3 = 0.0;
  double mean_incentive = 0.0;  // mean KL surprise over agents and steps
  double mean_js = 0.0;
  std::vector<double> mean_prices;
  long updates = 0;
};

struct PruneLogEntry {
  long update = 0;
  int episode = 0;
  std::size_t agent = 0;
  std::size_t layer = 0;
  std::size_t neurons_pruned = 0;
  double sparsity = 0.0;
  double rate = 0.0;  // p_t
  double p_t1 = 0.0;
  double p_t2 = 0.0;
  double psi = 0.0;
  double js = 0.0;  // r'_t
  double js_prev = 0.0;
  bool has_incentive = false;
};

struct UpdateLogEntry {
  long update = 0;
  double c3 = 0.0;
  std::vector<double> actor_objective;
  std::vector<double> critic_loss;
  std::vector<double> cvae_loss;
};

struct TrainOptions {
  Algorithm algorithm = Algorithm::kTinyMaIeiPpo;
  std::uint64_t seed = 1;
  // Called after every episode; return false to stop early.
  std::function<bool(const EpisodeMetrics&)> on_episode;
  // Per-step trace (step, agent, action, extrinsic, intrinsic, hybrid).
  std::ostream* trace = nullptr;
  // Directory for periodic / last-good checkpoints ("" = none).
  std::string checkpoint_dir;
  bool keep_transition_log = false;
};

struct TrainResult {
  std::vector<EpisodeMetrics> metrics;
  std::vector<PruneLogEntry> prune_log;
  std::vector<UpdateLogEntry> update_log;
  std::vector<AgentLearner> learners;  // empty for baselines
  // Masked-neuron sets after every prune step, per agent (for monotonicity
  // audits): snapshots[agent][k] = sorted list of (layer, neuron).
  std::vector<std::vector<std::vector<std::pair<std::size_t, std::size_t>>>>
      mask_snapshots;
  std::vector<double> js_values;         // every JS incentive computed
  std::vector<double> kl_values;         // every KL incentive computed
  std::vector<double> c3_values;         // c3 at every update
  std::vector<long> c3_steps;            // update index for c3_values
  std::vector<std::pair<double, double>> rate_pairs;  // (p_t, p_t1) per prune
  std::vector<StepRecord> step_log;      // when keep_transition_log
  std::vector<TransitionRecord> transitions;  // when keep_transition_log
  double wall_seconds = 0.0;
};

class Trainer {
 public:
  Trainer(GameInstance game, EnvConfig env, TrainConfig train,
          PruneConfig prune);

  TrainResult train(const TrainOptions& options);

  const GameInstance& game() const { return game_; }
  const EnvConfig& env_config() const { return env_; }
  const TrainConfig& train_config() const { return train_; }
  const PruneConfig& prune_config() const { return prune_; }
  long planned_updates() const;

 private:
  GameInstance game_;
  EnvConfig env_;
  TrainConfig train_;
  PruneConfig prune_;
};

struct EvalResult {
  std::vector<EpisodeMetrics> episodes;
  std::vector<double> mean_agent_rewards;
  double mean_social_welfare = 0.0;
};

// Runs frozen learners at the Gaussian mean (no exploration noise).
EvalResult evaluate_learners(const GameInstance& game, const EnvConfig& env,
                             std::vector<AgentLearner>& learners,
                             int episodes, std::uint64_t seed);

// Greedy / random baselines as step-wise policies.
class BaselinePolicy {
 public:
  BaselinePolicy(Algorithm kind, const GameInstance& game,
                 const EnvConfig& env, std::uint64_t seed);
  // Prices and bandwidth for the next step given the environment state.
  void act(const StackelbergEnv& env, std::vector<double>& prices,
           Matrix& bandwidth);

 private:
  Algorithm kind_;
  const GameInstance* game_;
  EnvConfig env_;
  std::mt19937_64 rng_;
  std::vector<double> cached_prices_in_;
  std::vector<double> cached_prices_out_;
};

EvalResult evaluate_baseline(Algorithm kind, const GameInstance& game,
                             const EnvConfig& env, int episodes,
                             std::uint64_t seed);

void save_learners(const std::vector<AgentLearner>& learners,
                   std::ostream& out);
std::vector<AgentLearner> load_learners(std::istream& in);

}  // namespace tinyma

#endif  // TINYMA_MAPPO_TRAINER_H_
