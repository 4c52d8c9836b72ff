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

#include "tinyma/mappo_trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tinyma/equilibrium_solver.h"
#include "tinyma/errors.h"

namespace tinyma {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (stream * 0x632be59bd9b4e019ULL)) +
                    index);
}

enum Stream : std::uint64_t {
  kInitStream = 1,
  kPolicyStream = 2,
  kEnvStream = 3,
  kCvaeStream = 4,
  kBaselineStream = 5,
};

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw DivergenceError(what + " is not finite");
}

double critic_loss_indexed(MaskedDenseNetwork& critic, const AgentBatch& batch,
                           std::span<const double> targets,
                           std::span<const std::size_t> indices,
                           std::span<double> grad) {
  const double n = static_cast<double>(indices.size());
  double loss = 0.0;
  for (std::size_t idx : indices) {
    const double v = critic.forward(batch[idx].observation)[0];
    const double err = targets[idx] - v;
    loss += err * err / n;
    if (!grad.empty()) {
      const double g = -2.0 * err / n;
      critic.backward(std::span<const double>(&g, 1), grad);
    }
  }
  return loss;
}

std::vector<double> td_targets(const MaskedDenseNetwork& critic,
                               const AgentBatch& batch, double gamma,
                               bool use_hybrid) {
  std::vector<double> targets(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& tr = batch[k];
    const double r = use_hybrid ? tr.hybrid : tr.extrinsic;
    const double next =
        tr.done ? 0.0 : critic.predict(tr.next_observation)[0];
    targets[k] = r + gamma * next;
  }
  return targets;
}

EpisodeMetrics summarize_episode(int episode, const StackelbergEnv& env) {
  EpisodeMetrics m;
  m.episode = episode;
  const std::size_t r = env.num_leaders();
  const std::size_t v = env.num_followers();
  m.agent_rewards.assign(r + v, 0.0);
  m.mean_prices.assign(r, 0.0);
  const auto& log = env.log();
  const double n = static_cast<double>(log.size());
  for (const StepRecord& rec : log) {
    double welfare = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      m.agent_rewards[j] += rec.leader_rewards[j] / n;
      m.mean_prices[j] += rec.prices[j] / n;
      welfare += rec.leader_rewards[j];
    }
    for (std::size_t i = 0; i < v; ++i) {
      m.agent_rewards[r + i] += rec.follower_rewards[i] / n;
      welfare += rec.follower_rewards[i];
    }
    m.social_welfare += welfare / n;
  }
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> masked_set(
    const MaskedDenseNetwork& net) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t h = 0; h < net.num_hidden_layers(); ++h) {
    for (std::size_t n = 0; n < net.sizes()[h + 1]; ++n) {
      if (!net.alive(h, n)) out.emplace_back(h, n);
    }
  }
  return out;
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kTinyMaIeiPpo:
      return "tinyma-iei-ppo";
    case Algorithm::kMaIeiPpo:
      return "ma-iei-ppo";
    case Algorithm::kMappo:
      return "mappo";
    case Algorithm::kGreedy:
      return "greedy";
    case Algorithm::kRandom:
      return "random";
  }
  return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
  for (Algorithm a : {Algorithm::kTinyMaIeiPpo, Algorithm::kMaIeiPpo,
                      Algorithm::kMappo, Algorithm::kGreedy,
                      Algorithm::kRandom}) {
    if (algorithm_name(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected tinyma-iei-ppo, ma-iei-ppo, mappo, greedy "
                    "or random)");
}

bool is_learning(Algorithm a) {
  return a == Algorithm::kTinyMaIeiPpo || a == Algorithm::kMaIeiPpo ||
         a == Algorithm::kMappo;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train: ") + what);
  };
  require(gamma > 0 && gamma < 1, "gamma must be in (0, 1)");
  require(clip > 0 && clip < 1, "clip must be in (0, 1)");
  require(actor_lr > 0 && critic_lr > 0, "learning rates must be > 0");
  require(cvae.learning_rate > 0, "cvae learning rate must be > 0");
  require(leader_lr_scale > 0, "leader_lr_scale must be > 0");
  require(anneal_rate > 0, "anneal_rate must be > 0");
  require(hybrid_weight >= 0, "hybrid_weight must be >= 0");
  require(value_weight > 0, "value_weight must be > 0");
  require(entropy_coef >= 0, "entropy_coef must be >= 0");
  require(reg_weight >= 0, "reg_weight must be >= 0");
  require(minibatch_size >= 1, "minibatch_size must be >= 1");
  require(rollout_length >= 1, "rollout_length must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(episodes >= 0, "episodes must be >= 0");
  require(train_interval >= 1, "train_interval must be >= 1");
  require(!hidden.empty(), "hidden must list at least one layer");
  require(cvae.latent_dim >= 1 && !cvae.hidden.empty(),
          "cvae needs a latent dimension and hidden layers");
  require(cvae.js_samples >= 1, "cvae js_samples must be >= 1");
  require(cvae.batch_size >= 1, "cvae batch_size must be >= 1");
}

double anneal_c3(double step, double alpha, double offset) {
  const double x = alpha * (step - offset);
  if (x > 700) return 0.0;
  return std::numbers::e / (1.0 + std::exp(x));
}

double clip_ratio(double f, double eps) {
  return std::clamp(f, 1.0 - eps, 1.0 + eps);
}

double hybrid_reward(double extrinsic, double intrinsic, double c1) {
  return extrinsic + c1 * intrinsic;
}

AgentLearner::AgentLearner(Role role, std::size_t index, std::size_t obs_dim,
                           std::size_t action_dim, const TrainConfig& config,
                           const PruneConfig& prune, std::mt19937_64& rng)
    : role(role), index(index) {
  std::vector<std::size_t> actor_sizes{obs_dim};
  actor_sizes.insert(actor_sizes.end(), config.hidden.begin(),
                     config.hidden.end());
  std::vector<std::size_t> critic_sizes = actor_sizes;
  actor_sizes.push_back(action_dim);
  critic_sizes.push_back(1);
  actor = MaskedDenseNetwork(actor_sizes, Activation::kTanh, rng, 0.01);
  critic = MaskedDenseNetwork(critic_sizes, Activation::kTanh, rng, 1.0);
  log_std.assign(action_dim, config.init_log_std);
  const double lr = role == Role::kLeader
                        ? config.actor_lr * config.leader_lr_scale
                        : config.actor_lr;
  actor_opt = Adam(actor.num_params(), lr);
  critic_opt = Adam(critic.num_params(), config.critic_lr);
  log_std_opt = Adam(action_dim, lr);
  ledger = ImportanceLedger(actor, prune.window);
}

double AgentLearner::value(std::span<const double> obs) const {
  return critic.predict(obs)[0];
}

std::vector<double> AgentLearner::mean_action(
    std::span<const double> obs) const {
  return actor.predict(obs);
}

void AgentLearner::save(std::ostream& out) const {
  out << "learner " << (role == Role::kLeader ? "leader" : "follower") << ' '
      << index << ' ' << hex(last_js) << '\n';
  actor.save(out);
  critic.save(out);
  out << "log_std " << log_std.size();
  for (double s : log_std) out << ' ' << hex(s);
  out << '\n';
  actor_opt.save(out);
  critic_opt.save(out);
  log_std_opt.save(out);
}

AgentLearner AgentLearner::load(std::istream& in) {
  AgentLearner l;
  std::string tok, role, last;
  in >> tok >> role >> l.index >> last;
  if (tok != "learner") throw ConfigError("checkpoint: expected learner");
  l.role = role == "leader" ? Role::kLeader : Role::kFollower;
  l.last_js = std::strtod(last.c_str(), nullptr);
  l.actor = MaskedDenseNetwork::load(in);
  l.critic = MaskedDenseNetwork::load(in);
  std::size_t n = 0;
  in >> tok >> n;
  if (tok != "log_std") throw ConfigError("checkpoint: expected log_std");
  l.log_std.resize(n);
  for (double& s : l.log_std) {
    in >> tok;
    s = std::strtod(tok.c_str(), nullptr);
  }
  l.actor_opt = Adam::load(in);
  l.critic_opt = Adam::load(in);
  l.log_std_opt = Adam::load(in);
  if (!in) throw ConfigError("checkpoint: truncated learner");
  return l;
}

void save_learners(const std::vector<AgentLearner>& learners,
                   std::ostream& out) {
  out << "tinyma-learners 1 " << learners.size() << '\n';
  for (const auto& l : learners) l.save(out);
}

std::vector<AgentLearner> load_learners(std::istream& in) {
  std::string tok;
  int version = 0;
  std::size_t n = 0;
  in >> tok >> version >> n;
  if (tok != "tinyma-learners" || version != 1) {
    throw ConfigError("checkpoint: not a learner checkpoint");
  }
  std::vector<AgentLearner> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(AgentLearner::load(in));
  return out;
}

double critic_loss(MaskedDenseNetwork& critic, const AgentBatch& batch,
                   double gamma, std::span<double> grad) {
  const std::vector<double> targets = td_targets(critic, batch, gamma, false);
  return critic_loss_with_targets(critic, batch, targets, grad);
}

double critic_loss_with_targets(MaskedDenseNetwork& critic,
                                const AgentBatch& batch,
                                std::span<const double> targets,
                                std::span<double> grad) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  return critic_loss_indexed(critic, batch, targets, idx, grad);
}

std::vector<double> advantage_estimates(const AgentBatch& batch,
                                        double gamma) {
  std::vector<double> adv(batch.size());
  double running = 0.0;
  for (std::size_t k = batch.size(); k-- > 0;) {
    if (batch[k].done) running = 0.0;
    running = batch[k].hybrid + gamma * running;
    adv[k] = running - batch[k].value;
  }
  return adv;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.size() < 2) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

PolicyObjectiveTerms policy_objective(
    AgentLearner& learner, const AgentBatch& batch,
    std::span<const double> advantages, std::span<const std::size_t> indices,
    double clip, double c3, double beta, double reg_weight,
    double reg_current_weight, std::span<double> actor_grad,
    std::span<double> log_std_grad) {
  PolicyObjectiveTerms terms;
  const double n = static_cast<double>(indices.size());
  const std::size_t dims = learner.log_std.size();
  std::vector<double> sd(dims);
  for (std::size_t d = 0; d < dims; ++d) sd[d] = std::exp(learner.log_std[d]);
  const bool want_grad = !actor_grad.empty();
  std::vector<double> gmean(dims);
  double intrinsic = 0.0;
  for (std::size_t idx : indices) {
    const TransitionRecord& tr = batch[idx];
    const auto mean = learner.actor.forward(tr.observation);
    const double logp = gaussian_log_prob(mean, learner.log_std, tr.action);
    const double log_ratio = logp - tr.log_prob;
    const double clamped = std::clamp(log_ratio, -20.0, 20.0);
    const double ratio = std::exp(clamped);
    const double a = advantages[idx];
    const double s1 = ratio * a;
    const double s2 = clip_ratio(ratio, clip) * a;
    terms.surrogate += std::min(s1, s2) / n;
    intrinsic += tr.intrinsic / n;
    if (want_grad && s1 <= s2 && clamped == log_ratio) {
      // d(-surrogate)/d logp = -ratio * A / n
      const double g = -ratio * a / n;
      for (std::size_t d = 0; d < dims; ++d) {
        const double z = (tr.action[d] - mean[d]) / sd[d];
        gmean[d] = g * z / sd[d];
        if (!log_std_grad.empty()) log_std_grad[d] += g * (z * z - 1.0);
      }
      learner.actor.backward(gmean, actor_grad);
    }
  }
  terms.entropy_bonus = c3 * beta * gaussian_entropy(learner.log_std);
  terms.intrinsic_bonus = c3 * intrinsic;
  if (!log_std_grad.empty()) {
    for (std::size_t d = 0; d < dims; ++d) log_std_grad[d] -= c3 * beta;
  }
  if (reg_weight > 0) {
    terms.regularizer = importance_regularizer(learner.actor, reg_weight,
                                               reg_current_weight, actor_grad);
  }
  return terms;
}

Trainer::Trainer(GameInstance game, EnvConfig env, TrainConfig train,
                 PruneConfig prune)
    : game_(std::move(game)), env_(env), train_(train), prune_(prune) {
  game_.validate();
  env_.validate(game_);
  train_.validate();
  prune_.validate();
}

long Trainer::planned_updates() const {
  const long steps =
      static_cast<long>(train_.episodes) * env_.episode_length;
  // Updates happen at the first episode boundary at or past each interval.
  const long per_update =
      ((train_.train_interval + env_.episode_length - 1) /
       env_.episode_length) *
      env_.episode_length;
  return steps / per_update;
}

TrainResult Trainer::train(const TrainOptions& options) {
  const auto wall_start = std::chrono::steady_clock::now();
  TrainResult result;
  StackelbergEnv env(game_, env_);
  const std::size_t r = env.num_leaders();
  const std::size_t v = env.num_followers();
  const std::size_t agents = r + v;
  const Algorithm algo = options.algorithm;

  if (!is_learning(algo)) {
    BaselinePolicy policy(algo, game_, env_,
                          stream_seed(options.seed, kBaselineStream));
    std::vector<double> prices;
    Matrix bandwidth;
    for (int ep = 0; ep < train_.episodes; ++ep) {
      env.reset(stream_seed(options.seed, kEnvStream, ep));
      while (!env.done()) {
        policy.act(env, prices, bandwidth);
        env.step(prices, bandwidth);
      }
      EpisodeMetrics m = summarize_episode(ep, env);
      if (options.keep_transition_log) {
        result.step_log.insert(result.step_log.end(), env.log().begin(),
                               env.log().end());
      }
      result.metrics.push_back(m);
      if (options.on_episode && !options.on_episode(m)) break;
    }
    result.wall_seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - wall_start)
                              .count();
    return result;
  }

  const bool use_cvae =
      algo == Algorithm::kTinyMaIeiPpo || algo == Algorithm::kMaIeiPpo;
  const bool pruning = algo == Algorithm::kTinyMaIeiPpo && prune_.enabled;
  const double c1 = use_cvae ? train_.hybrid_weight : 0.0;
  const double reg_weight = pruning ? train_.reg_weight : 0.0;

  std::mt19937_64 init_rng(stream_seed(options.seed, kInitStream));
  std::mt19937_64 policy_rng(stream_seed(options.seed, kPolicyStream));
  std::mt19937_64 cvae_rng(stream_seed(options.seed, kCvaeStream));

  std::vector<AgentLearner> learners;
  for (std::size_t j = 0; j < r; ++j) {
    learners.emplace_back(Role::kLeader, j, env.leader_observation_size(), 1,
                          train_, prune_, init_rng);
  }
  for (std::size_t i = 0; i < v; ++i) {
    learners.emplace_back(Role::kFollower, i, env.follower_observation_size(),
                          r, train_, prune_, init_rng);
  }
  ActionSlots slots;
  for (std::size_t j = 0; j < r; ++j) slots.emplace_back(j, 1);
  for (std::size_t i = 0; i < v; ++i) slots.emplace_back(r + i * r, r);
  std::optional<CvaeModule> cvae;
  if (use_cvae) {
    std::mt19937_64 cvae_init(stream_seed(options.seed, kCvaeStream, 1));
    cvae.emplace(env.global_state_size(), slots, train_.cvae, cvae_init);
  }
  result.mask_snapshots.resize(agents);

  const double n0 = train_.anneal_offset >= 0
                        ? train_.anneal_offset
                        : 0.5 * static_cast<double>(planned_updates());
  std::vector<AgentBatch> buffers(agents);
  std::deque<CvaeSample> replay;
  long updates = 0;
  long steps_since_update = 0;
  long global_step = 0;
  std::vector<AgentLearner> last_good = learners;

  auto write_checkpoint = [&](const std::vector<AgentLearner>& ls,
                              const std::string& name) {
    if (options.checkpoint_dir.empty()) return;
    std::ofstream out(options.checkpoint_dir + "/" + name);
    save_learners(ls, out);
  };

  auto run_update = [&](int episode) {
    ++updates;
    const double c3 = anneal_c3(static_cast<double>(updates),
                                train_.anneal_rate, n0);
    result.c3_values.push_back(c3);
    result.c3_steps.push_back(updates);
    UpdateLogEntry ulog;
    ulog.update = updates;
    ulog.c3 = c3;

    if (cvae && !replay.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, replay.size() - 1);
      const std::size_t bs = std::min(train_.cvae.batch_size, replay.size());
      for (std::size_t k = 0; k < agents; ++k) {
        std::vector<CvaeSample> batch;
        batch.reserve(bs);
        for (std::size_t b = 0; b < bs; ++b) batch.push_back(replay[pick(cvae_rng)]);
        const double loss =
            cvae->train_step(batch, k, train_.cvae.learning_rate, cvae_rng);
        ulog.cvae_loss.push_back(loss);
      }
    }

    for (std::size_t k = 0; k < agents; ++k) {
      AgentLearner& learner = learners[k];
      const AgentBatch& batch = buffers[k];
      if (batch.empty()) continue;
      std::vector<double> adv = advantage_estimates(batch, train_.gamma);
      normalize_advantages(adv);
      const std::vector<double> targets =
          td_targets(learner.critic, batch, train_.gamma, true);
      const double reg_current =
          learner.ledger.current_weight(prune_.decay,
                                        prune_.literal_decay_exponent);
      std::vector<std::size_t> order(batch.size());
      std::iota(order.begin(), order.end(), 0);
      std::vector<double> actor_grad(learner.actor.num_params());
      std::vector<double> critic_grad(learner.critic.num_params());
      std::vector<double> log_std_grad(learner.log_std.size());
      double objective = 0.0;
      double closs = 0.0;
      for (int epoch = 0; epoch < train_.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), policy_rng);
        for (std::size_t start = 0; start < order.size();
             start += train_.minibatch_size) {
          const std::size_t end =
              std::min(order.size(), start + train_.minibatch_size);
          std::span<const std::size_t> mb(order.data() + start, end - start);

          std::fill(actor_grad.begin(), actor_grad.end(), 0.0);
          std::fill(log_std_grad.begin(), log_std_grad.end(), 0.0);
          const PolicyObjectiveTerms terms = policy_objective(
              learner, batch, adv, mb, train_.clip, c3, train_.entropy_coef,
              reg_weight, reg_current, actor_grad, log_std_grad);
          objective = terms.total();
          check_finite(objective, "policy objective of agent " +
                                      std::to_string(k));
          clip_global_norm(actor_grad, train_.max_grad_norm);
          learner.actor_opt.step(learner.actor.params(), actor_grad);
          learner.log_std_opt.step(learner.log_std, log_std_grad);
          for (double& s : learner.log_std) {
            s = std::max(s, train_.min_log_std);
          }

          std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
          closs = critic_loss_indexed(learner.critic, batch, targets, mb,
                                      critic_grad);
          check_finite(closs, "critic loss of agent " + std::to_string(k));
          for (double& g : critic_grad) g *= train_.value_weight;
          clip_global_norm(critic_grad, train_.max_grad_norm);
          learner.critic_opt.step(learner.critic.params(), critic_grad);
        }
      }
      ulog.actor_objective.push_back(objective);
      ulog.critic_loss.push_back(closs);

      if (!pruning) continue;
      learner.ledger.push(learner.actor);
      if (!prune_.is_prune_step(updates)) continue;
      double js = 0.0;
      for (const auto& tr : batch) js += tr.js_incentive;
      js /= static_cast<double>(batch.size());
      const double js_prev = learner.last_js < 0 ? js : learner.last_js;
      learner.last_js = js;
      const auto [p1, p2] = schedule_rates(updates, prune_);
      const double phi =
          prune_.use_incentive ? prune_.incentive_sensitivity : 0.0;
      const double p_t = adaptive_rate(p1, p2, js, js_prev, phi);
      const LayerScores scores = learner.ledger.decayed(
          learner.actor, prune_.decay, prune_.literal_decay_exponent);
      const double psi = prune_threshold(scores, p_t, prune_.mode);
      const PruneReport report =
          update_masks(learner.actor, scores, psi, prune_.mode,
                       prune_.min_neurons_per_layer);
      result.rate_pairs.emplace_back(p_t, p1);
      result.mask_snapshots[k].push_back(masked_set(learner.actor));
      for (std::size_t h = 0; h < learner.actor.num_hidden_layers(); ++h) {
        PruneLogEntry e;
        e.update = updates;
        e.episode = episode;
        e.agent = k;
        e.layer = h;
        e.neurons_pruned = static_cast<std::size_t>(std::count_if(
            report.pruned.begin(), report.pruned.end(),
            [h](const auto& p) { return p.first == h; }));
        e.sparsity = report.sparsity;
        e.rate = p_t;
        e.p_t1 = p1;
        e.p_t2 = p2;
        e.psi = psi;
        e.js = js;
        e.js_prev = js_prev;
        e.has_incentive = cvae.has_value();
        result.prune_log.push_back(e);
      }
    }
    result.update_log.push_back(std::move(ulog));
    for (auto& b : buffers) b.clear();
  };

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> prices(r);
  Matrix bandwidth(v, r);
  std::vector<std::vector<double>> obs(agents), actions(agents);
  std::vector<double> log_probs(agents), values(agents);

  try {
    for (int ep = 0; ep < train_.episodes; ++ep) {
      env.reset(stream_seed(options.seed, kEnvStream, ep));
      std::vector<std::size_t> first_index(agents);
      for (std::size_t k = 0; k < agents; ++k) {
        first_index[k] = buffers[k].size();
      }
      double incentive_sum = 0.0;
      double js_sum = 0.0;
      std::size_t incentive_count = 0;
      while (!env.done()) {
        const std::vector<double> s = cvae ? env.global_state_features()
                                           : std::vector<double>{};
        auto act = [&](std::size_t k) {
          const AgentLearner& l = learners[k];
          const auto mean = l.actor.predict(obs[k]);
          actions[k].resize(mean.size());
          for (std::size_t d = 0; d < mean.size(); ++d) {
            actions[k][d] = mean[d] + std::exp(l.log_std[d]) * normal(policy_rng);
          }
          log_probs[k] = gaussian_log_prob(mean, l.log_std, actions[k]);
          values[k] = l.value(obs[k]);
        };
        for (std::size_t j = 0; j < r; ++j) {
          obs[j] = env.leader_observation(j);
          act(j);
          prices[j] =
              env.price_from_unit(j, std::clamp(actions[j][0], -1.0, 1.0));
        }
        for (std::size_t i = 0; i < v; ++i) {
          const std::size_t k = r + i;
          obs[k] = env.follower_observation(i, prices);
          act(k);
          for (std::size_t j = 0; j < r; ++j) {
            bandwidth(i, j) =
                env.bandwidth_from_unit(std::clamp(actions[k][j], -1.0, 1.0));
          }
        }
        const std::vector<double> a_joint =
            cvae ? env.joint_action_features(prices, bandwidth)
                 : std::vector<double>{};
        const StepResult step = env.step(prices, bandwidth);
        std::vector<CvaeIncentive> inc(agents);
        if (cvae) {
          const std::vector<double> s_next = env.global_state_features();
          inc = cvae->incentives(s, a_joint, cvae_rng);
          replay.push_back(CvaeSample{s, a_joint, s_next});
          while (replay.size() > train_.rollout_length) replay.pop_front();
        }
        for (std::size_t k = 0; k < agents; ++k) {
          TransitionRecord tr;
          tr.agent = k;
          tr.observation = obs[k];
          tr.action = actions[k];
          tr.log_prob = log_probs[k];
          tr.value = values[k];
          tr.extrinsic = k < r ? step.leader_rewards[k]
                               : step.follower_rewards[k - r];
          tr.intrinsic = inc[k].kl;
          tr.js_incentive = inc[k].js;
          tr.hybrid = hybrid_reward(tr.extrinsic, tr.intrinsic, c1);
          tr.done = step.done;
          tr.next_observation = obs[k];  // replaced by the next step's obs
          if (buffers[k].size() > first_index[k]) {
            buffers[k].back().next_observation = obs[k];
          }
          if (cvae) {
            result.kl_values.push_back(tr.intrinsic);
            result.js_values.push_back(tr.js_incentive);
            incentive_sum += tr.intrinsic;
            js_sum += tr.js_incentive;
            ++incentive_count;
          }
          if (options.trace) {
            *options.trace << global_step << ',' << k;
            for (double a : tr.action) *options.trace << ',' << a;
            *options.trace << ',' << tr.extrinsic << ',' << tr.intrinsic
                           << ',' << tr.hybrid << '\n';
          }
          buffers[k].push_back(std::move(tr));
        }
        ++global_step;
      }
      // The first transition's next observation was filled by the second
      // step; the previous-step fill above shifts observations by one.
      for (std::size_t k = 0; k < agents; ++k) {
        AgentBatch& b = buffers[k];
        for (std::size_t t = first_index[k]; t + 1 < b.size(); ++t) {
          b[t].next_observation = b[t + 1].observation;
        }
      }
      if (options.keep_transition_log) {
        result.step_log.insert(result.step_log.end(), env.log().begin(),
                               env.log().end());
        for (std::size_t k = 0; k < agents; ++k) {
          result.transitions.insert(result.transitions.end(),
                                    buffers[k].begin() + first_index[k],
                                    buffers[k].end());
        }
      }
      steps_since_update += env_.episode_length;
      if (steps_since_update >= train_.train_interval) {
        run_update(ep);
        steps_since_update = 0;
        last_good = learners;
      }

      EpisodeMetrics m = summarize_episode(ep, env);
      m.c3 = anneal_c3(static_cast<double>(updates), train_.anneal_rate, n0);
      if (incentive_count > 0) {
        m.mean_incentive = incentive_sum / static_cast<double>(incentive_count);
        m.mean_js = js_sum / static_cast<double>(incentive_count);
      }
      double sp = 0.0;
      for (const auto& l : learners) sp += l.actor.sparsity();
      m.sparsity = sp / static_cast<double>(agents);
      m.updates = updates;
      result.metrics.push_back(m);
      if (train_.checkpoint_every > 0 && (ep + 1) % train_.checkpoint_every == 0) {
        write_checkpoint(learners, "checkpoint_ep" + std::to_string(ep + 1) +
                                       ".txt");
      }
      if (options.on_episode && !options.on_episode(m)) break;
    }
  } catch (const DivergenceError&) {
    write_checkpoint(last_good, "checkpoint_last_good.txt");
    throw;
  }
  result.learners = std::move(learners);
  result.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - wall_start)
                            .count();
  return result;
}

EvalResult evaluate_learners(const GameInstance& game, const EnvConfig& env_cfg,
                             std::vector<AgentLearner>& learners,
                             int episodes, std::uint64_t seed) {
  StackelbergEnv env(game, env_cfg);
  const std::size_t r = env.num_leaders();
  const std::size_t v = env.num_followers();
  if (learners.size() != r + v) {
    throw DimensionError("evaluate: expected " + std::to_string(r + v) +
                         " learners, got " + std::to_string(learners.size()));
  }
  for (std::size_t k = 0; k < learners.size(); ++k) {
    const auto& l = learners[k];
    const std::size_t want_in = k < r ? env.leader_observation_size()
                                      : env.follower_observation_size();
    const std::size_t want_out = k < r ? 1 : r;
    if (l.actor.input_size() != want_in || l.actor.output_size() != want_out ||
        l.critic.input_size() != want_in) {
      throw DimensionError("evaluate: network of agent " + std::to_string(k) +
                           " (" + (k < r ? "leader" : "follower") +
                           ") does not match the configured dimensions");
    }
  }
  EvalResult out;
  out.mean_agent_rewards.assign(r + v, 0.0);
  std::vector<double> prices(r);
  Matrix bandwidth(v, r);
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(stream_seed(seed, kEnvStream, ep));
    while (!env.done()) {
      for (std::size_t j = 0; j < r; ++j) {
        const auto mean = learners[j].mean_action(env.leader_observation(j));
        prices[j] = env.price_from_unit(j, std::clamp(mean[0], -1.0, 1.0));
      }
      for (std::size_t i = 0; i < v; ++i) {
        const auto mean =
            learners[r + i].mean_action(env.follower_observation(i, prices));
        for (std::size_t j = 0; j < r; ++j) {
          bandwidth(i, j) =
              env.bandwidth_from_unit(std::clamp(mean[j], -1.0, 1.0));
        }
      }
      env.step(prices, bandwidth);
    }
    out.episodes.push_back(summarize_episode(ep, env));
  }
  for (const auto& m : out.episodes) {
    for (std::size_t k = 0; k < r + v; ++k) {
      out.mean_agent_rewards[k] += m.agent_rewards[k] / episodes;
    }
    out.mean_social_welfare += m.social_welfare / episodes;
  }
  return out;
}

BaselinePolicy::BaselinePolicy(Algorithm kind, const GameInstance& game,
                               const EnvConfig& env, std::uint64_t seed)
    : kind_(kind), game_(&game), env_(env), rng_(seed) {
  if (is_learning(kind)) {
    throw ConfigError("baseline policy: " + algorithm_name(kind) +
                      " is not a baseline");
  }
}

void BaselinePolicy::act(const StackelbergEnv& env,
                         std::vector<double>& prices, Matrix& bandwidth) {
  const std::size_t r = game_->num_rsus();
  const std::size_t v = game_->num_avs();
  prices.assign(r, 0.0);
  bandwidth = Matrix(v, r);
  if (kind_ == Algorithm::kRandom) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t j = 0; j < r; ++j) {
      const auto& rsu = game_->rsus[j];
      prices[j] = rsu.unit_cost + (rsu.price_cap - rsu.unit_cost) * unit(rng_);
    }
    for (double& b : bandwidth.data()) b = env_.bandwidth_cap * unit(rng_);
    return;
  }
  const GlobalState& state = env.state();
  if (state.prices != cached_prices_in_) {
    cached_prices_in_ = state.prices;
    cached_prices_out_.resize(r);
    for (std::size_t j = 0; j < r; ++j) {
      cached_prices_out_[j] =
          leader_best_response(j, state.prices, *game_).price;
    }
  }
  prices = cached_prices_out_;
  StrategyProfile last;
  last.prices = state.prices;
  last.bandwidth = state.bandwidth;
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double b = env_.bandwidth_cap;
      try {
        b = follower_best_response(i, j, last, *game_);
      } catch (const DomainError&) {
        // Unbounded response: buy as much as the action box allows.
      }
      bandwidth(i, j) = std::clamp(b, 0.0, env_.bandwidth_cap);
    }
  }
}

EvalResult evaluate_baseline(Algorithm kind, const GameInstance& game,
                             const EnvConfig& env_cfg, int episodes,
                             std::uint64_t seed) {
  StackelbergEnv env(game, env_cfg);
  BaselinePolicy policy(kind, game, env_cfg,
                        stream_seed(seed, kBaselineStream));
  EvalResult out;
  const std::size_t agents = env.num_agents();
  out.mean_agent_rewards.assign(agents, 0.0);
  std::vector<double> prices;
  Matrix bandwidth;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(stream_seed(seed, kEnvStream, ep));
    while (!env.done()) {
      policy.act(env, prices, bandwidth);
      env.step(prices, bandwidth);
    }
    out.episodes.push_back(summarize_episode(ep, env));
  }
  for (const auto& m : out.episodes) {
    for (std::size_t k = 0; k < agents; ++k) {
      out.mean_agent_rewards[k] += m.agent_rewards[k] / episodes;
    }
    out.mean_social_welfare += m.social_welfare / episodes;
  }
  return out;
}

}  // namespace tinyma
