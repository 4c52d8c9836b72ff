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

// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. `--only 1,3,10` restricts the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tinyma/dense_net.h"
#include "tinyma/equilibrium_solver.h"
#include "tinyma/experiment.h"
#include "tinyma/exploration_incentive.h"
#include "tinyma/game_model.h"
#include "tinyma/mappo_trainer.h"
#include "tinyma/pomdp_env.h"
#include "tinyma/pruning.h"

namespace tinyma {
namespace {

// Tolerances and budgets.
constexpr double kSolveResidual = 1e-8;
constexpr double kSolveSeconds = 10.0;
constexpr double kProbeGain = 1e-6;
constexpr int kProbePoints = 512;
constexpr int kRandomInstances = 50;
constexpr int kGridPoints = 2000;
constexpr double kGradTol = 1e-4;
constexpr double kCvaeGradTol = 1e-3;
constexpr int kSuiteSamples = 1000;
constexpr int kTrainEpisodes = 3000;
constexpr double kReachFraction = 0.90;
constexpr double kStayFraction = 0.85;
constexpr int kWelfareWindow = 50;  // trailing mean over episodes
constexpr double kRunSeconds = 1800.0;
constexpr double kTargetSparsity = 0.85;
constexpr double kSparsityTol = 0.02;
constexpr double kEvalFraction = 0.85;
constexpr int kEvalEpisodes = 20;
constexpr double kScheduleTol = 1e-12;
constexpr double kRowSumTol = 1e-12;
constexpr double kRewardTol = 1e-12;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};
const std::vector<std::size_t> kAxis{2, 3, 4, 5};

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures; the first few messages are kept for the report.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (notes_.size() < 3) notes_.push_back(what);
  }
  void note(const std::string& s) { info_.push_back(s); }
  Outcome outcome() const {
    Outcome o;
    o.pass = failures_ == 0;
    std::ostringstream os;
    os << checks_ << " checks, " << failures_ << " failed";
    for (const auto& s : info_) os << "; " << s;
    for (const auto& s : notes_) os << "; " << s;
    o.detail = os.str();
    return o;
  }

 private:
  long checks_ = 0;
  long failures_ = 0;
  std::vector<std::string> notes_;
  std::vector<std::string> info_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

template <typename F>
double grid_argmax(double lo, double hi, int n, F f) {
  double best = lo;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double x = lo + (hi - lo) * k / (n - 1);
    const double v = f(x);
    if (v > best_value) {
      best_value = v;
      best = x;
    }
  }
  return best;
}

GameInstance random_instance(std::mt19937_64& rng) {
  InstanceSpec spec;
  spec.num_avs = 1 + rng() % 4;
  spec.num_rsus = 2 + rng() % 3;
  spec.seed = rng();
  return build_instance(spec);
}

StrategyProfile random_profile(const GameInstance& g, std::mt19937_64& rng,
                               double max_bw) {
  StrategyProfile s(g.num_avs(), g.num_rsus());
  for (std::size_t j = 0; j < g.num_rsus(); ++j) {
    std::uniform_real_distribution<double> price(g.rsus[j].unit_cost,
                                                 g.rsus[j].price_cap);
    s.prices[j] = price(rng);
  }
  std::uniform_real_distribution<double> bw(0.0, max_bw);
  for (double& b : s.bandwidth.data()) b = bw(rng);
  return s;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Checker c;
  const GameInstance g = build_instance(InstanceSpec());
  StackelbergOptions opt;
  opt.probe_points = kProbePoints;
  const auto start = std::chrono::steady_clock::now();
  const EquilibriumReport rep = solve_stackelberg(g, opt);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  c.expect(rep.residual < kSolveResidual, "residual " + fmt(rep.residual));
  c.expect(secs < kSolveSeconds, "solve took " + fmt(secs) + " s");
  double gain = 0.0;
  for (double x : rep.follower_max_improvement) gain = std::max(gain, x);
  for (double x : rep.leader_max_improvement) gain = std::max(gain, x);
  c.expect(gain <= kProbeGain, "probe gain " + fmt(gain));
  c.note("residual " + fmt(rep.residual) + ", " + fmt(secs) +
         " s, max probe gain " + fmt(gain));
  return c.outcome();
}

Outcome criterion2() {
  Checker c;
  std::mt19937_64 rng(2);
  const FollowerNashOptions inner{1e-13, 20000};
  for (int n = 0; n < kRandomInstances; ++n) {
    const GameInstance g = random_instance(rng);
    const StrategyProfile s = random_profile(g, rng, 5.0);
    // Followers: 1-D grid over [0, 4 * BR + 1] on each (i, j).
    for (std::size_t i = 0; i < g.num_avs(); ++i) {
      for (std::size_t j = 0; j < g.num_rsus(); ++j) {
        const double br = follower_best_response(i, j, s, g);
        const double hi = 4.0 * br + 1.0;
        StrategyProfile t = s;
        const double grid = grid_argmax(0.0, hi, kGridPoints, [&](double b) {
          t.bandwidth(i, j) = b;
          return follower_utility(i, t, g);
        });
        c.expect(std::abs(br - grid) <= hi / (kGridPoints - 1),
                 "follower instance " + std::to_string(n));
      }
    }
    // Leaders: grid over the price box of the composed utility.
    for (std::size_t j = 0; j < g.num_rsus(); ++j) {
      const double lo = g.rsus[j].unit_cost;
      const double hi = g.rsus[j].price_cap;
      const double grid = grid_argmax(lo, hi, kGridPoints, [&](double p) {
        return leader_composed_utility(j, p, s.prices, g, inner);
      });
      const double p = leader_best_response(j, s.prices, g).price;
      c.expect(std::abs(p - grid) <= (hi - lo) / (kGridPoints - 1),
               "leader instance " + std::to_string(n) + " rsu " +
                   std::to_string(j) + ": " + fmt(p) + " vs " + fmt(grid));
    }
  }
  return c.outcome();
}

// Central-difference check of an analytic gradient over a flat parameter
// vector.
void check_flat_gradient(Checker& c, const std::string& name,
                         std::vector<double>& params,
                         const std::vector<double>& analytic,
                         const std::function<double()>& f, double h,
                         double tol, double sign = 1.0) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = f();
    params[k] = saved - h;
    const double down = f();
    params[k] = saved;
    const double fd = sign * (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(fd, analytic[k]));
  }
  c.expect(worst < tol, name + " worst rel err " + fmt(worst));
  c.note(name + " " + fmt(worst));
}

Outcome criterion3() {
  Checker c;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);

  {  // follower_gradient on random instances
    double worst = 0.0;
    for (int n = 0; n < 200; ++n) {
      const GameInstance g = random_instance(rng);
      StrategyProfile s = random_profile(g, rng, 5.0);
      const std::size_t i = rng() % g.num_avs();
      const std::size_t j = rng() % g.num_rsus();
      const double h = 1e-5;
      const double b = s.bandwidth(i, j);
      s.bandwidth(i, j) = b + h;
      const double up = follower_utility(i, s, g);
      s.bandwidth(i, j) = b - h;
      const double down = follower_utility(i, s, g);
      s.bandwidth(i, j) = b;
      worst = std::max(worst, rel_err((up - down) / (2 * h),
                                      follower_gradient(i, j, s, g)));
    }
    c.expect(worst < kGradTol, "follower_gradient worst " + fmt(worst));
    c.note("follower " + fmt(worst));
  }

  {  // masked dense network, linear read-out
    MaskedDenseNetwork net({5, 9, 7, 3}, Activation::kTanh, rng);
    for (double& p : net.params()) p += 0.1 * normal(rng);
    net.set_mask(0, 2, false);
    std::vector<double> x(5), w(3);
    for (double& v : x) v = normal(rng);
    for (double& v : w) v = normal(rng);
    std::vector<double> grad(net.num_params(), 0.0);
    net.forward(x);
    net.backward(w, grad);
    auto f = [&]() {
      const auto y = net.predict(x);
      double s = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) s += w[k] * y[k];
      return s;
    };
    check_flat_gradient(c, "dense", net.params(), grad, f, 1e-5, kGradTol);
  }

  {  // critic loss with fixed targets
    MaskedDenseNetwork critic({3, 6, 5, 1}, Activation::kTanh, rng);
    AgentBatch batch;
    std::vector<double> targets;
    for (int k = 0; k < 8; ++k) {
      TransitionRecord t;
      t.observation = {normal(rng), normal(rng), normal(rng)};
      t.next_observation = {normal(rng), normal(rng), normal(rng)};
      t.hybrid = normal(rng);
      batch.push_back(t);
      targets.push_back(t.hybrid + 0.9 * critic.predict(t.next_observation)[0]);
    }
    std::vector<double> grad(critic.num_params(), 0.0);
    critic_loss_with_targets(critic, batch, targets, grad);
    auto f = [&]() { return critic_loss_with_targets(critic, batch, targets); };
    check_flat_gradient(c, "critic", critic.params(), grad, f, 1e-5, kGradTol);
  }

  {  // clipped surrogate + entropy + regulariser, actor and log-std
    TrainConfig tc;
    tc.hidden = {6, 5};
    AgentLearner l(Role::kFollower, 0, 3, 2, tc, PruneConfig{}, rng);
    for (double& p : l.actor.params()) p *= 3.0;
    AgentBatch batch;
    std::vector<double> adv;
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < 10; ++k) {
      TransitionRecord t;
      t.observation = {normal(rng), normal(rng), normal(rng)};
      const auto mean = l.mean_action(t.observation);
      t.action = gaussian_sample(mean, l.log_std, rng);
      t.log_prob = gaussian_log_prob(mean, l.log_std, t.action) +
                   0.1 * normal(rng);
      t.intrinsic = 0.1 * static_cast<double>(k);
      batch.push_back(t);
      adv.push_back(normal(rng));
      idx.push_back(k);
    }
    std::vector<double> ga(l.actor.num_params(), 0.0);
    std::vector<double> gs(l.log_std.size(), 0.0);
    policy_objective(l, batch, adv, idx, 0.2, 0.7, 0.05, 1e-2, 1.0, ga, gs);
    auto f = [&]() {
      return policy_objective(l, batch, adv, idx, 0.2, 0.7, 0.05, 1e-2, 1.0)
          .total();
    };
    check_flat_gradient(c, "policy", l.actor.params(), ga, f, 1e-6, kGradTol,
                        -1.0);
    check_flat_gradient(c, "log_std", l.log_std, gs, f, 1e-6, kGradTol, -1.0);
  }

  {  // CVAE bound with fixed reparameterisation noise
    CvaeConfig cc;
    cc.latent_dim = 2;
    cc.hidden = {6};
    const ActionSlots slots{{0, 1}, {1, 1}};
    CvaeModule m(2, slots, cc, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<CvaeSample> batch;
    for (int k = 0; k < 4; ++k) {
      CvaeSample s;
      s.state = {u(rng), u(rng)};
      s.action = {u(rng), u(rng)};
      const double sum = s.action[0] + s.action[1];
      s.next_state = {s.state[0] + sum, s.state[1] + sum};
      batch.push_back(s);
    }
    const auto noise = m.draw_noise(batch.size(), rng);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> grad;
      m.loss(batch, k, noise, &grad);
      std::vector<double> flat = m.params();
      auto f = [&]() {
        m.set_params(flat);
        return m.loss(batch, k, noise);
      };
      check_flat_gradient(c, "cvae agent " + std::to_string(k), flat, grad, f,
                          1e-6, kCvaeGradTol);
      m.set_params(flat);
    }
  }
  return c.outcome();
}

Outcome criterion4() {
  Checker c;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Second derivative of the follower utility in its own bandwidth, by a
  // three-point stencil, at sampled points satisfying the price condition.
  int sampled = 0;
  double largest = -std::numeric_limits<double>::infinity();
  while (sampled < kSuiteSamples) {
    const GameInstance g = random_instance(rng);
    const StrategyProfile s = random_profile(g, rng, 5.0);
    if (!price_condition_holds(s.prices, g)) continue;
    const std::size_t i = rng() % g.num_avs();
    const std::size_t j = rng() % g.num_rsus();
    StrategyProfile t = s;
    const double h = 1e-3;
    const double b = std::max(s.bandwidth(i, j), h);
    t.bandwidth(i, j) = b;
    const double mid = follower_utility(i, t, g);
    t.bandwidth(i, j) = b + h;
    const double up = follower_utility(i, t, g);
    t.bandwidth(i, j) = b - h;
    const double down = follower_utility(i, t, g);
    const double d2 = (up - 2.0 * mid + down) / (h * h);
    largest = std::max(largest, d2);
    c.expect(d2 < 0.0, "second derivative " + fmt(d2));
    ++sampled;
  }
  c.note("max d2U/db2 " + fmt(largest));

  // Standard-function properties of the follower best response.
  const GameInstance g = build_instance(InstanceSpec());
  const std::size_t n = g.num_avs() * g.num_rsus();
  const DomainSampler sampler = [n](std::mt19937_64& r) {
    std::uniform_real_distribution<double> d(0.0, 4.0);
    std::vector<double> x(n);
    for (double& v : x) v = d(r);
    return x;
  };
  std::size_t violations = 0;
  std::size_t samples = 0;
  // The equilibrium prices plus random price vectors meeting the condition.
  std::vector<std::vector<double>> price_sets{solve_stackelberg(g).prices};
  while (price_sets.size() < 5) {
    const StrategyProfile s = random_profile(g, rng, 1.0);
    if (price_condition_holds(s.prices, g)) price_sets.push_back(s.prices);
  }
  for (std::size_t k = 0; k < price_sets.size(); ++k) {
    const auto rep =
        standard_function_check(follower_response_map(price_sets[k], g),
                                sampler, kSuiteSamples, 40 + k);
    samples += rep.samples;
    violations += rep.total_violations();
    c.expect(rep.total_violations() == 0,
             rep.witnesses.empty() ? "follower map" : rep.witnesses.front());
  }
  c.note("follower map " + std::to_string(violations) + " violations / " +
         std::to_string(samples) + " samples");
  return c.outcome();
}

// ---------------------------------------------------------------------------
// Training runs shared by criteria 5-9.

struct Runs {
  ExperimentConfig config;
  GameInstance game;
  double se_welfare = 0.0;
  std::vector<TrainResult> pruned;    // tinyma-iei-ppo
  std::vector<TrainResult> unpruned;  // ma-iei-ppo
};

Runs& runs(bool need_unpruned) {
  static Runs r;
  static bool have_pruned = false;
  static bool have_unpruned = false;
  if (!have_pruned) {
    r.config = ExperimentConfig();
    r.config.train.episodes = kTrainEpisodes;
    r.game = build_instance(r.config.instance);
    r.se_welfare = solve_stackelberg(r.game).social_welfare;
    Trainer trainer(r.game, r.config.env, r.config.train, r.config.prune);
    for (std::uint64_t seed : kSeeds) {
      TrainOptions opt;
      opt.algorithm = Algorithm::kTinyMaIeiPpo;
      opt.seed = seed;
      std::cerr << "training tinyma-iei-ppo seed " << seed << "\n";
      r.pruned.push_back(trainer.train(opt));
    }
    have_pruned = true;
  }
  if (need_unpruned && !have_unpruned) {
    Trainer trainer(r.game, r.config.env, r.config.train, r.config.prune);
    for (std::uint64_t seed : kSeeds) {
      TrainOptions opt;
      opt.algorithm = Algorithm::kMaIeiPpo;
      opt.seed = seed;
      std::cerr << "training ma-iei-ppo seed " << seed << "\n";
      r.unpruned.push_back(trainer.train(opt));
    }
    have_unpruned = true;
  }
  return r;
}

Outcome criterion5() {
  Checker c;
  const Runs& r = runs(false);
  const std::size_t episodes = r.pruned.front().metrics.size();
  std::vector<double> mean(episodes, 0.0);
  for (const auto& res : r.pruned) {
    c.expect(res.metrics.size() == episodes, "episode count differs");
    for (std::size_t e = 0; e < episodes; ++e) {
      mean[e] += res.metrics[e].social_welfare / r.pruned.size();
    }
    c.expect(res.wall_seconds < kRunSeconds,
             "run took " + fmt(res.wall_seconds) + " s");
  }
  // Trailing mean over kWelfareWindow episodes.
  std::vector<double> smooth(episodes, 0.0);
  double acc = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    acc += mean[e];
    if (e >= kWelfareWindow) acc -= mean[e - kWelfareWindow];
    smooth[e] = acc / static_cast<double>(std::min<std::size_t>(e + 1, kWelfareWindow));
  }
  const double reach = kReachFraction * r.se_welfare;
  const double stay = kStayFraction * r.se_welfare;
  std::size_t first = episodes;
  for (std::size_t e = kWelfareWindow - 1; e < episodes; ++e) {
    if (smooth[e] >= reach) {
      first = e;
      break;
    }
  }
  c.expect(first < episodes, "never reached " + fmt(reach));
  double low = std::numeric_limits<double>::infinity();
  for (std::size_t e = first; e < episodes; ++e) low = std::min(low, smooth[e]);
  if (first < episodes) {
    c.expect(low >= stay, "dropped to " + fmt(low) + " < " + fmt(stay));
  }
  double slowest = 0.0;
  for (const auto& res : r.pruned) slowest = std::max(slowest, res.wall_seconds);
  c.note("SE welfare " + fmt(r.se_welfare) + ", reached at episode " +
         (first < episodes ? std::to_string(first) : std::string("never")) +
         ", minimum afterwards " + fmt(low) + ", final " +
         fmt(smooth.back()) + ", slowest run " + fmt(slowest) + " s");
  return c.outcome();
}

Outcome criterion6() {
  Checker c;
  Runs& r = runs(true);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  double pruned_sum = 0.0;
  double unpruned_sum = 0.0;
  double min_sp = 1.0, max_sp = 0.0;
  for (std::size_t s = 0; s < kSeeds.size(); ++s) {
    for (auto& l : r.pruned[s].learners) {
      const double sp = l.actor.sparsity();
      min_sp = std::min(min_sp, sp);
      max_sp = std::max(max_sp, sp);
      c.expect(std::abs(sp - kTargetSparsity) <= kSparsityTol,
               "actor sparsity " + fmt(sp));
      const MaskedDenseNetwork small = compact(l.actor);
      for (int k = 0; k < 100; ++k) {
        std::vector<double> x(l.actor.input_size());
        for (double& v : x) v = normal(rng);
        c.expect(small.predict(x) == l.actor.predict(x),
                 "compact output differs");
      }
    }
    const EvalResult pe = evaluate_learners(r.game, r.config.env,
                                            r.pruned[s].learners,
                                            kEvalEpisodes, kSeeds[s]);
    const EvalResult ue = evaluate_learners(r.game, r.config.env,
                                            r.unpruned[s].learners,
                                            kEvalEpisodes, kSeeds[s]);
    pruned_sum += pe.mean_social_welfare;
    unpruned_sum += ue.mean_social_welfare;
  }
  const double pruned = pruned_sum / kSeeds.size();
  const double unpruned = unpruned_sum / kSeeds.size();
  c.expect(pruned >= kEvalFraction * unpruned,
           "eval " + fmt(pruned) + " < " + fmt(kEvalFraction) + " x " +
               fmt(unpruned));
  c.note("sparsity " + fmt(min_sp) + ".." + fmt(max_sp) + ", eval welfare " +
         fmt(pruned) + " pruned vs " + fmt(unpruned) + " unpruned");
  return c.outcome();
}

Outcome criterion7() {
  Checker c;
  const Runs& r = runs(false);
  const PruneConfig& pc = r.config.prune;
  const TrainConfig& tc = r.config.train;
  // Endpoints.
  const auto start = schedule_rates(pc.start_step, pc);
  const auto end = schedule_rates(pc.end_step(), pc);
  c.expect(std::abs(start.first - pc.initial_sparsity) <= kScheduleTol &&
               std::abs(start.second - pc.initial_sparsity) <= kScheduleTol,
           "start endpoint");
  c.expect(std::abs(end.first - pc.target_sparsity) <= kScheduleTol &&
               std::abs(end.second - pc.target_sparsity) <= kScheduleTol,
           "end endpoint");
  // Logged rates against the polynomial written out here.
  auto poly = [&](long t, int power) {
    if (t <= pc.start_step) return pc.initial_sparsity;
    const double span = static_cast<double>(pc.num_steps * pc.frequency);
    const double frac =
        std::min(1.0, static_cast<double>(t - pc.start_step) / span);
    return pc.target_sparsity + (pc.initial_sparsity - pc.target_sparsity) *
                                    std::pow(1.0 - frac, power);
  };
  const Trainer trainer(r.game, r.config.env, tc, pc);
  const double n0 = tc.anneal_offset >= 0
                        ? tc.anneal_offset
                        : 0.5 * static_cast<double>(trainer.planned_updates());
  long rows = 0;
  for (const auto& res : r.pruned) {
    for (const auto& e : res.prune_log) {
      ++rows;
      c.expect(std::abs(e.p_t1 - poly(e.update, 4)) <= kScheduleTol,
               "p_t1 at update " + std::to_string(e.update));
      c.expect(std::abs(e.p_t2 - poly(e.update, 2)) <= kScheduleTol,
               "p_t2 at update " + std::to_string(e.update));
      c.expect(e.rate <= e.p_t1, "p_t > p_t1");
    }
    for (const auto& [pt, pt1] : res.rate_pairs) c.expect(pt <= pt1, "p_t > p_t1");
    for (std::size_t k = 0; k < res.c3_values.size(); ++k) {
      const double n = static_cast<double>(res.c3_steps[k]);
      const double want = std::exp(1.0) / (1.0 + std::exp(tc.anneal_rate * (n - n0)));
      c.expect(std::abs(res.c3_values[k] - want) <= kScheduleTol,
               "c3 at update " + std::to_string(res.c3_steps[k]));
    }
  }
  c.note(std::to_string(rows) + " prune rows");
  return c.outcome();
}

Outcome criterion8() {
  Checker c;
  const Runs& r = runs(false);
  long kl = 0, js = 0;
  for (const auto& res : r.pruned) {
    for (double v : res.kl_values) {
      c.expect(v >= 0.0, "negative KL " + fmt(v));
      ++kl;
    }
    for (double v : res.js_values) {
      c.expect(v >= 0.0 && v <= 1.0, "JS out of range " + fmt(v));
      ++js;
    }
    for (const auto& e : res.prune_log) {
      c.expect(e.js >= 0.0 && e.js <= 1.0, "logged r' out of range");
    }
  }
  c.expect(kl > 0 && js > 0, "no incentives logged");
  // Identical distributions.
  std::mt19937_64 rng(8);
  const DiagonalGaussian p{{0.3, -1.2, 2.0}, {0.5, 1.5, 0.1}};
  c.expect(kl_diag_gaussian(p, p) == 0.0, "KL(p, p) != 0");
  c.expect(js_divergence(p, p, 16, rng) == 0.0, "JS(p, p) != 0");
  // A module whose counterfactual prior equals the full prior.
  CvaeConfig cc;
  cc.latent_dim = 2;
  cc.hidden = {5};
  const ActionSlots slots{{0, 1}, {1, 1}};
  CvaeModule m(2, slots, cc, rng);
  m.set_params(std::vector<double>(m.num_params(), 0.0));
  const auto inc = m.incentives(std::vector<double>{0.1, 0.2},
                                std::vector<double>{0.5, -0.5}, rng);
  for (const auto& x : inc) {
    c.expect(x.kl == 0.0 && x.js == 0.0, "tied priors give non-zero incentive");
  }
  c.note(std::to_string(kl) + " KL and " + std::to_string(js) + " JS values");
  return c.outcome();
}

Outcome criterion9() {
  Checker c;
  const Runs& r = runs(false);
  // Mask monotonicity and actor-only pruning over the full runs.
  for (const auto& res : r.pruned) {
    for (const auto& snaps : res.mask_snapshots) {
      for (std::size_t k = 1; k < snaps.size(); ++k) {
        for (const auto& pair : snaps[k - 1]) {
          c.expect(std::binary_search(snaps[k].begin(), snaps[k].end(), pair),
                   "neuron unmasked");
        }
      }
    }
    for (const auto& l : res.learners) {
      c.expect(l.critic.sparsity() == 0.0, "critic pruned");
    }
  }
  // Masked-neuron isolation on a trained, pruned actor.
  {
    MaskedDenseNetwork net = r.pruned.front().learners.back().actor;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(net.input_size());
    for (double& v : x) v = normal(rng);
    const auto before = net.predict(x);
    std::size_t masked = 0;
    for (std::size_t h = 0; h < net.num_hidden_layers(); ++h) {
      for (std::size_t n = 0; n < net.sizes()[h + 1]; ++n) {
        if (net.alive(h, n)) continue;
        ++masked;
        for (std::size_t col = 0; col < net.sizes()[h]; ++col) {
          net.weight(h, n, col) += 5.0 * normal(rng);
        }
        net.bias(h, n) += 5.0 * normal(rng);
      }
    }
    c.expect(masked > 0, "no masked neurons to probe");
    c.expect(net.predict(x) == before, "masked neuron leaks");
    std::vector<double> grad(net.num_params(), 0.0);
    net.forward(x);
    net.backward(std::vector<double>(net.output_size(), 1.0), grad);
    for (std::size_t h = 0; h < net.num_hidden_layers(); ++h) {
      for (std::size_t n = 0; n < net.sizes()[h + 1]; ++n) {
        if (net.alive(h, n)) continue;
        c.expect(grad[net.bias_index(h, n)] == 0.0, "masked bias gradient");
        for (std::size_t col = 0; col < net.sizes()[h]; ++col) {
          c.expect(grad[net.weight_index(h, n, col)] == 0.0,
                   "masked weight gradient");
        }
      }
    }
  }
  // Matching probabilities are a distribution per AV.
  {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> q(0.01, 50.0);
    double worst = 0.0;
    for (int n = 0; n < kSuiteSamples; ++n) {
      std::vector<double> qoe(1 + rng() % 8), price(qoe.size());
      for (double& v : qoe) v = q(rng);
      for (double& v : price) v = 1.0 + q(rng) / 10.0;
      const auto theta = matching_probabilities(qoe, price);
      double sum = 0.0;
      for (double t : theta) sum += t;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    c.expect(worst <= kRowSumTol, "row sum error " + fmt(worst));
  }
  // Reward recomputation from logged transitions on a traced run.
  {
    TrainConfig tc = r.config.train;
    tc.episodes = 40;
    Trainer trainer(r.game, r.config.env, tc, r.config.prune);
    TrainOptions opt;
    opt.seed = 1;
    opt.keep_transition_log = true;
    const TrainResult res = trainer.train(opt);
    c.expect(!res.step_log.empty() && !res.transitions.empty(), "empty log");
    for (const StepRecord& rec : res.step_log) {
      StrategyProfile s;
      s.prices = rec.prices;
      s.bandwidth = rec.bandwidth;
      for (std::size_t j = 0; j < r.game.num_rsus(); ++j) {
        c.expect(std::abs(leader_utility(j, s, r.game) -
                          rec.leader_rewards[j]) <= kRewardTol,
                 "leader reward");
      }
      for (std::size_t i = 0; i < r.game.num_avs(); ++i) {
        double want = follower_utility(i, s, r.game);
        const EnvConfig& env = r.config.env;
        if (env.delay_penalty > 0) {
          want -= env.delay_penalty *
                  std::min(delay_violation(i, s, r.game, rec.arrival_rates,
                                           rec.service_rates),
                           env.delay_violation_cap);
        }
        c.expect(std::abs(want - rec.follower_rewards[i]) <= kRewardTol,
                 "follower reward");
      }
    }
    for (const auto& t : res.transitions) {
      c.expect(std::abs(t.hybrid - (t.extrinsic + tc.hybrid_weight * t.intrinsic)) <=
                   kRewardTol,
               "hybrid reward");
    }
  }
  return c.outcome();
}

Outcome criterion10() {
  Checker c;
  const InstanceSpec base;
  auto se = [&](std::size_t v, std::size_t r) {
    const GameInstance g = build_instance(symmetric_spec(base, v, r));
    const EquilibriumReport rep = solve_stackelberg(g);
    double av = 0.0, rsu = 0.0;
    for (double x : rep.follower_utilities) av += x;
    for (double x : rep.leader_utilities) rsu += x;
    return std::pair<double, double>{av / v, rsu / r};
  };
  std::vector<double> av_v, rsu_v, rsu_r;
  for (std::size_t v : kAxis) {
    const auto [av, rsu] = se(v, 2);
    av_v.push_back(av);
    rsu_v.push_back(rsu);
  }
  for (std::size_t r : kAxis) rsu_r.push_back(se(3, r).second);
  auto list = [](const std::vector<double>& xs) {
    std::string s;
    for (double x : xs) s += (s.empty() ? "" : " ") + fmt(x);
    return s;
  };
  bool av_dec = true, rsu_inc = true, rsu_dec = true;
  for (std::size_t k = 1; k < kAxis.size(); ++k) {
    av_dec = av_dec && av_v[k] <= av_v[k - 1];
    rsu_inc = rsu_inc && rsu_v[k] >= rsu_v[k - 1];
    rsu_dec = rsu_dec && rsu_r[k] <= rsu_r[k - 1];
  }
  c.expect(av_dec, "AV reward not decreasing in V: " + list(av_v));
  c.expect(rsu_inc, "RSU reward not increasing in V: " + list(rsu_v));
  c.expect(rsu_dec, "RSU reward not decreasing in R: " + list(rsu_r));
  c.note("AV(V) " + list(av_v) + "; RSU(V) " + list(rsu_v) + "; RSU(R) " +
         list(rsu_r));
  return c.outcome();
}

}  // namespace
}  // namespace tinyma

int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--only" && a + 1 < argc) {
      std::stringstream ss(argv[++a]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...]\n";
      return 2;
    }
  }
  const std::map<int, std::function<tinyma::Outcome()>> criteria{
      {1, tinyma::criterion1}, {2, tinyma::criterion2},
      {3, tinyma::criterion3}, {4, tinyma::criterion4},
      {5, tinyma::criterion5}, {6, tinyma::criterion6},
      {7, tinyma::criterion7}, {8, tinyma::criterion8},
      {9, tinyma::criterion9}, {10, tinyma::criterion10}};
  bool all = true;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    tinyma::Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL")
              << " (" << o.detail << ")" << std::endl;
  }
  return all ? 0 : 1;
}
