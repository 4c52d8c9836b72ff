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

#ifndef TINYMA_EXPLORATION_INCENTIVE_H_
#define TINYMA_EXPLORATION_INCENTIVE_H_

#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tinyma/dense_net.h"

namespace tinyma {

struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dim() const { return mean.size(); }
  double log_density(std::span<const double> x) const;
};

// KL(p || q) in nats. Throws DimensionError on mismatched dimensions.
double kl_diag_gaussian(const DiagonalGaussian& p, const DiagonalGaussian& q);

// mean + std * eps.
std::vector<double> reparameterize(const DiagonalGaussian& g,
                                   std::span<const double> eps);

// Monte-Carlo Jensen-Shannon divergence in bits, clipped to [0, 1]. Both
// expectation terms reuse the same standard-normal draws, so swapping p and
// q returns the same value for the same rng state.
double js_divergence(const DiagonalGaussian& p, const DiagonalGaussian& q,
                     int n_samples, std::mt19937_64& rng);

struct CvaeConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> hidden{64, 64};
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  int js_samples = 16;
  double max_grad_norm = 10.0;
  // Log standard deviations are clamped to this range (zero gradient
  // outside).
  double min_log_std = -7.0;
  double max_log_std = 3.0;
  // When set, the counterfactual posterior reuses the full-action posterior
  // network on (s, a_-k, s'). Both priors then target one latent space and
  // their KL stays an information measure. The separate per-agent posterior
  // networks are kept in the parameter layout but left untrained.
  bool tie_posteriors = true;
};

struct CvaeSample {
  std::vector<double> state;
  std::vector<double> action;  // joint action of all agents
  std::vector<double> next_state;
};

// Slot (offset, length) of each agent's action inside the joint action.
using ActionSlots = std::vector<std::pair<std::size_t, std::size_t>>;

// Reparameterisation noise for one sample: eps for the full-action posterior
// and for the counterfactual posterior.
struct CvaeNoise {
  std::vector<double> full;
  std::vector<double> counterfactual;
};

struct CvaeIncentive {
  double kl = 0.0;  // Bayesian surprise
  double js = 0.0;  // JS-normalised incentive in [0, 1]
};

class CvaeModule {
 public:
  CvaeModule() = default;
  CvaeModule(std::size_t state_dim, ActionSlots slots, CvaeConfig config,
             std::mt19937_64& rng);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t num_agents() const { return slots_.size(); }
  const CvaeConfig& config() const { return config_; }

  // a with agent k's slots replaced by zeros.
  std::vector<double> counterfactual_action(std::span<const double> action,
                                            std::size_t k) const;

  DiagonalGaussian prior(std::span<const double> s,
                         std::span<const double> a) const;
  DiagonalGaussian counterfactual_prior(std::span<const double> s,
                                        std::span<const double> a,
                                        std::size_t k) const;
  DiagonalGaussian posterior(std::span<const double> s,
                             std::span<const double> a,
                             std::span<const double> s_next) const;
  DiagonalGaussian counterfactual_posterior(std::span<const double> s,
                                            std::span<const double> a,
                                            std::span<const double> s_next,
                                            std::size_t k) const;
  DiagonalGaussian decode(std::span<const double> z) const;

  // KL[p1(z|s,a) || p2(z|s,a_-k)].
  double intrinsic_incentive(std::span<const double> s,
                             std::span<const double> a, std::size_t k) const;
  double js_incentive(std::span<const double> s, std::span<const double> a,
                      std::size_t k, int n_samples,
                      std::mt19937_64& rng) const;
  // Both incentives for every agent, sharing the full-action prior.
  std::vector<CvaeIncentive> incentives(std::span<const double> s,
                                        std::span<const double> a,
                                        std::mt19937_64& rng) const;

  // Negated variational bound averaged over the batch, using the given
  // noise (one entry per sample). When grad is non-null it receives the
  // gradient w.r.t. params() in the same flat order.
  double loss(const std::vector<CvaeSample>& batch, std::size_t k,
              const std::vector<CvaeNoise>& noise,
              std::vector<double>* grad = nullptr);
  // Same with fresh standard-normal noise.
  double loss(const std::vector<CvaeSample>& batch, std::size_t k,
              std::mt19937_64& rng);

  // One Adam step on phi1, phi2 (agent k) and phi3. Returns the loss.
  double train_step(const std::vector<CvaeSample>& batch, std::size_t k,
                    double learning_rate, std::mt19937_64& rng);

  std::vector<CvaeNoise> draw_noise(std::size_t n, std::mt19937_64& rng) const;

  // Flat view over every trainable parameter (copy in / copy out).
  std::vector<double> params() const;
  void set_params(std::span<const double> flat);
  std::size_t num_params() const;

 private:
  DiagonalGaussian split(std::span<const double> out) const;
  std::vector<MaskedDenseNetwork*> networks();
  std::vector<const MaskedDenseNetwork*> networks() const;
  std::vector<double> concat(std::span<const double> a,
                             std::span<const double> b) const;

  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  ActionSlots slots_;
  CvaeConfig config_;
  MaskedDenseNetwork prior_;                      // phi1: (s, a)
  MaskedDenseNetwork posterior_;                  // phi1: (s, a, s')
  std::vector<MaskedDenseNetwork> cf_prior_;      // phi2 per agent
  std::vector<MaskedDenseNetwork> cf_posterior_;  // phi2 per agent
  MaskedDenseNetwork decoder_;                    // phi3: z -> mean(s')
  std::vector<double> decoder_log_std_;           // learned per dimension
  std::vector<Adam> adam_;  // one per network, then decoder_log_std_
};

}  // namespace tinyma

#endif  // TINYMA_EXPLORATION_INCENTIVE_H_
