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

#ifndef TINYMA_PRUNING_H_
#define TINYMA_PRUNING_H_

#include <cstddef>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "tinyma/dense_net.h"

namespace tinyma {

enum class ThresholdMode { kRank, kLiteral };

// Scores per hidden layer, per neuron.
using LayerScores = std::vector<std::vector<double>>;

struct PruneConfig {
  bool enabled = true;
  double initial_sparsity = 0.0;  // p_i
  double target_sparsity = 0.85;  // p_f
  // Steps are counted in policy updates.
  long start_step = 75;   // t_0
  long num_steps = 90;    // N_p
  long frequency = 5;     // delta t
  int window = 5;         // w
  double decay = 0.9;     // gamma_n
  double incentive_sensitivity = -0.5;  // phi
  ThresholdMode mode = ThresholdMode::kRank;
  std::size_t min_neurons_per_layer = 2;  // budget C as a per-layer floor
  // Weight old entries by gamma^(w - age) instead of gamma^age.
  bool literal_decay_exponent = false;
  // false gives the plain magnitude-rank baseline (r' ignored).
  bool use_incentive = true;

  void validate() const;  // throws ConfigError
  long end_step() const { return start_step + num_steps * frequency; }
  // True when a mask update is due at policy update t.
  bool is_prune_step(long t) const;
};

// Omega = (sum of squared incoming weights) * (sum of squared outgoing
// weights) for neuron `neuron` of hidden layer `hidden_layer`.
double current_importance(const MaskedDenseNetwork& net,
                          std::size_t hidden_layer, std::size_t neuron);
LayerScores current_importances(const MaskedDenseNetwork& net);

// Weighted window sum of a newest-last history. With the default exponent
// the newest entry has weight 1 and an entry of age a has weight gamma^a.
double decayed_sum(std::span<const double> history, double gamma,
                   bool literal_exponent, int window);
// Weight of the entry of age `age`.
double decay_weight(std::size_t age, double gamma, bool literal_exponent,
                    int window);

class ImportanceLedger {
 public:
  ImportanceLedger() = default;
  ImportanceLedger(const MaskedDenseNetwork& net, int window);

  // Appends the current Omega of every hidden neuron, dropping entries older
  // than the window.
  void push(const MaskedDenseNetwork& net);
  std::size_t entries() const { return history_.size(); }

  // S = decayed window sum * mask.
  LayerScores decayed(const MaskedDenseNetwork& net, double gamma,
                      bool literal_exponent) const;
  // Weight the newest entry receives in decayed().
  double current_weight(double gamma, bool literal_exponent) const;

 private:
  int window_ = 1;
  std::deque<LayerScores> history_;
};

// (p_t1, p_t2): quartic and quadratic progressive schedules. Before t_0 both
// are p_i; past the end both are p_f.
std::pair<double, double> schedule_rates(long t, const PruneConfig& config);

// min(max(p_t1 (1 + phi r_t), p_t2 (1 + phi r_prev)), p_t1) clamped to [0, 1).
double adaptive_rate(double p_t1, double p_t2, double r_t, double r_prev,
                     double phi);

// Rank mode: the ceil(p_t N)-th smallest score (or -inf for p_t N == 0).
// Literal mode: p_t * sum of scores. Throws ConfigError on empty scores.
double prune_threshold(const LayerScores& scores, double p_t,
                       ThresholdMode mode);

struct PruneReport {
  std::vector<std::pair<std::size_t, std::size_t>> pruned;  // (layer, neuron)
  double sparsity = 0.0;
};

// Masks live neurons whose score is <= psi (rank mode) or < psi (literal
// mode); never leaves a layer with fewer than min_per_layer live neurons
// (the highest-scoring candidates are kept). Masked neurons stay masked.
PruneReport update_masks(MaskedDenseNetwork& net, const LayerScores& scores,
                         double psi, ThresholdMode mode,
                         std::size_t min_per_layer);

// Physically removes masked neurons; the result's forward pass equals the
// masked network's. Throws ConfigError on a fully masked layer.
MaskedDenseNetwork compact(const MaskedDenseNetwork& net);

// lambda * c * sum_n m_n Omega_n, the differentiable part of the sparsity
// regulariser (c = weight of the newest ledger entry). Adds its gradient to
// grad when non-empty and returns the value.
double importance_regularizer(const MaskedDenseNetwork& net, double lambda,
                              double current_weight, std::span<double> grad);

}  // namespace tinyma

#endif  // TINYMA_PRUNING_H_
