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

#include "tinyma/pruning.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "tinyma/errors.h"

namespace tinyma {
namespace {

std::vector<double> random_input(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// 2 -> 1 -> 1 identity net with hand-set weights.
MaskedDenseNetwork hand_net() {
  std::mt19937_64 rng(0);
  MaskedDenseNetwork net({2, 1, 1}, Activation::kTanh, rng);
  net.weight(0, 0, 0) = 1.0;
  net.weight(0, 0, 1) = 2.0;
  net.weight(1, 0, 0) = 3.0;
  return net;
}

TEST(ImportanceTest, HandValue) {
  EXPECT_DOUBLE_EQ(current_importance(hand_net(), 0, 0), 45.0);
}

TEST(ImportanceTest, ZeroWeightsGiveZero) {
  MaskedDenseNetwork net = hand_net();
  net.weight(1, 0, 0) = 0.0;
  EXPECT_EQ(current_importance(net, 0, 0), 0.0);
}

TEST(ImportanceTest, QuarticHomogeneity) {
  std::mt19937_64 rng(1);
  MaskedDenseNetwork net({3, 5, 4, 2}, Activation::kTanh, rng);
  const LayerScores before = current_importances(net);
  for (double& p : net.params()) p *= 2.0;
  const LayerScores after = current_importances(net);
  for (std::size_t l = 0; l < before.size(); ++l) {
    for (std::size_t n = 0; n < before[l].size(); ++n) {
      EXPECT_NEAR(after[l][n], 16.0 * before[l][n], 1e-12 * after[l][n]);
    }
  }
}

TEST(DecayTest, SingleEntryWindow) {
  std::mt19937_64 rng(2);
  MaskedDenseNetwork net({3, 4, 2}, Activation::kTanh, rng);
  net.set_mask(0, 1, false);
  ImportanceLedger ledger(net, 1);
  ledger.push(net);
  ledger.push(net);
  EXPECT_EQ(ledger.entries(), 1u);
  const LayerScores s = ledger.decayed(net, 0.9, false);
  const LayerScores omega = current_importances(net);
  for (std::size_t n = 0; n < 4; ++n) {
    EXPECT_EQ(s[0][n], n == 1 ? 0.0 : omega[0][n]);
  }
}

TEST(DecayTest, GeometricSum) {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(decayed_sum(ones, 0.5, false, 3), 1.75);
  // Newest-last: the newest entry has weight 1.
  const std::vector<double> h{8.0, 4.0, 2.0};
  EXPECT_DOUBLE_EQ(decayed_sum(h, 0.5, false, 3), 2.0 + 2.0 + 2.0);
  EXPECT_DOUBLE_EQ(decay_weight(0, 0.5, false, 3), 1.0);
  EXPECT_DOUBLE_EQ(decay_weight(2, 0.5, false, 3), 0.25);
}

TEST(DecayTest, MaskedNeuronScoresZero) {
  std::mt19937_64 rng(3);
  MaskedDenseNetwork net({3, 6, 6, 2}, Activation::kTanh, rng);
  ImportanceLedger ledger(net, 5);
  for (int k = 0; k < 4; ++k) ledger.push(net);
  net.set_mask(1, 4, false);
  const LayerScores s = ledger.decayed(net, 0.9, false);
  EXPECT_EQ(s[1][4], 0.0);
  EXPECT_GT(s[1][3], 0.0);
}

TEST(ScheduleTest, Endpoints) {
  PruneConfig c;
  c.initial_sparsity = 0.1;
  const auto start = schedule_rates(c.start_step, c);
  EXPECT_NEAR(start.first, 0.1, 1e-12);
  EXPECT_NEAR(start.second, 0.1, 1e-12);
  const auto end = schedule_rates(c.end_step(), c);
  EXPECT_NEAR(end.first, 0.85, 1e-12);
  EXPECT_NEAR(end.second, 0.85, 1e-12);
  const auto before = schedule_rates(0, c);
  EXPECT_EQ(before.first, 0.1);
  const auto after = schedule_rates(c.end_step() + 1000, c);
  EXPECT_EQ(after.first, 0.85);
  EXPECT_EQ(after.second, 0.85);
}

TEST(ScheduleTest, Midpoint) {
  PruneConfig c;
  const long mid = c.start_step + c.num_steps * c.frequency / 2;
  const auto [p1, p2] = schedule_rates(mid, c);
  EXPECT_NEAR(p1, 0.796875, 1e-12);
  EXPECT_NEAR(p2, 0.6375, 1e-12);
}

TEST(ScheduleTest, PruneStepCadence) {
  PruneConfig c;
  EXPECT_FALSE(c.is_prune_step(c.start_step - 1));
  EXPECT_TRUE(c.is_prune_step(c.start_step));
  EXPECT_FALSE(c.is_prune_step(c.start_step + 1));
  EXPECT_TRUE(c.is_prune_step(c.start_step + c.frequency));
  EXPECT_TRUE(c.is_prune_step(c.end_step()));
  EXPECT_FALSE(c.is_prune_step(c.end_step() + c.frequency));
}

TEST(AdaptiveRateTest, Cases) {
  EXPECT_DOUBLE_EQ(adaptive_rate(0.8, 0.6, 0.7, 0.3, 0.0), 0.8);
  EXPECT_DOUBLE_EQ(adaptive_rate(0.8, 0.6, 1.0, 0.0, -0.5), 0.6);
  EXPECT_DOUBLE_EQ(adaptive_rate(0.8, 0.6, 0.5, 0.5, -0.5), 0.6);
}

TEST(AdaptiveRateTest, NeverAboveQuarticAndInRange) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> phi(-2.0, 2.0);
  PruneConfig c;
  for (int k = 0; k < 2000; ++k) {
    const long t = c.start_step + static_cast<long>(u(rng) * 500);
    const auto [p1, p2] = schedule_rates(t, c);
    const double p = adaptive_rate(p1, p2, u(rng), u(rng), phi(rng));
    EXPECT_LE(p, p1);
    EXPECT_GE(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(ThresholdTest, RankAndLiteral) {
  const LayerScores s{{1.0, 2.0, 3.0, 4.0}};
  EXPECT_DOUBLE_EQ(prune_threshold(s, 0.5, ThresholdMode::kRank), 2.0);
  EXPECT_DOUBLE_EQ(prune_threshold(s, 0.5, ThresholdMode::kLiteral), 5.0);
  EXPECT_LT(prune_threshold(s, 0.0, ThresholdMode::kRank), 1.0);
  EXPECT_THROW(prune_threshold(LayerScores{}, 0.5, ThresholdMode::kRank),
               ConfigError);
}

TEST(MaskUpdateTest, RankPrunesAtOrBelowThreshold) {
  std::mt19937_64 rng(5);
  MaskedDenseNetwork net({2, 4, 1}, Activation::kTanh, rng);
  const LayerScores s{{1.0, 2.0, 3.0, 4.0}};
  const PruneReport r = update_masks(net, s, 2.0, ThresholdMode::kRank, 1);
  EXPECT_EQ(r.pruned.size(), 2u);
  EXPECT_FALSE(net.alive(0, 0));
  EXPECT_FALSE(net.alive(0, 1));
  EXPECT_TRUE(net.alive(0, 2));
  EXPECT_DOUBLE_EQ(r.sparsity, 0.5);
}

TEST(MaskUpdateTest, LiteralThresholdWithFloorKeepsTop) {
  std::mt19937_64 rng(6);
  MaskedDenseNetwork net({2, 4, 1}, Activation::kTanh, rng);
  const LayerScores s{{1.0, 2.0, 3.0, 4.0}};
  const double psi = prune_threshold(s, 0.5, ThresholdMode::kLiteral);
  const PruneReport r = update_masks(net, s, psi, ThresholdMode::kLiteral, 1);
  EXPECT_EQ(r.pruned.size(), 3u);
  EXPECT_TRUE(net.alive(0, 3));
}

TEST(MaskUpdateTest, ThresholdBelowAllIsNoOp) {
  std::mt19937_64 rng(7);
  MaskedDenseNetwork net({2, 4, 3, 1}, Activation::kTanh, rng);
  const LayerScores s = current_importances(net);
  const PruneReport r = update_masks(
      net, s, -std::numeric_limits<double>::infinity(), ThresholdMode::kRank,
      2);
  EXPECT_TRUE(r.pruned.empty());
  EXPECT_EQ(net.sparsity(), 0.0);
}

TEST(MaskUpdateTest, FloorKeepsTopNeuronPerLayer) {
  std::mt19937_64 rng(8);
  MaskedDenseNetwork net({2, 4, 3, 1}, Activation::kTanh, rng);
  const LayerScores s{{0.5, 3.0, 1.0, 2.0}, {7.0, 9.0, 8.0}};
  update_masks(net, s, 100.0, ThresholdMode::kRank, 1);
  EXPECT_EQ(net.live_hidden_neuron_count(), 2u);
  EXPECT_TRUE(net.alive(0, 1));
  EXPECT_TRUE(net.alive(1, 1));
}

TEST(MaskUpdateTest, FlooredLayerShortfallTakenElsewhere) {
  std::mt19937_64 rng(11);
  MaskedDenseNetwork net({2, 6, 3, 1}, Activation::kTanh, rng);
  // Lowest four scores all sit in layer 1, which may only lose one neuron.
  const LayerScores s{{5.0, 6.0, 7.0, 8.0, 9.0, 10.0}, {1.0, 2.0, 3.0}};
  const double psi = prune_threshold(s, 4.0 / 9.0, ThresholdMode::kRank);
  EXPECT_DOUBLE_EQ(psi, 5.0);
  update_masks(net, s, psi, ThresholdMode::kRank, 2);
  EXPECT_EQ(net.live_hidden_neuron_count(), 5u);
  EXPECT_FALSE(net.alive(1, 0));
  EXPECT_TRUE(net.alive(1, 1));
  EXPECT_TRUE(net.alive(1, 2));
  EXPECT_FALSE(net.alive(0, 0));
  EXPECT_FALSE(net.alive(0, 1));
  EXPECT_FALSE(net.alive(0, 2));
  EXPECT_TRUE(net.alive(0, 3));
}

TEST(MaskUpdateTest, MasksAreMonotone) {
  std::mt19937_64 rng(9);
  MaskedDenseNetwork net({3, 10, 10, 2}, Activation::kTanh, rng);
  ImportanceLedger ledger(net, 5);
  PruneConfig c;
  std::vector<std::vector<std::uint8_t>> prev{net.mask(0), net.mask(1)};
  double pt = 0.0;
  for (long t = c.start_step; t <= c.end_step(); t += c.frequency) {
    // Random drift so scores reorder between steps.
    for (double& p : net.params()) p += 0.05 * random_input(1, rng)[0];
    ledger.push(net);
    const auto [p1, p2] = schedule_rates(t, c);
    pt = adaptive_rate(p1, p2, 0.3, 0.3, c.incentive_sensitivity);
    const LayerScores s = ledger.decayed(net, c.decay, false);
    update_masks(net, s, prune_threshold(s, pt, c.mode), c.mode,
                 c.min_neurons_per_layer);
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t n = 0; n < 10; ++n) {
        if (!prev[h][n]) {
          EXPECT_FALSE(net.alive(h, n));
        }
      }
      prev[h] = net.mask(h);
    }
    // Within one neuron of ceil(p_t * total).
    const double want = std::ceil(pt * 20.0 - 1e-9);
    EXPECT_LE(std::abs(net.sparsity() * 20.0 - want), 1.0 + 1e-9)
        << "t " << t;
  }
  // r' = 0.3 with phi = -0.5 ends at 0.85 * 0.85 of the neurons.
  EXPECT_NEAR(pt, 0.85 * 0.85, 1e-12);
  EXPECT_DOUBLE_EQ(net.sparsity(), 15.0 / 20.0);
}

TEST(CompactTest, NoMasksIsStructuralIdentity) {
  std::mt19937_64 rng(10);
  MaskedDenseNetwork net({4, 8, 8, 2}, Activation::kTanh, rng);
  const MaskedDenseNetwork small = compact(net);
  EXPECT_EQ(small.sizes(), net.sizes());
  EXPECT_EQ(small.parameter_count(true), net.parameter_count(true));
  const auto x = random_input(4, rng);
  EXPECT_EQ(small.predict(x), net.predict(x));
}

TEST(CompactTest, ForwardEquivalence) {
  std::mt19937_64 rng(11);
  MaskedDenseNetwork net({4, 8, 8, 2}, Activation::kTanh, rng);
  net.set_mask(0, 5, false);
  const MaskedDenseNetwork small = compact(net);
  EXPECT_EQ(small.sizes(), (std::vector<std::size_t>{4, 7, 8, 2}));
  EXPECT_EQ(small.sparsity(), 0.0);
  EXPECT_EQ(small.parameter_count(true), net.parameter_count(true));
  for (int k = 0; k < 100; ++k) {
    const auto x = random_input(4, rng);
    EXPECT_EQ(small.predict(x), net.predict(x));
  }
  net.set_mask(1, 0, false);
  net.set_mask(1, 7, false);
  const MaskedDenseNetwork smaller = compact(net);
  for (int k = 0; k < 100; ++k) {
    const auto x = random_input(4, rng);
    EXPECT_EQ(smaller.predict(x), net.predict(x));
  }
}

TEST(CompactTest, FullyMaskedLayerThrows) {
  std::mt19937_64 rng(12);
  MaskedDenseNetwork net({2, 3, 1}, Activation::kTanh, rng);
  for (std::size_t n = 0; n < 3; ++n) net.set_mask(0, n, false);
  EXPECT_THROW(compact(net), ConfigError);
}

TEST(RegularizerTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  MaskedDenseNetwork net({3, 5, 4, 2}, Activation::kTanh, rng);
  net.set_mask(0, 2, false);
  std::vector<double> grad(net.num_params(), 0.0);
  const double lambda = 0.3, weight = 0.9;
  importance_regularizer(net, lambda, weight, grad);
  const double h = 1e-5;
  for (std::size_t k = 0; k < net.num_params(); ++k) {
    const double saved = net.params()[k];
    net.params()[k] = saved + h;
    const double up = importance_regularizer(net, lambda, weight, {});
    net.params()[k] = saved - h;
    const double down = importance_regularizer(net, lambda, weight, {});
    net.params()[k] = saved;
    const double fd = (up - down) / (2 * h);
    EXPECT_LT(std::abs(fd - grad[k]) / std::max(1.0, std::abs(grad[k])), 1e-4)
        << "param " << k;
  }
}

TEST(PruneConfigTest, Validation) {
  PruneConfig c;
  EXPECT_NO_THROW(c.validate());
  c.target_sparsity = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PruneConfig{};
  c.initial_sparsity = 0.9;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PruneConfig{};
  c.window = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PruneConfig{};
  c.frequency = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace tinyma
