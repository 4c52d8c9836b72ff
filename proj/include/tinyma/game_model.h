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

#ifndef TINYMA_GAME_MODEL_H_
#define TINYMA_GAME_MODEL_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tinyma/errors.h"
#include "tinyma/matrix.h"

// Domain model of the bandwidth-trading game between roadside units (RSUs,
// price-setting leaders) and autonomous vehicles (AVs, bandwidth-buying
// followers). All functions here are pure.
namespace tinyma {

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Position& a, const Position& b);

struct ChannelParams {
  double transmit_power = 0.2;        // watts
  double noise_power = 1e-13;         // watts
  double gain_coefficient = 1.0;      // dimensionless
  double light_speed = 3e8;           // m/s
  double carrier_frequency = 2.4e9;   // Hz
  // Hz represented by one simulation bandwidth unit. Only the delay model
  // converts; utilities use bandwidth units directly.
  double bandwidth_unit_hz = 1.0;

  void validate() const;
};

struct RsuProfile {
  int id = 0;
  double qoe = 0.0;  // derived from the A-DISTS inputs, see refresh_qoe()
  double adists = 0.9;
  double adists_threshold = 0.5;
  double reputation_weight = 5.0;
  double unit_cost = 1.0;
  double price_cap = 6.0;
  double cpu_rate = 1e10;      // cycles/s
  double arrival_rate = 5.0;   // tasks/s
  double service_rate = 10.0;  // tasks/s
  Position position;

  void validate() const;
};

struct AvProfile {
  int id = 0;
  double data_size = 2e7;      // bits
  double cpu_cycles = 1e9;     // cycles
  double max_delay = 1.0;      // s
  double delay_sensitivity = 2.0;
  double satisfaction = 5.0;
  Position position;

  void validate() const;

  // e - alpha_i * T_i^max, the offset inside the satisfaction logarithm.
  double log_offset() const;
};

// Complete immutable game definition. `social` is V x V (zeta), `service`
// is R x R (eta).
struct GameInstance {
  std::vector<RsuProfile> rsus;
  std::vector<AvProfile> avs;
  Matrix social;
  Matrix service;
  ChannelParams channel;

  std::size_t num_rsus() const { return rsus.size(); }
  std::size_t num_avs() const { return avs.size(); }

  bool has_coupling() const;
  std::vector<double> qoe_vector() const;
  std::vector<double> unit_costs() const;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;
};

// Recomputes every q_j from its A-DISTS inputs.
void refresh_qoe(GameInstance& game);

// Reputation growth: k_j += increment for every RSU, then refresh_qoe.
void apply_reputation_increment(GameInstance& game, double increment);

struct StrategyProfile {
  std::vector<double> prices;  // length R
  Matrix bandwidth;            // V x R

  StrategyProfile() = default;
  StrategyProfile(std::size_t num_avs, std::size_t num_rsus)
      : prices(num_rsus, 0.0), bandwidth(num_avs, num_rsus) {}

  // True when every p_j is in [c_j, p_max] and every b_ij >= 0.
  bool is_feasible(const GameInstance& game) const;
};

// Weber-Fechner QoE: k * ln(score / threshold).
double qoe_from_adists(double score, double threshold, double k);

// theta_j = (q_j / p_j) / sum_l (q_l / p_l). Identical for every AV.
std::vector<double> matching_probabilities(std::span<const double> qoe,
                                           std::span<const double> prices);

// Free-space gain A * (l / (4 pi f d))^2.
double channel_gain(double distance_m, const ChannelParams& channel);

// Shannon rate b * log2(1 + rho h / sigma^2), b in Hz.
double transmission_rate(double bandwidth_hz, double gain,
                         const ChannelParams& channel);

// Transmission + M/M/1 queueing + re-instantiation delay. `bandwidth` is in
// simulation units. Returns +infinity when bandwidth is zero.
double total_delay(const AvProfile& av, const RsuProfile& rsu,
                   double bandwidth, double distance_m,
                   const ChannelParams& channel);

// Follower (AV) utility U_i^F.
double follower_utility(std::size_t av, const StrategyProfile& profile,
                        const GameInstance& game);

// Leader (RSU) utility U_j^L with c_ij = c_j.
double leader_utility(std::size_t rsu, const StrategyProfile& profile,
                      const GameInstance& game);

// Leader utility with the matching probability supplied by the caller.
double leader_utility_given_share(std::size_t rsu, double share,
                                  double price, const Matrix& bandwidth,
                                  const GameInstance& game);

double social_welfare(const StrategyProfile& profile,
                      const GameInstance& game);

// sum_j theta_j T_ij, using the supplied per-RSU arrival/service rates (or
// the profile values when the spans are empty).
double expected_delay(std::size_t av, const StrategyProfile& profile,
                      const GameInstance& game,
                      std::span<const double> arrival_rates = {},
                      std::span<const double> service_rates = {});

// max(0, expected_delay - T_i^max).
double delay_violation(std::size_t av, const StrategyProfile& profile,
                       const GameInstance& game,
                       std::span<const double> arrival_rates = {},
                       std::span<const double> service_rates = {});

}  // namespace tinyma

#endif  // TINYMA_GAME_MODEL_H_
