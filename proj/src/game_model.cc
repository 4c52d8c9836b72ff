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

#include "tinyma/game_model.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace tinyma {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string rsu_tag(const RsuProfile& r) {
  return "rsu " + std::to_string(r.id) + ": ";
}

std::string av_tag(const AvProfile& a) {
  return "av " + std::to_string(a.id) + ": ";
}

}  // namespace

double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void ChannelParams::validate() const {
  require(transmit_power > 0, "channel: transmit_power must be > 0");
  require(noise_power > 0, "channel: noise_power must be > 0");
  require(gain_coefficient > 0, "channel: gain_coefficient must be > 0");
  require(light_speed > 0, "channel: light_speed must be > 0");
  require(carrier_frequency > 0, "channel: carrier_frequency must be > 0");
  require(bandwidth_unit_hz > 0, "channel: bandwidth_unit_hz must be > 0");
}

void RsuProfile::validate() const {
  const std::string tag = rsu_tag(*this);
  require(adists > 0 && adists <= 1, tag + "adists must be in (0, 1]");
  require(adists_threshold > 0 && adists_threshold <= 1,
          tag + "adists_threshold must be in (0, 1]");
  require(reputation_weight > 0, tag + "reputation_weight must be > 0");
  require(unit_cost > 0, tag + "unit_cost must be > 0");
  require(unit_cost < price_cap, tag + "unit_cost must be < price_cap");
  require(cpu_rate > 0, tag + "cpu_rate must be > 0");
  require(arrival_rate > 0, tag + "arrival_rate must be > 0");
  require(service_rate > arrival_rate,
          tag + "service_rate must exceed arrival_rate (M/M/1 stability)");
}

void AvProfile::validate() const {
  const std::string tag = av_tag(*this);
  require(data_size > 0, tag + "data_size must be > 0");
  require(cpu_cycles > 0, tag + "cpu_cycles must be > 0");
  require(max_delay > 0, tag + "max_delay must be > 0");
  require(satisfaction > 0, tag + "satisfaction must be > 0");
  require(delay_sensitivity >= 0, tag + "delay_sensitivity must be >= 0");
}

double AvProfile::log_offset() const {
  return std::numbers::e - delay_sensitivity * max_delay;
}

bool GameInstance::has_coupling() const {
  for (double v : social.data()) {
    if (v != 0.0) return true;
  }
  for (double v : service.data()) {
    if (v != 0.0) return true;
  }
  return false;
}

std::vector<double> GameInstance::qoe_vector() const {
  std::vector<double> q;
  q.reserve(rsus.size());
  for (const auto& r : rsus) q.push_back(r.qoe);
  return q;
}

std::vector<double> GameInstance::unit_costs() const {
  std::vector<double> c;
  c.reserve(rsus.size());
  for (const auto& r : rsus) c.push_back(r.unit_cost);
  return c;
}

void GameInstance::validate() const {
  require(!rsus.empty(), "game: at least one RSU required");
  require(!avs.empty(), "game: at least one AV required");
  channel.validate();
  for (const auto& r : rsus) {
    r.validate();
    require(r.qoe > 0, rsu_tag(r) +
                           "qoe must be > 0 (adists must exceed its "
                           "threshold for a positive matching weight)");
  }
  for (const auto& a : avs) a.validate();
  const std::size_t v = avs.size();
  const std::size_t r = rsus.size();
  require(social.rows() == v && social.cols() == v,
          "game: social graph must be V x V");
  require(service.rows() == r && service.cols() == r,
          "game: service graph must be R x R");
  for (std::size_t i = 0; i < v; ++i) {
    require(social(i, i) == 0.0, "game: social graph diagonal must be zero");
    for (std::size_t k = 0; k < v; ++k) {
      require(social(i, k) == social(k, i),
              "game: social graph must be symmetric");
    }
  }
  for (std::size_t j = 0; j < r; ++j) {
    require(service(j, j) == 0.0,
            "game: service graph diagonal must be zero");
    for (std::size_t s = 0; s < r; ++s) {
      require(service(j, s) == service(s, j),
              "game: service graph must be symmetric");
    }
  }
}

void refresh_qoe(GameInstance& game) {
  for (auto& r : game.rsus) {
    r.qoe = qoe_from_adists(r.adists, r.adists_threshold, r.reputation_weight);
  }
}

void apply_reputation_increment(GameInstance& game, double increment) {
  for (auto& r : game.rsus) r.reputation_weight += increment;
  refresh_qoe(game);
}

bool StrategyProfile::is_feasible(const GameInstance& game) const {
  if (prices.size() != game.num_rsus()) return false;
  if (bandwidth.rows() != game.num_avs() ||
      bandwidth.cols() != game.num_rsus()) {
    return false;
  }
  for (std::size_t j = 0; j < prices.size(); ++j) {
    const auto& r = game.rsus[j];
    if (prices[j] < r.unit_cost || prices[j] > r.price_cap) return false;
  }
  for (double b : bandwidth.data()) {
    if (b < 0) return false;
  }
  return true;
}

double qoe_from_adists(double score, double threshold, double k) {
  if (!(score > 0) || !(threshold > 0) || !(k > 0)) {
    throw DomainError("qoe_from_adists: score, threshold and k must be > 0");
  }
  return k * std::log(score / threshold);
}

std::vector<double> matching_probabilities(std::span<const double> qoe,
                                           std::span<const double> prices) {
  if (qoe.size() != prices.size()) {
    throw DimensionError("matching_probabilities: size mismatch");
  }
  std::vector<double> theta(qoe.size());
  double total = 0.0;
  for (std::size_t j = 0; j < qoe.size(); ++j) {
    if (!(qoe[j] > 0) || !(prices[j] > 0)) {
      throw DomainError("matching_probabilities: q and p must be > 0 (rsu " +
                        std::to_string(j) + ")");
    }
    theta[j] = qoe[j] / prices[j];
    total += theta[j];
  }
  for (double& t : theta) t /= total;
  return theta;
}

double channel_gain(double distance_m, const ChannelParams& channel) {
  if (!(distance_m > 0)) {
    throw DomainError("channel_gain: distance must be > 0");
  }
  const double ratio = channel.light_speed /
                       (4.0 * std::numbers::pi * channel.carrier_frequency *
                        distance_m);
  return channel.gain_coefficient * ratio * ratio;
}

double transmission_rate(double bandwidth_hz, double gain,
                         const ChannelParams& channel) {
  if (bandwidth_hz == 0.0) return 0.0;
  return bandwidth_hz *
         std::log2(1.0 + channel.transmit_power * gain / channel.noise_power);
}

double total_delay(const AvProfile& av, const RsuProfile& rsu,
                   double bandwidth, double distance_m,
                   const ChannelParams& channel) {
  if (!(rsu.service_rate > rsu.arrival_rate)) {
    throw QueueInstabilityError("total_delay: rsu " + std::to_string(rsu.id) +
                                " has service_rate <= arrival_rate");
  }
  if (bandwidth <= 0.0) return std::numeric_limits<double>::infinity();
  const double rate =
      transmission_rate(bandwidth * channel.bandwidth_unit_hz,
                        channel_gain(distance_m, channel), channel);
  const double queueing =
      rsu.arrival_rate /
      (rsu.service_rate * (rsu.service_rate - rsu.arrival_rate));
  return av.data_size / rate + queueing + av.cpu_cycles / rsu.cpu_rate;
}

double follower_utility(std::size_t av, const StrategyProfile& profile,
                        const GameInstance& game) {
  const std::size_t num_rsus = game.num_rsus();
  const std::size_t num_avs = game.num_avs();
  const auto theta =
      matching_probabilities(game.qoe_vector(), profile.prices);
  const AvProfile& a = game.avs[av];
  const double offset = a.log_offset();
  const Matrix& b = profile.bandwidth;
  double utility = 0.0;
  for (std::size_t j = 0; j < num_rsus; ++j) {
    const double bij = b(av, j);
    const double arg = bij + offset;
    if (!(arg > 0)) {
      std::ostringstream os;
      os << "follower_utility: log argument b + e - alpha*T = " << arg
         << " <= 0 at (av " << av << ", rsu " << j << ")";
      throw DomainError(os.str());
    }
    double term = a.satisfaction * std::log(arg);
    for (std::size_t k = 0; k < num_avs; ++k) {
      if (k != av) term += game.social(av, k) * bij * b(k, j);
    }
    for (std::size_t s = 0; s < num_rsus; ++s) {
      if (s != j) term += game.service(j, s) * bij * b(av, s);
    }
    term -= profile.prices[j] * bij;
    utility += theta[j] * term;
  }
  return utility;
}

double leader_utility_given_share(std::size_t rsu, double share,
                                  double price, const Matrix& bandwidth,
                                  const GameInstance& game) {
  const double margin = price - game.rsus[rsu].unit_cost;
  double utility = 0.0;
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    utility += share * bandwidth(i, rsu) * margin;
  }
  return utility;
}

double leader_utility(std::size_t rsu, const StrategyProfile& profile,
                      const GameInstance& game) {
  const auto theta =
      matching_probabilities(game.qoe_vector(), profile.prices);
  return leader_utility_given_share(rsu, theta[rsu], profile.prices[rsu],
                                    profile.bandwidth, game);
}

double social_welfare(const StrategyProfile& profile,
                      const GameInstance& game) {
  double total = 0.0;
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    total += follower_utility(i, profile, game);
  }
  for (std::size_t j = 0; j < game.num_rsus(); ++j) {
    total += leader_utility(j, profile, game);
  }
  return total;
}

double expected_delay(std::size_t av, const StrategyProfile& profile,
                      const GameInstance& game,
                      std::span<const double> arrival_rates,
                      std::span<const double> service_rates) {
  const auto theta =
      matching_probabilities(game.qoe_vector(), profile.prices);
  double total = 0.0;
  for (std::size_t j = 0; j < game.num_rsus(); ++j) {
    RsuProfile rsu = game.rsus[j];
    if (!arrival_rates.empty()) rsu.arrival_rate = arrival_rates[j];
    if (!service_rates.empty()) rsu.service_rate = service_rates[j];
    const double d = distance(game.avs[av].position, rsu.position);
    total += theta[j] * total_delay(game.avs[av], rsu,
                                    profile.bandwidth(av, j), d,
                                    game.channel);
  }
  return total;
}

double delay_violation(std::size_t av, const StrategyProfile& profile,
                       const GameInstance& game,
                       std::span<const double> arrival_rates,
                       std::span<const double> service_rates) {
  const double excess =
      expected_delay(av, profile, game, arrival_rates, service_rates) -
      game.avs[av].max_delay;
  return excess > 0 ? excess : 0.0;
}

}  // namespace tinyma
