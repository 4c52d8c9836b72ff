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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tinyma/errors.h"

namespace tinyma {

void PruneConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("prune: ") + what);
  };
  require(initial_sparsity >= 0 && initial_sparsity <= target_sparsity &&
              target_sparsity < 1,
          "need 0 <= initial_sparsity <= target_sparsity < 1");
  require(window >= 1, "window must be >= 1");
  require(frequency >= 1, "frequency must be >= 1");
  require(num_steps >= 1, "num_steps must be >= 1");
  require(start_step >= 0, "start_step must be >= 0");
  require(decay > 0 && decay < 1, "decay must be in (0, 1)");
}

bool PruneConfig::is_prune_step(long t) const {
  return enabled && t >= start_step && t <= end_step() &&
         (t - start_step) % frequency == 0;
}

double current_importance(const MaskedDenseNetwork& net,
                          std::size_t hidden_layer, std::size_t neuron) {
  const auto& sizes = net.sizes();
  const std::size_t in = sizes[hidden_layer];
  const std::size_t out = sizes[hidden_layer + 2];
  double incoming = 0.0;
  for (std::size_t c = 0; c < in; ++c) {
    const double w = net.weight(hidden_layer, neuron, c);
    incoming += w * w;
  }
  double outgoing = 0.0;
  for (std::size_t r = 0; r < out; ++r) {
    const double w = net.weight(hidden_layer + 1, r, neuron);
    outgoing += w * w;
  }
  return incoming * outgoing;
}

LayerScores current_importances(const MaskedDenseNetwork& net) {
  LayerScores s(net.num_hidden_layers());
  for (std::size_t h = 0; h < s.size(); ++h) {
    s[h].resize(net.sizes()[h + 1]);
    for (std::size_t n = 0; n < s[h].size(); ++n) {
      s[h][n] = current_importance(net, h, n);
    }
  }
  return s;
}

double decay_weight(std::size_t age, double gamma, bool literal_exponent,
                    int window) {
  const double exponent =
      literal_exponent ? static_cast<double>(window) - static_cast<double>(age)
                       : static_cast<double>(age);
  return std::pow(gamma, exponent);
}

double decayed_sum(std::span<const double> history, double gamma,
                   bool literal_exponent, int window) {
  const std::size_t n =
      std::min(history.size(), static_cast<std::size_t>(window));
  double s = 0.0;
  for (std::size_t age = 0; age < n; ++age) {
    s += decay_weight(age, gamma, literal_exponent, window) *
         history[history.size() - 1 - age];
  }
  return s;
}

ImportanceLedger::ImportanceLedger(const MaskedDenseNetwork& /*net*/,
                                   int window)
    : window_(window) {
  if (window < 1) throw ConfigError("importance ledger: window must be >= 1");
}

void ImportanceLedger::push(const MaskedDenseNetwork& net) {
  history_.push_back(current_importances(net));
  while (history_.size() > static_cast<std::size_t>(window_)) {
    history_.pop_front();
  }
}

LayerScores ImportanceLedger::decayed(const MaskedDenseNetwork& net,
                                      double gamma,
                                      bool literal_exponent) const {
  LayerScores s(net.num_hidden_layers());
  for (std::size_t h = 0; h < s.size(); ++h) {
    s[h].assign(net.sizes()[h + 1], 0.0);
    for (std::size_t n = 0; n < s[h].size(); ++n) {
      if (!net.alive(h, n)) continue;
      double total = 0.0;
      for (std::size_t age = 0; age < history_.size(); ++age) {
        total += decay_weight(age, gamma, literal_exponent, window_) *
                 history_[history_.size() - 1 - age][h][n];
      }
      s[h][n] = total;
    }
  }
  return s;
}

double ImportanceLedger::current_weight(double gamma,
                                        bool literal_exponent) const {
  return decay_weight(0, gamma, literal_exponent, window_);
}

std::pair<double, double> schedule_rates(long t, const PruneConfig& config) {
  const double pi = config.initial_sparsity;
  const double pf = config.target_sparsity;
  if (t <= config.start_step) return {pi, pi};
  const double span = static_cast<double>(config.num_steps) *
                      static_cast<double>(config.frequency);
  const double frac =
      std::min(1.0, static_cast<double>(t - config.start_step) / span);
  const double base = 1.0 - frac;
  const double lo = std::min(pi, pf);
  const double hi = std::max(pi, pf);
  const double p1 = std::clamp(pf + (pi - pf) * std::pow(base, 4), lo, hi);
  const double p2 = std::clamp(pf + (pi - pf) * base * base, lo, hi);
  return {p1, p2};
}

double adaptive_rate(double p_t1, double p_t2, double r_t, double r_prev,
                     double phi) {
  const double p = std::min(std::max(p_t1 * (1.0 + phi * r_t),
                                     p_t2 * (1.0 + phi * r_prev)),
                            p_t1);
  return std::clamp(p, 0.0, std::nextafter(1.0, 0.0));
}

double prune_threshold(const LayerScores& scores, double p_t,
                       ThresholdMode mode) {
  std::vector<double> flat;
  for (const auto& layer : scores) flat.insert(flat.end(), layer.begin(),
                                               layer.end());
  if (flat.empty()) throw ConfigError("prune threshold: empty network");
  if (mode == ThresholdMode::kLiteral) {
    return std::accumulate(flat.begin(), flat.end(), 0.0) * p_t;
  }
  const auto count = static_cast<std::size_t>(
      std::ceil(p_t * static_cast<double>(flat.size()) - 1e-12));
  if (count == 0) return -std::numeric_limits<double>::infinity();
  std::sort(flat.begin(), flat.end());
  return flat[std::min(count, flat.size()) - 1];
}

PruneReport update_masks(MaskedDenseNetwork& net, const LayerScores& scores,
                         double psi, ThresholdMode mode,
                         std::size_t min_per_layer) {
  if (scores.size() != net.num_hidden_layers()) {
    throw DimensionError("update_masks: score layers != hidden layers");
  }
  PruneReport report;
  for (std::size_t h = 0; h < scores.size(); ++h) {
    const std::size_t width = net.sizes()[h + 1];
    if (scores[h].size() != width) {
      throw DimensionError("update_masks: score width mismatch");
    }
    std::vector<std::size_t> candidates;
    std::size_t live = 0;
    for (std::size_t n = 0; n < width; ++n) {
      if (!net.alive(h, n)) continue;
      ++live;
      const double s = scores[h][n];
      const bool below = mode == ThresholdMode::kRank ? s <= psi : s < psi;
      if (below) candidates.push_back(n);
    }
    const std::size_t floor = std::min(min_per_layer, live);
    const std::size_t max_prune = live - floor;
    if (candidates.size() > max_prune) {
      // Keep the highest-scoring candidates; ties resolved by index.
      std::stable_sort(candidates.begin(), candidates.end(),
                       [&](std::size_t a, std::size_t b) {
                         return scores[h][a] < scores[h][b];
                       });
      candidates.resize(max_prune);
      std::sort(candidates.begin(), candidates.end());
    }
    for (std::size_t n : candidates) {
      net.set_mask(h, n, false);
      report.pruned.emplace_back(h, n);
    }
  }
  if (mode == ThresholdMode::kRank) {
    // Neurons a floored layer could not give up are taken from the lowest
    // remaining scores elsewhere, so the global count still matches psi.
    std::size_t target = 0;
    for (const auto& layer : scores) {
      for (double s : layer) target += s <= psi;
    }
    const std::size_t masked =
        net.hidden_neuron_count() - net.live_hidden_neuron_count();
    if (masked < target) {
      std::vector<std::size_t> live(scores.size(), 0);
      std::vector<std::pair<std::size_t, std::size_t>> spare;
      for (std::size_t h = 0; h < scores.size(); ++h) {
        for (std::size_t n = 0; n < net.sizes()[h + 1]; ++n) {
          if (!net.alive(h, n)) continue;
          ++live[h];
          spare.emplace_back(h, n);
        }
      }
      std::stable_sort(spare.begin(), spare.end(),
                       [&](const auto& a, const auto& b) {
                         return scores[a.first][a.second] <
                                scores[b.first][b.second];
                       });
      std::size_t need = target - masked;
      for (const auto& [h, n] : spare) {
        if (need == 0) break;
        if (live[h] <= min_per_layer) continue;
        net.set_mask(h, n, false);
        report.pruned.emplace_back(h, n);
        --live[h];
        --need;
      }
    }
  }
  report.sparsity = net.sparsity();
  return report;
}

MaskedDenseNetwork compact(const MaskedDenseNetwork& net) {
  const std::size_t layers = net.sizes().size();
  std::vector<std::vector<std::size_t>> keep(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t n = 0; n < net.sizes()[l]; ++n) {
      const bool hidden = l > 0 && l + 1 < layers;
      if (!hidden || net.alive(l - 1, n)) keep[l].push_back(n);
    }
    if (keep[l].empty()) {
      throw ConfigError("compact: hidden layer " + std::to_string(l - 1) +
                        " is fully masked");
    }
  }
  std::vector<std::size_t> sizes;
  for (const auto& k : keep) sizes.push_back(k.size());
  std::mt19937_64 unused(0);
  MaskedDenseNetwork out(sizes, net.hidden_activation(), unused, 1.0,
                         net.output_activation());
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    for (std::size_t r = 0; r < keep[l + 1].size(); ++r) {
      out.bias(l, r) = net.bias(l, keep[l + 1][r]);
      for (std::size_t c = 0; c < keep[l].size(); ++c) {
        out.weight(l, r, c) = net.weight(l, keep[l + 1][r], keep[l][c]);
      }
    }
  }
  return out;
}

double importance_regularizer(const MaskedDenseNetwork& net, double lambda,
                              double current_weight, std::span<double> grad) {
  const double scale = lambda * current_weight;
  double value = 0.0;
  const auto& sizes = net.sizes();
  for (std::size_t h = 0; h < net.num_hidden_layers(); ++h) {
    const std::size_t in = sizes[h];
    const std::size_t out = sizes[h + 2];
    for (std::size_t n = 0; n < sizes[h + 1]; ++n) {
      if (!net.alive(h, n)) continue;
      double incoming = 0.0;
      for (std::size_t c = 0; c < in; ++c) {
        incoming += net.weight(h, n, c) * net.weight(h, n, c);
      }
      double outgoing = 0.0;
      for (std::size_t r = 0; r < out; ++r) {
        outgoing += net.weight(h + 1, r, n) * net.weight(h + 1, r, n);
      }
      value += scale * incoming * outgoing;
      if (grad.empty()) continue;
      for (std::size_t c = 0; c < in; ++c) {
        grad[net.weight_index(h, n, c)] +=
            scale * 2.0 * net.weight(h, n, c) * outgoing;
      }
      for (std::size_t r = 0; r < out; ++r) {
        grad[net.weight_index(h + 1, r, n)] +=
            scale * 2.0 * net.weight(h + 1, r, n) * incoming;
      }
    }
  }
  return value;
}

}  // namespace tinyma
