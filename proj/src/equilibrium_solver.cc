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

#include "tinyma/equilibrium_solver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace tinyma {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double clamp_price(double p, const RsuProfile& rsu) {
  return std::clamp(p, rsu.unit_cost, rsu.price_cap);
}

// Exact best response from precomputed matching probabilities.
double best_response_with_theta(std::size_t av, std::size_t rsu,
                                std::span<const double> prices,
                                std::span<const double> theta,
                                const Matrix& b, const GameInstance& game) {
  const AvProfile& a = game.avs[av];
  double coupling = 0.0;
  for (std::size_t k = 0; k < game.num_avs(); ++k) {
    if (k != av) coupling += game.social(av, k) * b(k, rsu);
  }
  for (std::size_t s = 0; s < game.num_rsus(); ++s) {
    if (s != rsu) {
      coupling += game.service(rsu, s) * b(av, s) *
                  (1.0 + theta[s] / theta[rsu]);
    }
  }
  const double net_price = prices[rsu] - coupling;
  if (!(net_price > 0)) {
    std::ostringstream os;
    os << "follower_best_response: price " << prices[rsu]
       << " does not exceed marginal coupling " << coupling << " at (av "
       << av << ", rsu " << rsu << "); utility is unbounded";
    throw DomainError(os.str());
  }
  return std::max(0.0, a.satisfaction / net_price - a.log_offset());
}

}  // namespace

BestResponseTerms best_response_terms(std::size_t av, std::size_t rsu,
                                      const StrategyProfile& profile,
                                      const GameInstance& game) {
  const auto theta =
      matching_probabilities(game.qoe_vector(), profile.prices);
  const Matrix& b = profile.bandwidth;
  const AvProfile& a = game.avs[av];
  double social = 0.0;
  for (std::size_t k = 0; k < game.num_avs(); ++k) {
    if (k != av) social += game.social(av, k) * b(k, rsu);
  }
  double service = 0.0;
  double service_marginal = 0.0;
  for (std::size_t s = 0; s < game.num_rsus(); ++s) {
    if (s == rsu) continue;
    service += game.service(rsu, s) * b(av, s);
    service_marginal +=
        game.service(rsu, s) * b(av, s) * (1.0 + theta[s] / theta[rsu]);
  }
  BestResponseTerms terms;
  terms.aggregate = a.satisfaction * (1.0 + social + service);
  terms.offset = a.log_offset();
  terms.marginal_coupling = social + service_marginal;
  return terms;
}

double follower_gradient(std::size_t av, std::size_t rsu,
                         const StrategyProfile& profile,
                         const GameInstance& game) {
  const auto theta =
      matching_probabilities(game.qoe_vector(), profile.prices);
  const BestResponseTerms t = best_response_terms(av, rsu, profile, game);
  const double arg = profile.bandwidth(av, rsu) + t.offset;
  if (!(arg > 0)) {
    throw DomainError("follower_gradient: log argument <= 0 at (av " +
                      std::to_string(av) + ", rsu " + std::to_string(rsu) +
                      ")");
  }
  return theta[rsu] * (game.avs[av].satisfaction / arg + t.marginal_coupling -
                       profile.prices[rsu]);
}

double follower_best_response(std::size_t av, std::size_t rsu,
                              const StrategyProfile& profile,
                              const GameInstance& game) {
  const auto theta =
      matching_probabilities(game.qoe_vector(), profile.prices);
  return best_response_with_theta(av, rsu, profile.prices, theta,
                                  profile.bandwidth, game);
}

FollowerNashResult solve_follower_nash(std::span<const double> prices,
                                       const GameInstance& game,
                                       const FollowerNashOptions& options,
                                       const Matrix* warm_start) {
  const std::size_t v = game.num_avs();
  const std::size_t r = game.num_rsus();
  if (prices.size() != r) {
    throw DimensionError("solve_follower_nash: price vector length mismatch");
  }
  const auto theta = matching_probabilities(game.qoe_vector(), prices);
  const double damping = game.has_coupling() ? options.damping : 1.0;

  FollowerNashResult result;
  result.bandwidth = warm_start ? *warm_start : Matrix(v, r, 0.0);
  Matrix& b = result.bandwidth;
  Matrix response(v, r);
  std::vector<double> trajectory;

  for (int iter = 0; iter <= options.max_iters; ++iter) {
    double residual = 0.0;
    if (options.mode == SweepMode::kJacobi) {
      for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
          response(i, j) = best_response_with_theta(i, j, prices, theta, b,
                                                    game);
        }
      }
      residual = response.max_abs_diff(b);
      if (residual < options.tol) {
        result.residual = residual;
        return result;
      }
      if (iter == options.max_iters) {
        trajectory.push_back(residual);
        break;
      }
      for (std::size_t k = 0; k < b.size(); ++k) {
        b.data()[k] =
            (1.0 - damping) * b.data()[k] + damping * response.data()[k];
      }
    } else {
      // Gauss-Seidel: residual is measured on the pre-update values of the
      // sweep, updates are applied in place.
      const std::size_t n = v * r;
      for (std::size_t step = 0; step < n; ++step) {
        const std::size_t flat = options.reverse_order ? n - 1 - step : step;
        const std::size_t i = flat / r;
        const std::size_t j = flat % r;
        const double br = best_response_with_theta(i, j, prices, theta, b,
                                                   game);
        residual = std::max(residual, std::abs(br - b(i, j)));
        if (iter < options.max_iters) {
          b(i, j) = (1.0 - damping) * b(i, j) + damping * br;
        }
      }
      if (residual < options.tol) {
        // The sweep moved entries by less than damping * tol.
        result.residual = residual;
        return result;
      }
      if (iter == options.max_iters) {
        trajectory.push_back(residual);
        break;
      }
    }
    trajectory.push_back(residual);
    result.iterations = iter + 1;
  }
  std::ostringstream os;
  os << "solve_follower_nash: no convergence after " << options.max_iters
     << " sweeps, last residual " << trajectory.back();
  throw ConvergenceError(os.str(), std::move(trajectory));
}

bool price_condition_holds(std::span<const double> prices,
                           const GameInstance& game) {
  for (const auto& a : game.avs) {
    const double denom = a.delay_sensitivity * a.max_delay - std::numbers::e;
    if (denom <= 0) continue;
    for (double p : prices) {
      if (!(p < a.satisfaction / denom)) return false;
    }
  }
  return true;
}

std::vector<std::string> equilibrium_assumption_warnings(
    const StrategyProfile& profile, const GameInstance& game) {
  std::vector<std::string> warnings;
  if (!price_condition_holds(profile.prices, game)) {
    warnings.emplace_back(
        "price condition p_j < delta_i / (alpha_i T_i - e) violated; "
        "follower equilibrium may not be unique");
  }
  const Matrix& b = profile.bandwidth;
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    for (std::size_t j = 0; j < game.num_rsus(); ++j) {
      double net = 0.0;
      for (std::size_t k = 0; k < game.num_avs(); ++k) {
        if (k != i) net += game.social(i, k) * b(i, j) * b(k, j);
      }
      for (std::size_t s = 0; s < game.num_rsus(); ++s) {
        if (s != j) net += game.service(j, s) * b(i, j) * b(i, s);
      }
      if (net < 0) {
        std::ostringstream os;
        os << "net coupling " << net << " < 0 at (av " << i << ", rsu " << j
           << "); substitution outweighs complementarity";
        warnings.push_back(os.str());
      }
    }
  }
  return warnings;
}

LeaderResponse leader_closed_form_response(std::size_t rsu,
                                           std::span<const double> prices,
                                           const Matrix& bandwidth,
                                           const GameInstance& game) {
  const RsuProfile& self = game.rsus[rsu];
  const double q = self.qoe;
  const double c = self.unit_cost;
  double others = 0.0;  // G = sum_{l != j} q_l y_l
  for (std::size_t l = 0; l < game.num_rsus(); ++l) {
    if (l != rsu) others += game.rsus[l].qoe / prices[l];
  }
  StrategyProfile profile;
  profile.prices.assign(prices.begin(), prices.end());
  profile.bandwidth = bandwidth;

  auto root = [&](double aggregate, double offset) {
    const double radicand =
        (others + q / c) * (others + offset * q / aggregate);
    if (radicand < 0 || !(aggregate > 0)) {
      std::ostringstream os;
      os << "leader closed form: negative radicand " << radicand
         << " (rsu " << rsu << ", G=" << others << ", A=" << aggregate
         << ", E=" << offset << ")";
      throw DomainError(os.str());
    }
    return (others - std::sqrt(radicand)) / (-q);
  };
  auto to_price = [&](double omega) {
    if (!(omega > 0)) return self.price_cap;
    return clamp_price(1.0 / omega, self);
  };

  double aggregate_sum = 0.0;
  double offset_sum = 0.0;
  double literal_omega = 0.0;
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    const BestResponseTerms t = best_response_terms(i, rsu, profile, game);
    aggregate_sum += t.aggregate;
    offset_sum += t.offset;
    literal_omega += root(t.aggregate, t.offset);
  }
  LeaderResponse out;
  out.closed_form_price = to_price(root(aggregate_sum, offset_sum));
  out.literal_closed_form_price = to_price(literal_omega);
  out.price = out.closed_form_price;
  return out;
}

double leader_composed_utility(std::size_t rsu, double price,
                               std::span<const double> prices,
                               const GameInstance& game,
                               const FollowerNashOptions& inner,
                               const Matrix* warm_start) {
  StrategyProfile profile;
  profile.prices.assign(prices.begin(), prices.end());
  profile.prices[rsu] = price;
  try {
    profile.bandwidth =
        solve_follower_nash(profile.prices, game, inner, warm_start)
            .bandwidth;
  } catch (const DomainError&) {
    return kNegInf;
  } catch (const ConvergenceError&) {
    return kNegInf;
  }
  return leader_utility(rsu, profile, game);
}

LeaderResponse leader_best_response(std::size_t rsu,
                                    std::span<const double> prices,
                                    const GameInstance& game,
                                    const LeaderResponseOptions& options) {
  const RsuProfile& self = game.rsus[rsu];
  const double lo = self.unit_cost;
  const double hi = self.price_cap;

  const Matrix current =
      solve_follower_nash(prices, game, options.inner).bandwidth;
  LeaderResponse out =
      leader_closed_form_response(rsu, prices, current, game);

  auto utility = [&](double p) {
    return leader_composed_utility(rsu, p, prices, game, options.inner,
                                   &current);
  };

  // Coarse scan plus the closed-form candidate; smallest index wins ties.
  const int n = std::max(options.scan_points, 3);
  std::vector<double> grid(n);
  for (int k = 0; k < n; ++k) {
    grid[k] = lo + (hi - lo) * static_cast<double>(k) / (n - 1);
  }
  int best = 0;
  double best_value = kNegInf;
  for (int k = 0; k < n; ++k) {
    const double u = utility(grid[k]);
    if (u > best_value) {
      best_value = u;
      best = k;
    }
  }
  double a = grid[std::max(best - 1, 0)];
  double b = grid[std::min(best + 1, n - 1)];
  const double cf_value = utility(out.closed_form_price);
  if (cf_value > best_value) {
    best_value = cf_value;
    const double step = (hi - lo) / (n - 1);
    a = std::max(lo, out.closed_form_price - step);
    b = std::min(hi, out.closed_form_price + step);
  }

  // Polish: root of the central-difference derivative inside [a, b]. The
  // composed utility is smooth wherever the follower active set is fixed.
  const double h = options.derivative_step;
  auto slope = [&](double p) {
    const double up = std::min(p + h, hi);
    const double dn = std::max(p - h, lo);
    return (utility(up) - utility(dn)) / (up - dn);
  };
  double best_price = a + (b - a) * 0.5;
  double sa = slope(a);
  double sb = slope(b);
  if (std::isfinite(sa) && std::isfinite(sb) && sa > 0 && sb < 0) {
    for (int it = 0; it < 200 && b - a > 1e-14 * (1.0 + std::abs(a)); ++it) {
      const double m = 0.5 * (a + b);
      const double sm = slope(m);
      if (!std::isfinite(sm)) break;
      if (sm > 0) {
        a = m;
      } else {
        b = m;
      }
    }
    best_price = 0.5 * (a + b);
  } else {
    // Boundary optimum or a kink: golden-section on the values.
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - g * (b - a);
    double x2 = a + g * (b - a);
    double f1 = utility(x1);
    double f2 = utility(x2);
    for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
      if (f1 >= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - g * (b - a);
        f1 = utility(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + g * (b - a);
        f2 = utility(x2);
      }
    }
    best_price = 0.5 * (a + b);
    for (double edge : {lo, hi}) {
      if (utility(edge) >= utility(best_price)) best_price = edge;
    }
  }
  const double polished = utility(best_price);
  if (polished >= best_value) {
    out.price = best_price;
    out.utility = polished;
  } else {
    // The scan point is better than anything found locally.
    out.price = best_value == cf_value ? out.closed_form_price : grid[best];
    out.utility = best_value;
  }
  return out;
}

double substituted_leader_utility(std::size_t rsu, std::span<const double> y,
                                  double aggregate_sum, double offset_sum,
                                  const GameInstance& game) {
  double denom = 0.0;
  for (std::size_t l = 0; l < game.num_rsus(); ++l) {
    denom += game.rsus[l].qoe * y[l];
  }
  const double q = game.rsus[rsu].qoe;
  const double c = game.rsus[rsu].unit_cost;
  const double yj = y[rsu];
  const double a = aggregate_sum;
  const double e = offset_sum;
  return (-a * q * c * yj * yj + a * q * yj + e * q * c * yj - e * q) / denom;
}

double DeviationProbe::max_gain() const {
  double m = kNegInf;
  for (double g : follower_gain) m = std::max(m, g);
  for (double g : leader_gain) m = std::max(m, g);
  return m;
}

DeviationProbe probe_unilateral_deviations(const StrategyProfile& equilibrium,
                                           const GameInstance& game,
                                           int points,
                                           const FollowerNashOptions& inner) {
  const std::size_t v = game.num_avs();
  const std::size_t r = game.num_rsus();
  DeviationProbe probe;
  probe.follower_gain.assign(v, kNegInf);
  probe.leader_gain.assign(r, kNegInf);
  const int n = std::max(points, 2);

  for (std::size_t i = 0; i < v; ++i) {
    const double base = follower_utility(i, equilibrium, game);
    StrategyProfile trial = equilibrium;
    std::vector<double> upper(r);
    for (std::size_t j = 0; j < r; ++j) {
      const double b = equilibrium.bandwidth(i, j);
      upper[j] = b > 0 ? 2.0 * b : 1.0;
    }
    // Full product grid when affordable, coordinate-wise otherwise.
    const double cells = std::pow(static_cast<double>(n), r);
    const double floor_b =
        std::max(0.0, -game.avs[i].log_offset() + 1e-9);
    auto eval = [&]() {
      for (std::size_t j = 0; j < r; ++j) {
        if (trial.bandwidth(i, j) < floor_b) return kNegInf;
      }
      return follower_utility(i, trial, game) - base;
    };
    double gain = kNegInf;
    if (cells <= static_cast<double>(1 << 20)) {
      std::vector<int> idx(r, 0);
      while (true) {
        for (std::size_t j = 0; j < r; ++j) {
          trial.bandwidth(i, j) = upper[j] * idx[j] / (n - 1);
        }
        gain = std::max(gain, eval());
        std::size_t d = 0;
        while (d < r && ++idx[d] == n) idx[d++] = 0;
        if (d == r) break;
      }
    } else {
      for (std::size_t j = 0; j < r; ++j) {
        trial.bandwidth = equilibrium.bandwidth;
        for (int k = 0; k < n; ++k) {
          trial.bandwidth(i, j) = upper[j] * k / (n - 1);
          gain = std::max(gain, eval());
        }
      }
    }
    probe.follower_gain[i] = gain;
  }

  for (std::size_t j = 0; j < r; ++j) {
    const double base = leader_utility(j, equilibrium, game);
    const RsuProfile& rsu = game.rsus[j];
    double gain = kNegInf;
    for (int k = 0; k < n; ++k) {
      const double p =
          rsu.unit_cost + (rsu.price_cap - rsu.unit_cost) * k / (n - 1);
      const double u = leader_composed_utility(j, p, equilibrium.prices, game,
                                               inner, &equilibrium.bandwidth);
      gain = std::max(gain, u - base);
    }
    probe.leader_gain[j] = gain;
  }
  return probe;
}

StrategyProfile EquilibriumReport::profile() const {
  StrategyProfile p;
  p.prices = prices;
  p.bandwidth = bandwidth;
  return p;
}

EquilibriumReport solve_stackelberg(const GameInstance& game,
                                    const StackelbergOptions& options) {
  game.validate();
  const std::size_t r = game.num_rsus();
  EquilibriumReport report;
  std::vector<double> prices(r);
  for (std::size_t j = 0; j < r; ++j) {
    prices[j] = 0.5 * (game.rsus[j].unit_cost + game.rsus[j].price_cap);
  }

  bool converged = false;
  std::vector<LeaderResponse> responses(r);
  for (int outer = 0; outer < options.max_outer; ++outer) {
    // Jacobi over leaders: every response reads the previous price vector.
    std::vector<double> next(r);
    for (std::size_t j = 0; j < r; ++j) {
      responses[j] = leader_best_response(j, prices, game, options.leader);
      next[j] = (1.0 - options.leader_damping) * prices[j] +
                options.leader_damping * responses[j].price;
    }
    double residual = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      residual = std::max(residual, std::abs(next[j] - prices[j]));
    }
    prices = next;
    report.residual_trajectory.push_back(residual);
    report.iterations = outer + 1;
    report.residual = residual;
    if (residual < options.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "solve_stackelberg: no convergence after " << options.max_outer
       << " outer iterations, last residual " << report.residual;
    throw ConvergenceError(os.str(), report.residual_trajectory);
  }

  report.prices = prices;
  report.bandwidth =
      solve_follower_nash(prices, game, options.follower).bandwidth;
  const StrategyProfile profile = report.profile();
  for (std::size_t i = 0; i < game.num_avs(); ++i) {
    report.follower_utilities.push_back(follower_utility(i, profile, game));
    report.delay_feasible.push_back(
        expected_delay(i, profile, game) <= game.avs[i].max_delay);
  }
  for (std::size_t j = 0; j < r; ++j) {
    report.leader_utilities.push_back(leader_utility(j, profile, game));
    const LeaderResponse cf =
        leader_closed_form_response(j, prices, report.bandwidth, game);
    report.closed_form_prices.push_back(cf.closed_form_price);
    report.literal_closed_form_prices.push_back(cf.literal_closed_form_price);
    if (std::abs(cf.closed_form_price - prices[j]) > 1e-6) {
      std::ostringstream os;
      os << "rsu " << j << ": closed-form price " << cf.closed_form_price
         << " differs from the equilibrium price " << prices[j];
      report.warnings.push_back(os.str());
    }
    if (std::abs(cf.literal_closed_form_price - prices[j]) > 1e-6) {
      std::ostringstream os;
      os << "rsu " << j << ": literal per-AV-summed closed form gives "
         << cf.literal_closed_form_price << " vs equilibrium " << prices[j];
      report.warnings.push_back(os.str());
    }
  }
  report.social_welfare = social_welfare(profile, game);
  for (auto& w : equilibrium_assumption_warnings(profile, game)) {
    report.warnings.push_back(std::move(w));
  }
  if (options.run_probe) {
    const DeviationProbe probe = probe_unilateral_deviations(
        profile, game, options.probe_points, options.leader.inner);
    report.follower_max_improvement = probe.follower_gain;
    report.leader_max_improvement = probe.leader_gain;
  }
  return report;
}

StandardFunctionReport standard_function_check(const ResponseMap& response,
                                               const DomainSampler& sampler,
                                               std::size_t n_samples,
                                               std::uint64_t seed) {
  StandardFunctionReport report;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto witness = [&](const std::string& kind, std::size_t sample,
                     std::size_t coord, double lhs, double rhs) {
    if (report.witnesses.size() >= 16) return;
    std::ostringstream os;
    os << kind << " violated at sample " << sample << ", coordinate "
       << coord << ": " << lhs << " vs " << rhs;
    report.witnesses.push_back(os.str());
  };

  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::vector<double> x = sampler(rng);
    const std::vector<double> fx = response(x);
    ++report.samples;

    bool positive = true;
    for (std::size_t k = 0; k < fx.size(); ++k) {
      if (!(fx[k] > 0)) {
        positive = false;
        witness("positivity", s, k, fx[k], 0.0);
        break;
      }
    }
    if (!positive) ++report.positivity_violations;

    // B' = B + non-negative bump, strictly positive in one coordinate.
    std::vector<double> bumped = x;
    const std::size_t strict = static_cast<std::size_t>(
        unit(rng) * static_cast<double>(x.size())) % x.size();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double scale = 0.25 * (std::abs(x[k]) + 1.0);
      const double bump = unit(rng) * scale;
      bumped[k] += (k == strict) ? std::max(bump, 1e-3 * scale) : bump;
    }
    const std::vector<double> fbumped = response(bumped);
    for (std::size_t k = 0; k < fx.size(); ++k) {
      if (fbumped[k] < fx[k] - 1e-12 * (1.0 + std::abs(fx[k]))) {
        ++report.monotonicity_violations;
        witness("monotonicity", s, k, fbumped[k], fx[k]);
        break;
      }
    }

    const double factor = 1.0 + 1e-3 + unit(rng);
    std::vector<double> scaled = x;
    for (double& v : scaled) v *= factor;
    const std::vector<double> fscaled = response(scaled);
    for (std::size_t k = 0; k < fx.size(); ++k) {
      if (!(factor * fx[k] > fscaled[k])) {
        ++report.scalability_violations;
        witness("scalability", s, k, factor * fx[k], fscaled[k]);
        break;
      }
    }
  }
  return report;
}

ResponseMap follower_response_map(std::vector<double> prices,
                                  const GameInstance& game) {
  return [prices = std::move(prices), &game](std::span<const double> flat) {
    const std::size_t v = game.num_avs();
    const std::size_t r = game.num_rsus();
    const auto theta = matching_probabilities(game.qoe_vector(), prices);
    Matrix b(v, r);
    std::copy(flat.begin(), flat.end(), b.data().begin());
    std::vector<double> out(v * r);
    for (std::size_t i = 0; i < v; ++i) {
      for (std::size_t j = 0; j < r; ++j) {
        out[i * r + j] =
            best_response_with_theta(i, j, prices, theta, b, game);
      }
    }
    return out;
  };
}

ResponseMap leader_response_map(const GameInstance& game) {
  return [&game](std::span<const double> y) {
    const std::size_t r = game.num_rsus();
    std::vector<double> prices(r);
    for (std::size_t j = 0; j < r; ++j) prices[j] = 1.0 / y[j];
    const Matrix b = solve_follower_nash(prices, game).bandwidth;
    std::vector<double> out(r);
    for (std::size_t j = 0; j < r; ++j) {
      out[j] = 1.0 /
               leader_closed_form_response(j, prices, b, game).closed_form_price;
    }
    return out;
  };
}

}  // namespace tinyma
