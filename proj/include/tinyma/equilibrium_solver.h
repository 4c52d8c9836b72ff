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

#ifndef TINYMA_EQUILIBRIUM_SOLVER_H_
#define TINYMA_EQUILIBRIUM_SOLVER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tinyma/game_model.h"

// Backward-induction solver for the leader/follower game: follower Nash
// equilibrium by damped best-response iteration, leader best responses
// against the re-solved follower equilibrium, and numerical checks of the
// equilibrium definition.
namespace tinyma {

struct BestResponseTerms {
  // delta_i * (1 + sum_k zeta_ik b_kj + sum_s eta_js b_is)
  double aggregate = 0.0;
  // e - alpha_i T_i^max
  double offset = 0.0;
  // Marginal coupling benefit K_ij = dU/db_ij contributions from the
  // bilinear terms, divided by theta_j. The exact first-order condition is
  // delta_i / (b + offset) = p_j - K_ij.
  double marginal_coupling = 0.0;
};

BestResponseTerms best_response_terms(std::size_t av, std::size_t rsu,
                                      const StrategyProfile& profile,
                                      const GameInstance& game);

// Exact partial derivative dU_i^F / db_ij.
double follower_gradient(std::size_t av, std::size_t rsu,
                         const StrategyProfile& profile,
                         const GameInstance& game);

// Maximiser of U_i^F over b_ij >= 0 with everything else held fixed.
// Throws DomainError when p_j <= K_ij (utility unbounded in b_ij).
double follower_best_response(std::size_t av, std::size_t rsu,
                              const StrategyProfile& profile,
                              const GameInstance& game);

enum class SweepMode { kJacobi, kGaussSeidel };

struct FollowerNashOptions {
  double tol = 1e-8;
  int max_iters = 10000;
  double damping = 0.5;  // b <- (1 - damping) b + damping BR(b)
  SweepMode mode = SweepMode::kJacobi;
  bool reverse_order = false;  // Gauss-Seidel visiting order
};

struct FollowerNashResult {
  Matrix bandwidth;
  int iterations = 0;      // number of update sweeps applied
  double residual = 0.0;   // max |BR(B) - B| at the returned point
};

// Damped best-response iteration. Games without coupling use an undamped
// update (the response map is constant). Throws ConvergenceError carrying
// the residual trajectory when max_iters is exhausted.
FollowerNashResult solve_follower_nash(std::span<const double> prices,
                                       const GameInstance& game,
                                       const FollowerNashOptions& options = {},
                                       const Matrix* warm_start = nullptr);

// Uniqueness condition p_j < delta_i / (alpha_i T_i - e), enforced only
// where alpha_i T_i > e.
bool price_condition_holds(std::span<const double> prices,
                           const GameInstance& game);

// Human-readable warnings about assumptions behind the uniqueness argument
// (price condition, positive net coupling at the given bandwidth).
std::vector<std::string> equilibrium_assumption_warnings(
    const StrategyProfile& profile, const GameInstance& game);

struct LeaderResponse {
  double price = 0.0;
  double utility = 0.0;
  // Closed-form candidate with the follower aggregates summed inside the
  // root (clamped to [c_j, p_max]).
  double closed_form_price = 0.0;
  // The printed sum over AVs of per-AV roots, mapped to a price.
  double literal_closed_form_price = 0.0;
};

struct LeaderResponseOptions {
  int scan_points = 64;
  double derivative_step = 1e-5;
  FollowerNashOptions inner{1e-14, 20000, 0.5, SweepMode::kJacobi, false};
};

// Closed-form candidate only (no polishing against the follower game).
// Throws DomainError on a negative radicand.
LeaderResponse leader_closed_form_response(std::size_t rsu,
                                           std::span<const double> prices,
                                           const Matrix& bandwidth,
                                           const GameInstance& game);

// Utility of leader `rsu` at price p when every follower re-equilibrates.
// Returns -infinity where the follower game has no bounded equilibrium.
double leader_composed_utility(std::size_t rsu, double price,
                               std::span<const double> prices,
                               const GameInstance& game,
                               const FollowerNashOptions& inner,
                               const Matrix* warm_start = nullptr);

LeaderResponse leader_best_response(std::size_t rsu,
                                    std::span<const double> prices,
                                    const GameInstance& game,
                                    const LeaderResponseOptions& options = {});

// Leader utility after substituting interior follower responses, written in
// y = 1/p with the follower aggregates summed over AVs. Used for concavity
// checks in y_rsu.
double substituted_leader_utility(std::size_t rsu, std::span<const double> y,
                                  double aggregate_sum, double offset_sum,
                                  const GameInstance& game);

struct DeviationProbe {
  std::vector<double> follower_gain;  // best grid improvement per AV
  std::vector<double> leader_gain;    // best grid improvement per RSU
  double max_gain() const;
};

// Searches single-agent deviations on a grid of `points` per coordinate.
// Followers deviate over [0, 2 b*_ij] with the rest of the profile fixed;
// leaders deviate over [c_j, p_max] with followers re-equilibrating.
DeviationProbe probe_unilateral_deviations(
    const StrategyProfile& equilibrium, const GameInstance& game,
    int points = 512, const FollowerNashOptions& inner = {1e-14, 20000});

struct StackelbergOptions {
  double tol = 1e-8;
  int max_outer = 500;
  double leader_damping = 1.0;
  int probe_points = 512;
  bool run_probe = true;
  FollowerNashOptions follower{1e-12, 10000};
  LeaderResponseOptions leader;
};

struct EquilibriumReport {
  std::vector<double> prices;
  Matrix bandwidth;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_trajectory;
  std::vector<double> follower_utilities;
  std::vector<double> leader_utilities;
  double social_welfare = 0.0;
  std::vector<double> follower_max_improvement;
  std::vector<double> leader_max_improvement;
  std::vector<bool> delay_feasible;
  std::vector<double> closed_form_prices;
  std::vector<double> literal_closed_form_prices;
  std::vector<std::string> warnings;

  StrategyProfile profile() const;
};

EquilibriumReport solve_stackelberg(const GameInstance& game,
                                    const StackelbergOptions& options = {});

struct StandardFunctionReport {
  std::size_t samples = 0;
  std::size_t positivity_violations = 0;
  std::size_t monotonicity_violations = 0;
  std::size_t scalability_violations = 0;
  std::vector<std::string> witnesses;  // first few violations, readable

  std::size_t total_violations() const {
    return positivity_violations + monotonicity_violations +
           scalability_violations;
  }
};

using ResponseMap =
    std::function<std::vector<double>(std::span<const double>)>;
using DomainSampler = std::function<std::vector<double>(std::mt19937_64&)>;

// Samples points X from `sampler` and tests positivity X(B) > 0,
// monotonicity (B' >= B, strict somewhere => X(B') >= X(B)) and scalability
// (x > 1 => x X(B) > X(x B)).
StandardFunctionReport standard_function_check(const ResponseMap& response,
                                               const DomainSampler& sampler,
                                               std::size_t n_samples,
                                               std::uint64_t seed = 0);

// B -> BR(B) over all (i, j), flattened row-major, prices fixed.
ResponseMap follower_response_map(std::vector<double> prices,
                                  const GameInstance& game);

// Y -> H(Y): leader closed-form responses in y = 1/p with bandwidth from the
// follower equilibrium at 1/Y.
ResponseMap leader_response_map(const GameInstance& game);

}  // namespace tinyma

#endif  // TINYMA_EQUILIBRIUM_SOLVER_H_
