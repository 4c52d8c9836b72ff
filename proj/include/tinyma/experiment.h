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

#ifndef TINYMA_EXPERIMENT_H_
#define TINYMA_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tinyma/equilibrium_solver.h"
#include "tinyma/game_model.h"
#include "tinyma/mappo_trainer.h"
#include "tinyma/pomdp_env.h"
#include "tinyma/pruning.h"

namespace tinyma {

inline constexpr int kCsvSchemaVersion = 1;

enum class CouplingMode { kRandom, kUniform, kExplicit };

struct InstanceSpec {
  std::size_t num_avs = 3;
  std::size_t num_rsus = 2;
  std::uint64_t seed = 1;
  // Relative half-width of the seeded profile perturbations; 0 (or
  // symmetric = true) gives identical agents.
  double perturbation = 0.2;
  bool symmetric = false;
  RsuProfile rsu;
  AvProfile av;
  ChannelParams channel;
  double rsu_spacing = 200.0;  // m, RSUs on the x axis
  double av_spacing = 60.0;    // m
  double av_start_x = 50.0;
  double av_y = 30.0;

  CouplingMode coupling = CouplingMode::kRandom;
  double social_min = 0.0;
  double social_max = 0.02;
  double service_min = -0.01;
  double service_max = 0.02;
  double social_value = 0.01;   // uniform mode
  double service_value = 0.005;  // uniform mode
  Matrix social;   // explicit mode
  Matrix service;  // explicit mode

  InstanceSpec();
};

// Builds, validates and (for random coupling) rescales the couplings until
// the price condition holds at the warm-up prices.
GameInstance build_instance(const InstanceSpec& spec);

// Symmetric copy of `spec` with the given agent counts and uniform coupling.
InstanceSpec symmetric_spec(const InstanceSpec& spec, std::size_t num_avs,
                            std::size_t num_rsus);

struct SolverSettings {
  double tol = 1e-8;
  int max_outer = 500;
  int probe_points = 512;
  bool run_probe = true;

  StackelbergOptions options() const;
};

struct ExperimentConfig {
  InstanceSpec instance;
  EnvConfig env;
  TrainConfig train;
  PruneConfig prune;
  SolverSettings solver;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";
  Algorithm algorithm = Algorithm::kTinyMaIeiPpo;
  int eval_episodes = 20;
  std::string checkpoint;  // eval input; "" = <output_dir>/checkpoint_<seed>.txt
  std::vector<Algorithm> sweep_algorithms;  // learned/baseline rows per cell
  int threads = 1;

  ExperimentConfig();
};

// Unknown keys and type mismatches throw ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);
// Validates every section against the built instance.
void validate_config(const ExperimentConfig& config);

// Shortest round-trip decimal form used in every CSV.
std::string format_double(double v);
// "# tinyma-<kind> schema v<N>"
std::string schema_line(const std::string& kind);

struct CommandOutput {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

// Writes equilibrium.csv and equilibrium_summary.txt. Throws
// ConvergenceError when the solver fails.
EquilibriumReport cmd_solve(const ExperimentConfig& config,
                            const std::string& out_dir, CommandOutput* out);
void write_equilibrium_csv(const EquilibriumReport& report, std::ostream& os);

// One run per seed: metrics_<seed>.csv, prune_<seed>.csv,
// checkpoint_<seed>.txt and compact_<seed>_agent<k>.txt.
std::vector<TrainResult> cmd_train(const ExperimentConfig& config,
                                   const std::string& out_dir,
                                   CommandOutput* out);
void write_metrics_csv(const TrainResult& result, std::size_t num_rsus,
                       std::size_t num_avs, std::ostream& os);
void write_prune_csv(const TrainResult& result, std::ostream& os);

// Frozen learners from the checkpoint (learning algorithms) or the
// baseline policy; writes eval.csv with a gap-to-SE column.
EvalResult cmd_eval(const ExperimentConfig& config, const std::string& out_dir,
                    std::uint64_t seed, CommandOutput* out);

enum class SweepAxis { kNumAvs, kNumRsus };
SweepAxis sweep_axis_from_name(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepRow {
  std::size_t value = 0;
  std::string algorithm;  // "se" for the analytic equilibrium
  double avg_av_reward = 0.0;
  double avg_rsu_reward = 0.0;
  double social_welfare = 0.0;
  bool ok = true;
  std::string error;
};

// Analytic SE for every value plus each configured sweep algorithm on
// symmetric instances. Cell failures are recorded, not thrown.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config,
                                SweepAxis axis,
                                const std::vector<std::size_t>& values,
                                const std::string& out_dir,
                                CommandOutput* out);

}  // namespace tinyma

#endif  // TINYMA_EXPERIMENT_H_
