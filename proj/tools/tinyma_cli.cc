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

// tinyma command-line driver.
//
//   tinyma solve|train|eval|sweep|pipeline|defaults --config <file>
//       --out <dir> [--seed N] [--algo NAME] [--axis n_avs|n_rsus]
//       [--values 2,3,4,5] [--checkpoint FILE] [--episodes N]
//
// TINYMA_OUTPUT_DIR and TINYMA_THREADS override the output directory and
// sweep worker count (command-line flags win). Exit codes: 0 success,
// 1 run failure, 2 configuration error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tinyma/errors.h"
#include "tinyma/experiment.h"

namespace {

constexpr int kRunFailure = 1;
constexpr int kConfigError = 2;

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string algo;
  std::string axis = "n_avs";
  std::vector<std::size_t> values;
  std::string checkpoint;
  std::optional<int> episodes;
};

void report(const tinyma::CommandOutput& out) {
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : out.files) std::cout << "wrote " << f << "\n";
}

tinyma::ExperimentConfig resolve(const Args& args) {
  tinyma::ExperimentConfig config;
  if (!args.config.empty()) config = tinyma::load_config(args.config);
  if (const char* env = std::getenv("TINYMA_OUTPUT_DIR")) {
    config.output_dir = env;
  }
  if (const char* env = std::getenv("TINYMA_THREADS")) {
    try {
      config.threads = std::stoi(env);
    } catch (const std::exception&) {
      throw tinyma::ConfigError("TINYMA_THREADS must be an integer");
    }
    if (config.threads < 1) {
      throw tinyma::ConfigError("TINYMA_THREADS must be >= 1");
    }
  }
  if (!args.out.empty()) config.output_dir = args.out;
  if (args.seed) config.seeds = {*args.seed};
  if (!args.algo.empty()) {
    config.algorithm = tinyma::algorithm_from_name(args.algo);
  }
  if (!args.checkpoint.empty()) config.checkpoint = args.checkpoint;
  if (args.episodes) {
    if (*args.episodes < 0) throw tinyma::ConfigError("--episodes must be >= 0");
    config.eval_episodes = *args.episodes;
  }
  tinyma::validate_config(config);
  return config;
}

int run(const std::string& command, const Args& args) {
  tinyma::ExperimentConfig config = resolve(args);
  tinyma::CommandOutput out;
  const std::string& dir = config.output_dir;
  if (command == "defaults") {
    std::cout << tinyma::config_to_json(config).dump(2) << "\n";
    return 0;
  }
  if (command == "solve") {
    const auto rep = tinyma::cmd_solve(config, dir, &out);
    report(out);
    std::cout << "converged in " << rep.iterations << " iterations, residual "
              << rep.residual << ", social welfare " << rep.social_welfare
              << "\n";
    return 0;
  }
  if (command == "train") {
    const auto results = tinyma::cmd_train(config, dir, &out);
    report(out);
    for (std::size_t k = 0; k < results.size(); ++k) {
      const auto& m = results[k].metrics;
      std::cout << "seed " << config.seeds[k] << ": " << m.size()
                << " episodes";
      if (!m.empty()) {
        std::cout << ", final social welfare " << m.back().social_welfare
                  << ", sparsity " << m.back().sparsity;
      }
      std::cout << " (" << results[k].wall_seconds << " s)\n";
    }
    return 0;
  }
  if (command == "eval") {
    const auto res = tinyma::cmd_eval(config, dir, config.seeds.front(), &out);
    report(out);
    std::cout << "mean social welfare " << res.mean_social_welfare << "\n";
    for (std::size_t k = 0; k < res.mean_agent_rewards.size(); ++k) {
      std::cout << "agent " << k << " mean reward "
                << res.mean_agent_rewards[k] << "\n";
    }
    return 0;
  }
  if (command == "sweep") {
    if (args.values.empty()) throw tinyma::ConfigError("--values is required");
    const auto rows = tinyma::cmd_sweep(
        config, tinyma::sweep_axis_from_name(args.axis), args.values, dir,
        &out);
    report(out);
    bool any_failed = false;
    for (const auto& r : rows) any_failed = any_failed || !r.ok;
    return any_failed ? kRunFailure : 0;
  }
  if (command == "pipeline") {
    // solve -> train one seed -> eval, all under one output directory.
    config.seeds = {config.seeds.front()};
    if (args.episodes) config.train.episodes = *args.episodes;
    tinyma::cmd_solve(config, dir, &out);
    tinyma::cmd_train(config, dir, &out);
    const auto res = tinyma::cmd_eval(config, dir, config.seeds.front(), &out);
    report(out);
    std::cout << "evaluation mean social welfare " << res.mean_social_welfare
              << "\n";
    return 0;
  }
  throw tinyma::ConfigError("unknown command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyma: bandwidth-trading Stackelberg solver and trainer"};
  app.require_subcommand(1);
  Args args;
  const std::pair<const char*, const char*> commands[] = {
      {"solve", "solve the Stackelberg equilibrium"},
      {"train", "train learners (one run per seed)"},
      {"eval", "evaluate a checkpoint or baseline policy"},
      {"sweep", "equilibrium and per-algorithm rewards over n_avs or n_rsus"},
      {"pipeline", "solve, train and evaluate in one go"},
      {"defaults", "print the default config as JSON"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", args.config, "JSON config file");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--seed", args.seed, "single seed (replaces run.seeds)");
    sub->add_option("--algo", args.algo,
                    "tinyma-iei-ppo | ma-iei-ppo | mappo | greedy | random");
    sub->add_option("--axis", args.axis, "sweep axis: n_avs | n_rsus");
    sub->add_option("--values", args.values, "sweep values")->delimiter(',');
    sub->add_option("--checkpoint", args.checkpoint, "learner checkpoint");
    sub->add_option("--episodes", args.episodes,
                    "evaluation episodes (pipeline: training episodes)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, args);
  } catch (const tinyma::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tinyma::ConvergenceError& e) {
    std::cerr << "solver failed: " << e.what() << "\n";
    const auto& r = e.residuals();
    const std::size_t from = r.size() > 10 ? r.size() - 10 : 0;
    std::cerr << "last residuals:";
    for (std::size_t k = from; k < r.size(); ++k) std::cerr << ' ' << r[k];
    std::cerr << "\n";
    return kRunFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunFailure;
  }
}
