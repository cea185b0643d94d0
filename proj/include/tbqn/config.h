#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tbqn/agent.h"
#include "tbqn/model.h"

namespace tbqn {

// Everything a training run needs. model.state_dim / model.num_actions are
// filled from the environment when a run starts; a resolved snapshot always
// carries them explicitly.
struct RunConfig {
  std::string env = "cartpole";
  std::string preset;  // name of the preset this config started from, if any
  QNetworkSpec model;
  AgentConfig agent;
  long long total_steps = 50000;
  long long eval_every = 1000;
  int eval_episodes = 10;
  std::string out_dir = "runs/out";

  void validate() const;
};

// Named starting points:
//   "baseline-fig4" — the first-attempt recipe: post-norm layers with dropout,
//                     MSE loss, lr 1e-5, no gradient clipping.
//   "final-table3"  — the stabilized recipe: identity-map-reordered layers,
//                     Huber loss, lr 1e-4, global-norm clipping at 1.0,
//                     depth-scaled initialization.
// Unknown names raise ConfigError. The empty string returns library defaults.
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// JSON file: any subset of fields; a "preset" field is applied first, then
// the file's explicit fields on top.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

// Dotted-key override, e.g. "agent.lr=1e-4", "model.layer_kind=3",
// "agent.grad_clip=none". Unknown key or unparsable value → ConfigError.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// "key=value" strings as given on a command line.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

// Process-environment overrides: TBQN_AGENT_LR=1e-4 → agent.lr,
// TBQN_MODEL_NUM_LAYERS=2 → model.num_layers, TBQN_TOTAL_STEPS → total_steps.
// Returned as (key, value) pairs in a stable (sorted) order.
std::vector<std::pair<std::string, std::string>> env_overrides();

// Full snapshot of every field (JSON, stable key order). Writing it next to a
// run's outputs makes the run reproducible from the snapshot + the seed alone.
std::string resolved_config_json(const RunConfig& cfg);
void save_resolved_config(const std::string& path, const RunConfig& cfg);

}  // namespace tbqn
