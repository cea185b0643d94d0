#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbqn/agent.h"
#include "tbqn/config.h"
#include "tbqn/hpo.h"

namespace tbqn {

struct TrainArtifacts {
  RunConfig config;  // fully resolved (environment dims filled in)
  MetricsLog log;
  std::string metrics_path;
  std::string config_path;
  std::string final_checkpoint;
  std::string best_checkpoint;
};

// Fill model dims from the environment, validate, train, and write
// metrics.csv, config.json, final.ckpt and best.ckpt under cfg.out_dir.
// Divergence is recorded in the log, not thrown. on_eval (if set) fires
// after each in-training evaluation, e.g. for progress output.
TrainArtifacts run_train(RunConfig cfg, const std::function<void(const MetricsRow&)>& on_eval = {});

// Rebuild the network from the checkpoint's embedded spec and run greedy
// episodes. env_name empty → the environment recorded in the checkpoint.
EvalStats run_eval(const std::string& checkpoint_path, std::string env_name, int episodes,
                   std::uint64_t seed);

// Objective used by searches: base config + sampled overrides (sample keys
// are dotted config keys), trained for `steps`; score = mean return of the
// last 10 completed training episodes. Safe to call from worker threads.
Objective training_objective(RunConfig base, const SearchSpace& space, long long steps);

struct SearchArtifacts {
  std::vector<TrialRecord> records;
  ImportanceReport importance;
  StudyTwoReport report;
  std::string trials_path;
  std::string importance_path;
  std::string marginals_path;
};

// run_study over real training runs, then importance + marginal reports;
// trials.csv, importance.csv, marginals.csv written under out_dir. With
// fewer than 10 trials the importance file carries only a header comment.
SearchArtifacts run_search(const SearchSpace& space, const StudyOptions& opts,
                           const RunConfig& base, const std::string& out_dir);

struct DimensionVariant {
  int history;
  int model_dim;
  int ff_dim;
  int num_layers;
  std::string tag() const;  // e.g. "h5_d64_ff256_l3"
};

// The five shipped size variants exercised for stability-at-scale checks.
std::vector<DimensionVariant> dimension_variants();

struct VariantOutcome {
  DimensionVariant variant{};
  std::uint64_t seed = 0;
  double best_return = 0.0;
  double final_return = 0.0;
  bool diverged = false;
  std::string metrics_path;
  std::string error;  // nonempty if the run failed outright
};

// Train the stabilized recipe across all dimension variants × runs (seeds
// base_seed..base_seed+runs-1), fanned out to `workers` threads. Writes one
// metrics file per (variant, seed) plus a combined variants.csv in out_dir.
std::vector<VariantOutcome> run_variants(const std::string& env, long long steps,
                                         std::uint64_t base_seed, int runs, int workers,
                                         const std::string& out_dir);

}  // namespace tbqn
