#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tbqn/errors.h"
#include "tbqn/rng.h"

namespace tbqn {

struct ParamSpec {
  enum class Kind { Categorical, Uniform, LogUniform, IntUniform };
  std::string name;
  Kind kind = Kind::Uniform;
  std::vector<std::string> values;  // categorical only
  double lo = 0.0, hi = 0.0;        // numeric kinds; int bounds inclusive

  void validate() const;
};

struct SearchSpace {
  std::vector<ParamSpec> params;
  const ParamSpec* find(const std::string& name) const;
  void validate() const;
};

// Structured text: {"params":[{"name":..., "kind":"categorical|uniform|log_uniform|int_uniform", ...}]}
SearchSpace load_search_space(const std::string& path);
SearchSpace parse_search_space(const std::string& json_text);

// One sampled value. Numeric kinds live in `num` (IntUniform integer-valued);
// Categorical holds the index into ParamSpec::values.
struct ParamValue {
  double num = 0.0;
  int cat_index = -1;
};

using Sample = std::map<std::string, ParamValue>;

std::string param_value_to_string(const ParamSpec& spec, const ParamValue& v);

struct TrialRecord {
  int trial_index = 0;
  Sample sample;
  std::map<std::string, double> env_scores;  // env name -> avg return of last 10 episodes
  double score = 0.0;                        // mean across environments
  bool diverged = false;
  std::uint64_t seed = 0;
  long long steps_trained = 0;
};

Sample sample_random(const SearchSpace& space, Rng& rng);

struct TpeOptions {
  int startup_trials = 10;      // below this, fall back to random sampling
  double gamma_quantile = 0.25; // top fraction forming the "good" density
  int n_candidates = 24;
};

// Split history at the gamma quantile by score (higher is better), fit Parzen
// densities l (good) and g (bad) per parameter, draw candidates from l, and
// keep the candidate maximizing l/g. Gaussian kernels for numeric parameters
// (log10 space for LogUniform), Laplace-smoothed frequencies for categorical.
Sample sample_tpe(const SearchSpace& space, const std::vector<TrialRecord>& history,
                  const TpeOptions& opts, Rng& rng);

struct RunOutcome {
  double score = 0.0;
  bool diverged = false;
};

// Trains one configuration once in one environment; must be thread-safe.
using Objective = std::function<RunOutcome(const Sample&, const std::string& env, int run_index,
                                           std::uint64_t seed)>;

struct StudyOptions {
  std::string sampler = "random";  // "random" | "tpe"
  int n_trials = 1;
  std::vector<std::string> envs;
  long long steps = 0;  // recorded into TrialRecord::steps_trained
  int runs_per_sample = 1;
  int workers = 1;
  std::uint64_t seed = 0;
  TpeOptions tpe;
};

// Samples sequentially (so TPE sees a deterministic history) and fans the
// env x run grid of each trial out to a worker pool. Per-run failures are
// recorded, never fatal.
std::vector<TrialRecord> run_study(const SearchSpace& space, const StudyOptions& opts,
                                   const Objective& objective);

struct ImportanceReport {
  std::vector<std::string> param_names;
  std::map<std::string, std::vector<double>> per_env;  // env -> normalized importance per param
  std::vector<double> averaged;                        // arithmetic mean of the per-env views
};

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 8;
};

// Mean-decrease-impurity importances from a bootstrapped regression-tree
// ensemble (variance impurity, sqrt-feature subsampling per split).
// Categorical parameters are one-hot encoded and their importances summed
// back. Needs >= 10 records.
ImportanceReport mdi_importance(const std::vector<TrialRecord>& records, const SearchSpace& space,
                                const ForestOptions& opts, Rng& rng);

struct MarginalRow {
  std::string param;
  std::string value;  // category / integer / numeric quartile-bin label
  double mean_score = 0.0;
  int count = 0;
};

struct StudyTwoReport {
  std::vector<MarginalRow> marginals;
  std::map<std::string, std::vector<int>> top_per_env;  // env -> trial indices, best first
};

StudyTwoReport study_two_report(const std::vector<TrialRecord>& records, const SearchSpace& space,
                                int top_k = 5);

void write_trials_csv(const std::string& path, const std::vector<TrialRecord>& records,
                      const SearchSpace& space, const std::vector<std::string>& envs);
void write_importance_csv(const std::string& path, const ImportanceReport& report);
void write_marginals_csv(const std::string& path, const StudyTwoReport& report);

}  // namespace tbqn
