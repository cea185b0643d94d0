// tbqn — command-line lab for transformer-based Q-networks.
//   train    run one training job and write metrics + checkpoints
//   eval     load a checkpoint and run greedy evaluation episodes
//   search   hyperparameter study: sampling, importance, marginal reports
//   variants train the stabilized recipe across the shipped size variants
//
// Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tbqn/drivers.h"
#include "tbqn/kernels.h"
#include "tbqn/textio.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::string env;
  long long steps = -1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::string> sets;
  std::string out;
};

// precedence: preset/config file < process environment < --set < dedicated flags
tbqn::RunConfig resolve_config(const CommonFlags& f) {
  tbqn::RunConfig cfg;
  if (!f.config_path.empty())
    cfg = tbqn::load_run_config(f.config_path);
  else if (!f.preset.empty())
    cfg = tbqn::preset_config(f.preset);
  for (const auto& [key, value] : tbqn::env_overrides()) tbqn::apply_override(cfg, key, value);
  tbqn::apply_overrides(cfg, f.sets);
  if (!f.env.empty()) cfg.env = f.env;
  if (f.steps >= 0) cfg.total_steps = f.steps;
  if (f.seed_given) cfg.agent.seed = f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  return cfg;
}

void add_config_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--preset", f.preset, "named preset (baseline-fig4, final-table3)")
      ->excludes("--config");
  cmd->add_option("--set", f.sets, "dotted-key override, e.g. agent.lr=1e-4")->take_all();
}

int cmd_train(const CommonFlags& f) {
  tbqn::RunConfig cfg = resolve_config(f);
  std::cout << "train env=" << cfg.env << " steps=" << cfg.total_steps
            << " seed=" << cfg.agent.seed << " kernels=" << tbqn::kernels::active().name << "\n";
  auto art = tbqn::run_train(cfg, [](const tbqn::MetricsRow& row) {
    std::cout << "step=" << row.step << " avg_return=" << tbqn::fmt_double(row.avg_return)
              << " loss=" << tbqn::fmt_double(row.loss) << " eps=" << tbqn::fmt_double(row.epsilon)
              << "\n"
              << std::flush;
  });
  std::cout << "wrote " << art.config_path << "\n";
  std::cout << "wrote " << art.metrics_path << "\n";
  std::cout << "wrote " << art.final_checkpoint << "\n";
  std::cout << "wrote " << art.best_checkpoint << "\n";
  if (art.log.diverged) {
    std::cout << "diverged at step " << art.log.diverged_at_step << "\n";
    return kExitDiverged;
  }
  std::cout << "best_avg_return=" << tbqn::fmt_double(art.log.best_avg_return)
            << " final_avg_return=" << tbqn::fmt_double(art.log.final_avg_return) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& env, int episodes,
             std::uint64_t seed) {
  tbqn::EvalStats s = tbqn::run_eval(checkpoint, env, episodes, seed);
  std::cout << "episodes=" << episodes << " mean=" << tbqn::fmt_double(s.mean)
            << " std=" << tbqn::fmt_double(s.stddev) << " min=" << tbqn::fmt_double(s.min)
            << " max=" << tbqn::fmt_double(s.max) << "\n";
  return kExitOk;
}

int cmd_search(const CommonFlags& f, const std::string& space_path, const std::string& sampler,
               int trials, int runs, int workers, const std::vector<std::string>& envs) {
  tbqn::SearchSpace space = tbqn::load_search_space(space_path);
  tbqn::RunConfig base = resolve_config(f);

  tbqn::StudyOptions opts;
  opts.sampler = sampler;
  opts.n_trials = trials;
  opts.envs = envs.empty() ? std::vector<std::string>{base.env} : envs;
  opts.steps = f.steps >= 0 ? f.steps : 5000;
  opts.runs_per_sample = runs;
  opts.workers = workers;
  opts.seed = f.seed_given ? f.seed : base.agent.seed;

  const std::string out_dir = f.out.empty() ? "runs/search" : f.out;
  std::cout << "search sampler=" << opts.sampler << " trials=" << opts.n_trials
            << " steps=" << opts.steps << " runs=" << opts.runs_per_sample
            << " workers=" << opts.workers << " seed=" << opts.seed << "\n";
  auto art = tbqn::run_search(space, opts, base, out_dir);
  std::cout << "wrote " << art.trials_path << "\n";
  std::cout << "wrote " << art.importance_path << "\n";
  std::cout << "wrote " << art.marginals_path << "\n";
  return kExitOk;
}

int cmd_variants(const CommonFlags& f, int runs, int workers) {
  const std::string env = f.env.empty() ? "cartpole" : f.env;
  const long long steps = f.steps >= 0 ? f.steps : 50000;
  const std::string out_dir = f.out.empty() ? "runs/variants" : f.out;
  auto outcomes =
      tbqn::run_variants(env, steps, f.seed_given ? f.seed : 1, runs, workers, out_dir);
  int failures = 0;
  for (const auto& o : outcomes) {
    std::cout << o.variant.tag() << " seed=" << o.seed;
    if (!o.error.empty()) {
      std::cout << " error=" << o.error << "\n";
      ++failures;
      continue;
    }
    std::cout << " best_return=" << tbqn::fmt_double(o.best_return)
              << " final_return=" << tbqn::fmt_double(o.final_return)
              << (o.diverged ? " diverged" : "") << "\n";
  }
  std::cout << "wrote " << out_dir << "/variants.csv\n";
  return failures == static_cast<int>(outcomes.size()) && !outcomes.empty() ? kExitConfig : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformer-based Q-network laboratory"};
  app.require_subcommand(1);

  CommonFlags train_f;
  CLI::App* train = app.add_subcommand("train", "train one agent and write metrics + checkpoints");
  add_config_flags(train, train_f);
  train->add_option("--env", train_f.env, "environment (cartpole, mountaincar, acrobot)");
  train->add_option("--steps", train_f.steps, "environment steps to train");
  train->add_option("--seed", train_f.seed, "run seed")->each([&](const std::string&) {
    train_f.seed_given = true;
  });
  train->add_option("--out", train_f.out, "output directory");

  std::string eval_ckpt, eval_env;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  CLI::App* ev = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--env", eval_env, "environment (default: the one in the checkpoint)");
  ev->add_option("--episodes", eval_episodes, "number of greedy episodes");
  ev->add_option("--seed", eval_seed, "evaluation seed");

  CommonFlags search_f;
  std::string space_path, sampler = "random";
  int trials = 30, search_runs = 1, search_workers = 1;
  std::vector<std::string> search_envs;
  CLI::App* search = app.add_subcommand("search", "hyperparameter study over a search space");
  add_config_flags(search, search_f);
  search->add_option("--space", space_path, "search space JSON")->required();
  search->add_option("--sampler", sampler, "random or tpe")
      ->check(CLI::IsMember({"random", "tpe"}));
  search->add_option("--trials", trials, "number of sampled configurations");
  search->add_option("--runs", search_runs, "training runs per sample (scores averaged)");
  search->add_option("--workers", search_workers, "worker threads for the env x run grid");
  search->add_option("--env", search_envs, "environment(s); repeatable")->take_all();
  search->add_option("--steps", search_f.steps, "training steps per run");
  search->add_option("--seed", search_f.seed, "study seed")->each([&](const std::string&) {
    search_f.seed_given = true;
  });
  search->add_option("--out", search_f.out, "output directory");

  CommonFlags var_f;
  int var_runs = 3, var_workers = 1;
  CLI::App* variants = app.add_subcommand("variants", "train the shipped size variants side by side");
  variants->add_option("--env", var_f.env, "environment");
  variants->add_option("--steps", var_f.steps, "training steps per run");
  variants->add_option("--seed", var_f.seed, "base seed (runs use seed, seed+1, ...)")
      ->each([&](const std::string&) { var_f.seed_given = true; });
  variants->add_option("--runs", var_runs, "seeds per variant");
  variants->add_option("--workers", var_workers, "worker threads");
  variants->add_option("--out", var_f.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_f);
    if (ev->parsed()) return cmd_eval(eval_ckpt, eval_env, eval_episodes, eval_seed);
    if (search->parsed())
      return cmd_search(search_f, space_path, sampler, trials, search_runs, search_workers,
                        search_envs);
    if (variants->parsed()) return cmd_variants(var_f, var_runs, var_workers);
  } catch (const tbqn::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const tbqn::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const tbqn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tbqn::ContractError& e) {
    std::cerr << "internal contract violation: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
