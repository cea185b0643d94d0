#include "tbqn/drivers.h"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include <json.hpp>

#include "tbqn/textio.h"

namespace fs = std::filesystem;

namespace tbqn {

namespace {

using nlohmann::json;

// single-line provenance block embedded in every checkpoint
std::string checkpoint_meta(const RunConfig& cfg) {
  json m;
  m["env"] = cfg.env;
  m["env_normalize"] = cfg.agent.env_normalize;
  m["preset"] = cfg.preset;
  json s;
  s["history"] = cfg.model.history;
  s["state_dim"] = cfg.model.state_dim;
  s["model_dim"] = cfg.model.model_dim;
  s["num_heads"] = cfg.model.num_heads;
  s["num_layers"] = cfg.model.num_layers;
  s["ff_dim"] = cfg.model.ff_dim;
  s["num_actions"] = cfg.model.num_actions;
  s["layer_kind"] = cfg.model.layer_kind;
  s["dropout_rate"] = cfg.model.dropout_rate;
  s["outer_dropout"] = cfg.model.outer_dropout;
  s["depth_scaled_init"] = cfg.model.depth_scaled_init;
  s["depth_scaled_last_layer"] = cfg.model.depth_scaled_last_layer;
  m["model"] = std::move(s);
  return m.dump();
}

QNetworkSpec spec_from_meta(const json& s) {
  QNetworkSpec m;
  m.history = s.at("history").get<int>();
  m.state_dim = s.at("state_dim").get<int>();
  m.model_dim = s.at("model_dim").get<int>();
  m.num_heads = s.at("num_heads").get<int>();
  m.num_layers = s.at("num_layers").get<int>();
  m.ff_dim = s.at("ff_dim").get<int>();
  m.num_actions = s.at("num_actions").get<int>();
  m.layer_kind = s.at("layer_kind").get<int>();
  m.dropout_rate = s.at("dropout_rate").get<double>();
  m.outer_dropout = s.at("outer_dropout").get<bool>();
  m.depth_scaled_init = s.at("depth_scaled_init").get<bool>();
  m.depth_scaled_last_layer = s.at("depth_scaled_last_layer").get<bool>();
  return m;
}

}  // namespace

TrainArtifacts run_train(RunConfig cfg, const std::function<void(const MetricsRow&)>& on_eval) {
  auto env = make_env(cfg.env);
  cfg.model.state_dim = env->spec().state_dim;
  cfg.model.num_actions = env->spec().num_actions;
  cfg.validate();

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());

  TrainArtifacts art;
  art.config = cfg;
  art.config_path = (fs::path(cfg.out_dir) / "config.json").string();
  art.metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  art.final_checkpoint = (fs::path(cfg.out_dir) / "final.ckpt").string();
  art.best_checkpoint = (fs::path(cfg.out_dir) / "best.ckpt").string();
  save_resolved_config(art.config_path, cfg);

  DqnAgent agent(cfg.model, cfg.agent, cfg.agent.seed);
  const std::string meta = checkpoint_meta(cfg);

  double best_seen = -std::numeric_limits<double>::infinity();
  auto eval_hook = [&](const MetricsRow& row) {
    if (row.avg_return > best_seen) {
      best_seen = row.avg_return;
      save_qnet(art.best_checkpoint, meta, agent.online());
    }
    if (on_eval) on_eval(row);
  };

  art.log = run_training(*env, agent, cfg.total_steps, cfg.eval_every, eval_hook);

  write_metrics_csv(art.metrics_path, art.log);
  save_qnet(art.final_checkpoint, meta, agent.online());
  if (!fs::exists(art.best_checkpoint)) save_qnet(art.best_checkpoint, meta, agent.online());
  return art;
}

EvalStats run_eval(const std::string& checkpoint_path, std::string env_name, int episodes,
                   std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("eval: episodes must be >= 1");
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  json meta;
  try {
    meta = json::parse(ck.meta);
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + checkpoint_path + "' carries unreadable metadata: " + e.what());
  }
  const QNetworkSpec spec = spec_from_meta(meta.at("model"));
  const bool env_normalize = meta.at("env_normalize").get<bool>();
  if (env_name.empty()) env_name = meta.at("env").get<std::string>();

  const auto env = make_env(env_name);
  if (env->spec().state_dim != spec.state_dim || env->spec().num_actions != spec.num_actions)
    throw ConfigError("checkpoint expects state_dim=" + std::to_string(spec.state_dim) +
                      ", num_actions=" + std::to_string(spec.num_actions) + " but environment '" +
                      env_name + "' provides state_dim=" + std::to_string(env->spec().state_dim) +
                      ", num_actions=" + std::to_string(env->spec().num_actions));

  QNet net(spec, 0);
  load_qnet(net, ck);
  return evaluate_policy(net, env_name, episodes, seed, env_normalize);
}

Objective training_objective(RunConfig base, const SearchSpace& space, long long steps) {
  base.total_steps = steps;
  return [base, space, steps](const Sample& sample, const std::string& env_name, int /*run*/,
                              std::uint64_t seed) -> RunOutcome {
    RunConfig cfg = base;
    cfg.env = env_name;
    cfg.total_steps = steps;
    for (const auto& [name, value] : sample) {
      const ParamSpec* p = space.find(name);
      if (p == nullptr) throw ConfigError("objective: sampled parameter '" + name + "' not in space");
      apply_override(cfg, name, param_value_to_string(*p, value));
    }
    cfg.agent.seed = seed;

    auto env = make_env(cfg.env);
    cfg.model.state_dim = env->spec().state_dim;
    cfg.model.num_actions = env->spec().num_actions;
    cfg.validate();

    DqnAgent agent(cfg.model, cfg.agent, cfg.agent.seed);
    MetricsLog log = run_training(*env, agent, cfg.total_steps, /*eval_every=*/0);
    return {last_episodes_mean(log, 10), log.diverged};
  };
}

SearchArtifacts run_search(const SearchSpace& space, const StudyOptions& opts,
                           const RunConfig& base, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

  SearchArtifacts art;
  art.trials_path = (fs::path(out_dir) / "trials.csv").string();
  art.importance_path = (fs::path(out_dir) / "importance.csv").string();
  art.marginals_path = (fs::path(out_dir) / "marginals.csv").string();

  art.records = run_study(space, opts, training_objective(base, space, opts.steps));
  write_trials_csv(art.trials_path, art.records, space, opts.envs);

  if (art.records.size() >= 10) {
    Rng imp_rng(opts.seed, 0x1377);
    art.importance = mdi_importance(art.records, space, ForestOptions{}, imp_rng);
    write_importance_csv(art.importance_path, art.importance);
  } else {
    std::ofstream out(art.importance_path);
    if (!out) throw IoError("cannot open '" + art.importance_path + "' for writing");
    out << "param,importance\n# importance needs >= 10 trials, study had "
        << art.records.size() << "\n";
  }

  art.report = study_two_report(art.records, space, 5);
  write_marginals_csv(art.marginals_path, art.report);
  return art;
}

std::string DimensionVariant::tag() const {
  return "h" + std::to_string(history) + "_d" + std::to_string(model_dim) + "_ff" +
         std::to_string(ff_dim) + "_l" + std::to_string(num_layers);
}

std::vector<DimensionVariant> dimension_variants() {
  return {
      {5, 64, 256, 3},
      {5, 64, 256, 6},
      {3, 64, 256, 3},
      {7, 64, 256, 3},
      {5, 128, 512, 3},
  };
}

std::vector<VariantOutcome> run_variants(const std::string& env_name, long long steps,
                                         std::uint64_t base_seed, int runs, int workers,
                                         const std::string& out_dir) {
  if (runs < 1) throw ConfigError("variants: runs must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

  const auto variants = dimension_variants();
  const int n_jobs = static_cast<int>(variants.size()) * runs;
  const long long eval_every = std::min<long long>(1000, std::max<long long>(1, steps / 5));

  std::vector<VariantOutcome> outcomes(static_cast<std::size_t>(n_jobs));
  std::vector<MetricsLog> logs(static_cast<std::size_t>(n_jobs));
  std::atomic<int> next_job{0};

  auto worker = [&] {
    while (true) {
      const int job = next_job.fetch_add(1);
      if (job >= n_jobs) return;
      const DimensionVariant v = variants[static_cast<std::size_t>(job) / static_cast<std::size_t>(runs)];
      const int run = job % runs;
      VariantOutcome& out = outcomes[static_cast<std::size_t>(job)];
      out.variant = v;
      out.seed = base_seed + static_cast<std::uint64_t>(run);
      out.metrics_path =
          (fs::path(out_dir) / (v.tag() + "_seed" + std::to_string(out.seed) + ".csv")).string();
      try {
        RunConfig cfg = preset_config("final-table3");
        cfg.env = env_name;
        cfg.total_steps = steps;
        cfg.model.history = v.history;
        cfg.model.model_dim = v.model_dim;
        cfg.model.ff_dim = v.ff_dim;
        cfg.model.num_layers = v.num_layers;
        cfg.agent.seed = out.seed;

        auto env = make_env(cfg.env);
        cfg.model.state_dim = env->spec().state_dim;
        cfg.model.num_actions = env->spec().num_actions;
        cfg.validate();

        DqnAgent agent(cfg.model, cfg.agent, cfg.agent.seed);
        MetricsLog log = run_training(*env, agent, steps, eval_every);
        write_metrics_csv(out.metrics_path, log);
        out.best_return = log.best_avg_return;
        out.final_return = log.final_avg_return;
        out.diverged = log.diverged;
        logs[static_cast<std::size_t>(job)] = std::move(log);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };

  const int n_threads = std::max(1, std::min(workers, n_jobs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const std::string combined = (fs::path(out_dir) / "variants.csv").string();
  std::ofstream out(combined);
  if (!out) throw IoError("cannot open '" + combined + "' for writing");
  out << "variant,seed,step,avg_return,loss,grad_norm,epsilon,lr\n";
  for (int job = 0; job < n_jobs; ++job) {
    const VariantOutcome& o = outcomes[static_cast<std::size_t>(job)];
    if (!o.error.empty()) continue;
    for (const MetricsRow& r : logs[static_cast<std::size_t>(job)].rows) {
      out << o.variant.tag() << ',' << o.seed << ',' << r.step << ',' << fmt_double(r.avg_return)
          << ',' << fmt_double(r.loss) << ',' << fmt_double(r.grad_norm) << ','
          << fmt_double(r.epsilon) << ',' << fmt_double(r.lr) << "\n";
    }
  }
  if (!out) throw IoError("write failed on '" + combined + "'");
  return outcomes;
}

}  // namespace tbqn
