// Run configuration: presets, dotted-key overrides, environment-variable
// overrides, JSON round-trips, and validation.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tbqn/config.h"

using namespace tbqn;
using doctest::Approx;

TEST_CASE("presets: the first-attempt recipe and the final recipe") {
  RunConfig base = preset_config("baseline-fig4");
  CHECK(base.model.layer_kind == 1);
  CHECK(base.model.dropout_rate == Approx(0.1));
  CHECK(base.model.num_heads == 4);
  CHECK(base.model.model_dim == 64);
  CHECK(base.model.num_layers == 3);
  CHECK(base.model.ff_dim == 256);
  CHECK(base.model.history == 5);
  CHECK(!base.model.depth_scaled_init);
  CHECK(base.agent.loss_kind == LossKind::Mse);
  CHECK(base.agent.lr == Approx(1e-5));
  CHECK(base.agent.lr_schedule == LrScheduleKind::Constant);
  CHECK(base.agent.epsilon == Approx(0.1));
  CHECK(base.agent.epsilon_decay_steps == 0);
  CHECK(!base.agent.grad_clip.has_value());
  CHECK(base.agent.gamma == Approx(0.99));
  CHECK(base.agent.batch_size == 32);
  CHECK(base.agent.buffer_capacity == 100000);
  CHECK(base.agent.initial_collect_steps == 1000);
  CHECK(base.agent.target_update_period == 100);
  CHECK(base.agent.tau == Approx(1.0));
  CHECK(!base.agent.double_q);
  CHECK(!base.agent.env_normalize);

  RunConfig fin = preset_config("final-table3");
  CHECK(fin.model.layer_kind == 3);
  CHECK(fin.model.dropout_rate == Approx(0.0));
  CHECK(fin.model.depth_scaled_init);
  CHECK(!fin.model.depth_scaled_last_layer);
  CHECK(fin.agent.loss_kind == LossKind::Huber);
  CHECK(fin.agent.lr == Approx(1e-4));
  CHECK(fin.agent.epsilon == Approx(1.0));
  CHECK(fin.agent.epsilon_final == Approx(0.05));
  CHECK(fin.agent.epsilon_decay_steps == 5000);
  REQUIRE(fin.agent.grad_clip.has_value());
  CHECK(*fin.agent.grad_clip == Approx(1.0));
  CHECK(fin.agent.env_normalize);

  CHECK_THROWS_AS(preset_config("does-not-exist"), ConfigError);

  bool has_base = false, has_fin = false;
  for (const auto& n : preset_names()) {
    if (n == "baseline-fig4") has_base = true;
    if (n == "final-table3") has_fin = true;
  }
  CHECK(has_base);
  CHECK(has_fin);
}

TEST_CASE("apply_override: every section, clip sentinel, errors") {
  RunConfig cfg;
  apply_override(cfg, "agent.lr", "0.00025");
  CHECK(cfg.agent.lr == Approx(2.5e-4));
  apply_override(cfg, "model.num_layers", "5");
  CHECK(cfg.model.num_layers == 5);
  apply_override(cfg, "model.layer_kind", "6");
  CHECK(cfg.model.layer_kind == 6);
  apply_override(cfg, "agent.loss", "mse");
  CHECK(cfg.agent.loss_kind == LossKind::Mse);
  apply_override(cfg, "agent.double_q", "true");
  CHECK(cfg.agent.double_q);
  apply_override(cfg, "env", "acrobot");
  CHECK(cfg.env == "acrobot");
  apply_override(cfg, "total_steps", "1234");
  CHECK(cfg.total_steps == 1234);

  apply_override(cfg, "agent.grad_clip", "2.5");
  REQUIRE(cfg.agent.grad_clip.has_value());
  CHECK(*cfg.agent.grad_clip == Approx(2.5));
  apply_override(cfg, "agent.grad_clip", "none");
  CHECK(!cfg.agent.grad_clip.has_value());

  CHECK_THROWS_AS(apply_override(cfg, "agent.unknown_field", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "agent.lr", "not-a-number"), ConfigError);

  RunConfig c2;
  apply_overrides(c2, {"agent.lr=3e-4", "model.num_heads=8"});
  CHECK(c2.agent.lr == Approx(3e-4));
  CHECK(c2.model.num_heads == 8);
  CHECK_THROWS_AS(apply_overrides(c2, {"missing-equals"}), ConfigError);
}

TEST_CASE("config JSON: render, parse, and round-trip stability") {
  RunConfig cfg = preset_config("final-table3");
  cfg.env = "mountaincar";
  cfg.total_steps = 2500;
  cfg.agent.seed = 17;

  const std::string text = resolved_config_json(cfg);
  RunConfig back = parse_run_config(text);
  CHECK(back.env == "mountaincar");
  CHECK(back.total_steps == 2500);
  CHECK(back.model.layer_kind == 3);
  CHECK(back.agent.epsilon_decay_steps == 5000);
  CHECK(resolved_config_json(back) == text);

  // grad_clip renders as null when disabled, and parses back as disabled
  RunConfig noclip = preset_config("baseline-fig4");
  const std::string nc_text = resolved_config_json(noclip);
  CHECK(nc_text.find("\"grad_clip\": null") != std::string::npos);
  CHECK(!parse_run_config(nc_text).agent.grad_clip.has_value());

  // a partial config file only touches the listed fields
  RunConfig partial = parse_run_config(R"({"agent": {"lr": 0.5}})");
  CHECK(partial.agent.lr == Approx(0.5));
  CHECK(partial.model.model_dim == RunConfig{}.model.model_dim);

  // the preset field seeds the defaults before other fields apply
  RunConfig preset_plus = parse_run_config(R"({"preset": "final-table3", "agent": {"lr": 0.007}})");
  CHECK(preset_plus.model.layer_kind == 3);
  CHECK(preset_plus.agent.lr == Approx(0.007));

  CHECK_THROWS_AS(parse_run_config("{invalid json"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), IoError);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tbqn_cfg_roundtrip.json").string();
  save_resolved_config(path, cfg);
  RunConfig loaded = load_run_config(path);
  CHECK(resolved_config_json(loaded) == text);
  fs::remove(path);
}

TEST_CASE("environment variable overrides: TBQN_* mapping, sorted, kernels excluded") {
  setenv("TBQN_AGENT_LR", "0.000125", 1);
  setenv("TBQN_MODEL_NUM_LAYERS", "2", 1);
  setenv("TBQN_KERNELS", "scalar", 1);  // kernel selection, not a config key
  auto pairs = env_overrides();
  unsetenv("TBQN_AGENT_LR");
  unsetenv("TBQN_MODEL_NUM_LAYERS");
  unsetenv("TBQN_KERNELS");

  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "agent.lr");
  CHECK(pairs[0].second == "0.000125");
  CHECK(pairs[1].first == "model.num_layers");
  CHECK(pairs[1].second == "2");

  RunConfig cfg;
  for (const auto& [k, v] : pairs) apply_override(cfg, k, v);
  CHECK(cfg.agent.lr == Approx(1.25e-4));
  CHECK(cfg.model.num_layers == 2);
}

TEST_CASE("validation: bad values are rejected with config errors") {
  RunConfig cfg;
  cfg.env = "cartpole";
  cfg.model.state_dim = 4;
  cfg.model.num_actions = 2;
  cfg.validate();

  RunConfig bad = cfg;
  bad.total_steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.agent.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.agent.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.agent.buffer_capacity = 8;
  bad.agent.batch_size = 32;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.model.model_dim = 63;  // odd width cannot host sin/cos position pairs
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.model.num_heads = 5;  // must divide model_dim
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.agent.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.agent.grad_clip = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
