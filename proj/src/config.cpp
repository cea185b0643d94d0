#include "tbqn/config.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tbqn/errors.h"
#include "tbqn/textio.h"

extern char** environ;

namespace tbqn {

void RunConfig::validate() const {
  if (env.empty()) throw ConfigError("config: env name is empty");
  if (total_steps < 1) throw ConfigError("config: total_steps must be >= 1");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (eval_episodes < 1) throw ConfigError("config: eval_episodes must be >= 1");
  if (out_dir.empty()) throw ConfigError("config: out_dir is empty");
  model.validate();
  agent.validate();
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name.empty()) return c;
  if (name == "baseline-fig4") {
    // the first-attempt recipe: everything a vanilla DQN would do, with a
    // plain post-norm encoder — known to train poorly
    c.model.layer_kind = 1;
    c.model.dropout_rate = 0.1;
    c.model.num_heads = 4;
    c.model.model_dim = 64;
    c.model.num_layers = 3;
    c.model.ff_dim = 256;
    c.model.history = 5;
    c.model.depth_scaled_init = false;
    c.model.depth_scaled_last_layer = false;
    c.agent.loss_kind = LossKind::Mse;
    c.agent.lr = 1e-5;
    c.agent.lr_schedule = LrScheduleKind::Constant;
    c.agent.epsilon = 0.1;
    c.agent.epsilon_final = 0.1;
    c.agent.epsilon_decay_steps = 0;
    c.agent.grad_clip.reset();  // no clipping
    c.agent.gamma = 0.99;
    c.agent.batch_size = 32;
    c.agent.buffer_capacity = 100000;
    c.agent.initial_collect_steps = 1000;
    c.agent.target_update_period = 100;
    c.agent.tau = 1.0;
    c.agent.double_q = false;
    c.agent.env_normalize = false;
    return c;
  }
  if (name == "final-table3") {
    // the stabilized recipe: identity-map reordering, clipping, Huber,
    // depth-scaled init, faster learning rate
    c.model.layer_kind = 3;
    c.model.dropout_rate = 0.0;
    c.model.num_heads = 4;
    c.model.model_dim = 64;
    c.model.num_layers = 3;
    c.model.ff_dim = 256;
    c.model.history = 5;
    c.model.depth_scaled_init = true;
    c.model.depth_scaled_last_layer = false;
    c.agent.loss_kind = LossKind::Huber;
    c.agent.lr = 1e-4;
    c.agent.lr_schedule = LrScheduleKind::Constant;
    c.agent.epsilon = 1.0;
    c.agent.epsilon_final = 0.05;
    c.agent.epsilon_decay_steps = 5000;
    c.agent.grad_clip = 1.0;
    c.agent.gamma = 0.99;
    c.agent.batch_size = 32;
    c.agent.buffer_capacity = 100000;
    c.agent.initial_collect_steps = 1000;
    c.agent.target_update_period = 100;
    c.agent.tau = 1.0;
    c.agent.double_q = false;
    c.agent.env_normalize = true;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (known: baseline-fig4, final-table3)");
}

std::vector<std::string> preset_names() { return {"baseline-fig4", "final-table3"}; }

namespace {

using nlohmann::json;

long long to_ll(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

double to_d(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_b(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

void apply_model_json(QNetworkSpec& m, const json& j) {
  if (j.contains("history")) m.history = j["history"].get<int>();
  if (j.contains("state_dim")) m.state_dim = j["state_dim"].get<int>();
  if (j.contains("model_dim")) m.model_dim = j["model_dim"].get<int>();
  if (j.contains("num_heads")) m.num_heads = j["num_heads"].get<int>();
  if (j.contains("num_layers")) m.num_layers = j["num_layers"].get<int>();
  if (j.contains("ff_dim")) m.ff_dim = j["ff_dim"].get<int>();
  if (j.contains("num_actions")) m.num_actions = j["num_actions"].get<int>();
  if (j.contains("layer_kind")) m.layer_kind = j["layer_kind"].get<int>();
  if (j.contains("dropout_rate")) m.dropout_rate = j["dropout_rate"].get<double>();
  if (j.contains("outer_dropout")) m.outer_dropout = j["outer_dropout"].get<bool>();
  if (j.contains("depth_scaled_init")) m.depth_scaled_init = j["depth_scaled_init"].get<bool>();
  if (j.contains("depth_scaled_last_layer"))
    m.depth_scaled_last_layer = j["depth_scaled_last_layer"].get<bool>();
}

void apply_agent_json(AgentConfig& a, const json& j) {
  if (j.contains("loss")) a.loss_kind = loss_kind_from_string(j["loss"].get<std::string>());
  if (j.contains("gamma")) a.gamma = j["gamma"].get<double>();
  if (j.contains("epsilon")) a.epsilon = j["epsilon"].get<double>();
  if (j.contains("epsilon_final")) a.epsilon_final = j["epsilon_final"].get<double>();
  if (j.contains("epsilon_decay_steps")) a.epsilon_decay_steps = j["epsilon_decay_steps"].get<long long>();
  if (j.contains("double_q")) a.double_q = j["double_q"].get<bool>();
  if (j.contains("target_update_period")) a.target_update_period = j["target_update_period"].get<int>();
  if (j.contains("tau")) a.tau = j["tau"].get<double>();
  if (j.contains("grad_clip")) {
    if (j["grad_clip"].is_null())
      a.grad_clip.reset();
    else
      a.grad_clip = j["grad_clip"].get<double>();
  }
  if (j.contains("lr")) a.lr = j["lr"].get<double>();
  if (j.contains("lr_schedule")) a.lr_schedule = lr_schedule_from_string(j["lr_schedule"].get<std::string>());
  if (j.contains("warmup_steps")) a.warmup_steps = j["warmup_steps"].get<long long>();
  if (j.contains("batch_size")) a.batch_size = j["batch_size"].get<int>();
  if (j.contains("initial_collect_steps")) a.initial_collect_steps = j["initial_collect_steps"].get<int>();
  if (j.contains("buffer_capacity")) a.buffer_capacity = j["buffer_capacity"].get<int>();
  if (j.contains("env_normalize")) a.env_normalize = j["env_normalize"].get<bool>();
  if (j.contains("seed")) a.seed = j["seed"].get<std::uint64_t>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  RunConfig c;
  try {
    if (j.contains("preset")) c = preset_config(j["preset"].get<std::string>());
    if (j.contains("env")) c.env = j["env"].get<std::string>();
    if (j.contains("total_steps")) c.total_steps = j["total_steps"].get<long long>();
    if (j.contains("eval_every")) c.eval_every = j["eval_every"].get<long long>();
    if (j.contains("eval_episodes")) c.eval_episodes = j["eval_episodes"].get<int>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("model")) apply_model_json(c.model, j["model"]);
    if (j.contains("agent")) apply_agent_json(c.agent, j["agent"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  // top-level
  if (key == "env") { cfg.env = value; return; }
  if (key == "preset") { const std::string keep_env = cfg.env; cfg = preset_config(value); cfg.env = keep_env; return; }
  if (key == "total_steps") { cfg.total_steps = to_ll(key, value); return; }
  if (key == "eval_every") { cfg.eval_every = to_ll(key, value); return; }
  if (key == "eval_episodes") { cfg.eval_episodes = static_cast<int>(to_ll(key, value)); return; }
  if (key == "out_dir") { cfg.out_dir = value; return; }
  // model.*
  QNetworkSpec& m = cfg.model;
  if (key == "model.history") { m.history = static_cast<int>(to_ll(key, value)); return; }
  if (key == "model.model_dim") { m.model_dim = static_cast<int>(to_ll(key, value)); return; }
  if (key == "model.num_heads") { m.num_heads = static_cast<int>(to_ll(key, value)); return; }
  if (key == "model.num_layers") { m.num_layers = static_cast<int>(to_ll(key, value)); return; }
  if (key == "model.ff_dim") { m.ff_dim = static_cast<int>(to_ll(key, value)); return; }
  if (key == "model.layer_kind") { m.layer_kind = static_cast<int>(to_ll(key, value)); return; }
  if (key == "model.dropout_rate") { m.dropout_rate = to_d(key, value); return; }
  if (key == "model.outer_dropout") { m.outer_dropout = to_b(key, value); return; }
  if (key == "model.depth_scaled_init") { m.depth_scaled_init = to_b(key, value); return; }
  if (key == "model.depth_scaled_last_layer") { m.depth_scaled_last_layer = to_b(key, value); return; }
  // agent.*
  AgentConfig& a = cfg.agent;
  if (key == "agent.loss") { a.loss_kind = loss_kind_from_string(value); return; }
  if (key == "agent.gamma") { a.gamma = to_d(key, value); return; }
  if (key == "agent.epsilon") { a.epsilon = to_d(key, value); return; }
  if (key == "agent.epsilon_final") { a.epsilon_final = to_d(key, value); return; }
  if (key == "agent.epsilon_decay_steps") { a.epsilon_decay_steps = to_ll(key, value); return; }
  if (key == "agent.double_q") { a.double_q = to_b(key, value); return; }
  if (key == "agent.target_update_period") { a.target_update_period = static_cast<int>(to_ll(key, value)); return; }
  if (key == "agent.tau") { a.tau = to_d(key, value); return; }
  if (key == "agent.grad_clip") {
    if (value == "none" || value == "null" || value == "off")
      a.grad_clip.reset();
    else
      a.grad_clip = to_d(key, value);
    return;
  }
  if (key == "agent.lr") { a.lr = to_d(key, value); return; }
  if (key == "agent.lr_schedule") { a.lr_schedule = lr_schedule_from_string(value); return; }
  if (key == "agent.warmup_steps") { a.warmup_steps = to_ll(key, value); return; }
  if (key == "agent.batch_size") { a.batch_size = static_cast<int>(to_ll(key, value)); return; }
  if (key == "agent.initial_collect_steps") { a.initial_collect_steps = static_cast<int>(to_ll(key, value)); return; }
  if (key == "agent.buffer_capacity") { a.buffer_capacity = static_cast<int>(to_ll(key, value)); return; }
  if (key == "agent.env_normalize") { a.env_normalize = to_b(key, value); return; }
  if (key == "agent.seed") { a.seed = static_cast<std::uint64_t>(to_ll(key, value)); return; }
  throw ConfigError("config: unknown override key '" + key + "'");
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  for (const auto& kv : assignments) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config: override must look like key=value, got '" + kv + "'");
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

std::vector<std::pair<std::string, std::string>> env_overrides() {
  static const std::string prefix = "TBQN_";
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    if (entry.compare(0, prefix.size(), prefix) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    const std::string value = entry.substr(eq + 1);
    if (name == "KERNELS") continue;  // kernel selection, not a config key
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::string key;
    if (name.rfind("model_", 0) == 0)
      key = "model." + name.substr(6);
    else if (name.rfind("agent_", 0) == 0)
      key = "agent." + name.substr(6);
    else
      key = name;
    out.emplace_back(std::move(key), value);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["env"] = cfg.env;
  j["preset"] = cfg.preset;
  j["total_steps"] = cfg.total_steps;
  j["eval_every"] = cfg.eval_every;
  j["eval_episodes"] = cfg.eval_episodes;
  j["out_dir"] = cfg.out_dir;
  json m;
  m["history"] = cfg.model.history;
  m["state_dim"] = cfg.model.state_dim;
  m["model_dim"] = cfg.model.model_dim;
  m["num_heads"] = cfg.model.num_heads;
  m["num_layers"] = cfg.model.num_layers;
  m["ff_dim"] = cfg.model.ff_dim;
  m["num_actions"] = cfg.model.num_actions;
  m["layer_kind"] = cfg.model.layer_kind;
  m["dropout_rate"] = cfg.model.dropout_rate;
  m["outer_dropout"] = cfg.model.outer_dropout;
  m["depth_scaled_init"] = cfg.model.depth_scaled_init;
  m["depth_scaled_last_layer"] = cfg.model.depth_scaled_last_layer;
  j["model"] = std::move(m);
  json a;
  a["loss"] = loss_kind_to_string(cfg.agent.loss_kind);
  a["gamma"] = cfg.agent.gamma;
  a["epsilon"] = cfg.agent.epsilon;
  a["epsilon_final"] = cfg.agent.epsilon_final;
  a["epsilon_decay_steps"] = cfg.agent.epsilon_decay_steps;
  a["double_q"] = cfg.agent.double_q;
  a["target_update_period"] = cfg.agent.target_update_period;
  a["tau"] = cfg.agent.tau;
  if (cfg.agent.grad_clip)
    a["grad_clip"] = *cfg.agent.grad_clip;
  else
    a["grad_clip"] = nullptr;
  a["lr"] = cfg.agent.lr;
  a["lr_schedule"] = lr_schedule_to_string(cfg.agent.lr_schedule);
  a["warmup_steps"] = cfg.agent.warmup_steps;
  a["batch_size"] = cfg.agent.batch_size;
  a["initial_collect_steps"] = cfg.agent.initial_collect_steps;
  a["buffer_capacity"] = cfg.agent.buffer_capacity;
  a["env_normalize"] = cfg.agent.env_normalize;
  a["seed"] = cfg.agent.seed;
  j["agent"] = std::move(a);
  return j.dump(2) + "\n";
}

void save_resolved_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << resolved_config_json(cfg);
  if (!out) throw IoError("write failed on '" + path + "'");
}

}  // namespace tbqn
