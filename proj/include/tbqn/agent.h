#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tbqn/env.h"
#include "tbqn/model.h"

namespace tbqn {

enum class LossKind { Huber, Mse };
enum class LrScheduleKind { Constant, Warmup };

LossKind loss_kind_from_string(const std::string& s);
std::string loss_kind_to_string(LossKind k);
LrScheduleKind lr_schedule_from_string(const std::string& s);
std::string lr_schedule_to_string(LrScheduleKind k);

struct AgentConfig {
  LossKind loss_kind = LossKind::Huber;
  double gamma = 0.99;
  double epsilon = 0.1;            // exploration rate (constant unless decay configured)
  double epsilon_final = 0.1;      // linear-decay endpoint
  long long epsilon_decay_steps = 0;  // 0 keeps epsilon constant
  bool double_q = false;
  int target_update_period = 100;  // counted in gradient steps
  double tau = 1.0;                // 1 = hard update, <1 = Polyak at each period tick
  std::optional<double> grad_clip = 1.0;  // global-norm threshold; nullopt disables
  double lr = 1e-4;
  LrScheduleKind lr_schedule = LrScheduleKind::Constant;
  long long warmup_steps = 4000;   // used by the warmup schedule
  int batch_size = 32;
  int initial_collect_steps = 1000;
  int buffer_capacity = 100000;
  bool env_normalize = false;
  std::uint64_t seed = 0;

  void validate() const;
  double epsilon_at(long long env_step) const;
};

struct Transition {
  std::vector<float> state_history;       // flat [H * state_dim]
  int action = 0;
  float reward = 0.0f;
  std::vector<float> next_state_history;  // state_history shifted by one
  bool terminal = false;                  // true only for environment-defined termination
};

// FIFO ring; sampling is uniform with replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void push(Transition t);
  int size() const { return static_cast<int>(size_); }
  int capacity() const { return capacity_; }
  // i-th oldest element, i in [0, size)
  const Transition& item(int i) const;
  std::vector<int> sample_indices(int batch, Rng& rng) const;

 private:
  int capacity_;
  std::size_t size_ = 0, head_ = 0;
  std::vector<Transition> storage_;
};

// With probability epsilon: uniform over all actions; otherwise the argmax,
// lowest index on ties. One uniform draw is consumed either way.
int select_action(const std::vector<float>& q_values, double epsilon, Rng& rng);

// Bootstrapped regression target for one transition. Terminal transitions
// do not bootstrap. double_q selects the argmax from the online Q-row but
// takes its value from the target Q-row.
float td_from_q(float reward, bool terminal, double gamma, const std::vector<float>& q_target_next,
                const std::vector<float>& q_online_next, bool double_q);

// constant: base_lr. warmup(w): d^-0.5 * min(step^-0.5, step * w^-1.5) — the
// classic Transformer ramp; base_lr is ignored by design for that schedule.
double lr_at(long long step, double base_lr, LrScheduleKind schedule, long long warmup_steps, int model_dim);

struct StepReport {
  bool collecting = false;  // buffer below warm-up threshold; nothing trained
  double loss = 0.0;
  double grad_norm = 0.0;
  double epsilon = 0.0;
  double lr = 0.0;
};

class DqnAgent {
 public:
  DqnAgent(const QNetworkSpec& net_spec, const AgentConfig& cfg, std::uint64_t seed);

  // epsilon-greedy action from the online network (no graph is built)
  int act(const std::vector<float>& history_flat, double epsilon);
  void observe(Transition t);
  // Sample, build targets, descend, and tick the target network. Throws
  // DivergenceError on non-finite loss or |Q| > 1e6.
  StepReport train_step();

  QNet& online() { return online_; }
  QNet& target() { return target_; }
  ReplayBuffer& buffer() { return buffer_; }
  const AgentConfig& config() const { return cfg_; }
  long long gradient_steps() const { return gradient_steps_; }
  Rng& action_rng() { return action_rng_; }

 private:
  AgentConfig cfg_;
  QNet online_, target_;
  ReplayBuffer buffer_;
  Rng action_rng_, sample_rng_, dropout_rng_;
  long long gradient_steps_ = 0;
  double last_epsilon_ = 0.0;
};

struct MetricsRow {
  long long step = 0;
  double avg_return = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double epsilon = 0.0;
  double lr = 0.0;
  long long wall_ms = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
  std::vector<double> episode_returns;  // completed training episodes, in order
  bool diverged = false;
  long long diverged_at_step = -1;
  double best_avg_return = 0.0;
  double final_avg_return = 0.0;
};

// Mean over the last k completed training episodes (all of them if fewer).
double last_episodes_mean(const MetricsLog& log, int k);

struct EvalStats {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
  std::vector<double> returns;
};

// N greedy episodes (epsilon 0, dropout off) on a fresh environment seeded
// from `seed`. Fully deterministic given (net weights, env, episodes, seed).
EvalStats evaluate_policy(QNet& net, const std::string& env_name, int episodes, std::uint64_t seed,
                          bool env_normalize);

// Interact-store-train loop: one gradient step per environment step after
// warm-up, a 10-episode greedy evaluation every eval_every steps. Divergence
// ends the log early instead of propagating. on_eval (if set) fires after each
// evaluation row is appended, e.g. to snapshot best-so-far weights.
MetricsLog run_training(Env& env, DqnAgent& agent, long long total_steps, long long eval_every,
                        const std::function<void(const MetricsRow&)>& on_eval = {});

// step, avg_return, loss, grad_norm, epsilon, lr, wall_ms — numbers rendered
// by shortest-round-trip formatting so files are byte-stable.
void write_metrics_csv(const std::string& path, const MetricsLog& log);

}  // namespace tbqn
