#include "tbqn/agent.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "tbqn/textio.h"

namespace tbqn {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "huber") return LossKind::Huber;
  if (s == "mse") return LossKind::Mse;
  throw ConfigError("agent.loss: expected 'huber' or 'mse', got '" + s + "'");
}
std::string loss_kind_to_string(LossKind k) { return k == LossKind::Huber ? "huber" : "mse"; }

LrScheduleKind lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrScheduleKind::Constant;
  if (s == "warmup") return LrScheduleKind::Warmup;
  throw ConfigError("agent.lr_schedule: expected 'constant' or 'warmup', got '" + s + "'");
}
std::string lr_schedule_to_string(LrScheduleKind k) {
  return k == LrScheduleKind::Constant ? "constant" : "warmup";
}

void AgentConfig::validate() const {
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("agent.gamma must be in (0,1]");
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("agent.epsilon must be in [0,1]");
  if (epsilon_final < 0.0 || epsilon_final > 1.0) throw ConfigError("agent.epsilon_final must be in [0,1]");
  if (epsilon_decay_steps < 0) throw ConfigError("agent.epsilon_decay_steps must be >= 0");
  if (target_update_period < 1) throw ConfigError("agent.target_update_period must be >= 1");
  if (tau <= 0.0 || tau > 1.0) throw ConfigError("agent.tau must be in (0,1]");
  if (grad_clip && *grad_clip <= 0.0) throw ConfigError("agent.grad_clip must be > 0 when set");
  if (lr <= 0.0) throw ConfigError("agent.lr must be > 0");
  if (warmup_steps < 1) throw ConfigError("agent.warmup_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("agent.batch_size must be >= 1");
  if (initial_collect_steps < 0) throw ConfigError("agent.initial_collect_steps must be >= 0");
  if (buffer_capacity < 1) throw ConfigError("agent.buffer_capacity must be >= 1");
  if (buffer_capacity < batch_size) throw ConfigError("agent.buffer_capacity must be >= batch_size");
}

double AgentConfig::epsilon_at(long long env_step) const {
  if (epsilon_decay_steps <= 0) return epsilon;
  if (env_step >= epsilon_decay_steps) return epsilon_final;
  const double f = static_cast<double>(env_step) / static_cast<double>(epsilon_decay_steps);
  return epsilon + (epsilon_final - epsilon) * f;
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("replay buffer capacity must be >= 1");
  storage_.reserve(static_cast<std::size_t>(capacity));
}

void ReplayBuffer::push(Transition t) {
  if (size_ < static_cast<std::size_t>(capacity_)) {
    storage_.push_back(std::move(t));
    ++size_;
  } else {
    storage_[head_] = std::move(t);
    head_ = (head_ + 1) % static_cast<std::size_t>(capacity_);
  }
}

const Transition& ReplayBuffer::item(int i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= size_)
    throw ContractError("replay buffer index out of range");
  if (size_ < static_cast<std::size_t>(capacity_)) return storage_[static_cast<std::size_t>(i)];
  return storage_[(head_ + static_cast<std::size_t>(i)) % static_cast<std::size_t>(capacity_)];
}

std::vector<int> ReplayBuffer::sample_indices(int batch, Rng& rng) const {
  if (size_ == 0) throw ContractError("cannot sample from an empty replay buffer");
  std::vector<int> out(static_cast<std::size_t>(batch));
  for (auto& i : out) i = static_cast<int>(rng.uniform_int(0, static_cast<long long>(size_) - 1));
  return out;
}

int select_action(const std::vector<float>& q_values, double epsilon, Rng& rng) {
  if (q_values.empty()) throw ContractError("select_action: empty q-value vector");
  const double u = rng.uniform();
  if (u < epsilon) return static_cast<int>(rng.uniform_int(0, static_cast<long long>(q_values.size()) - 1));
  int best = 0;
  for (int i = 1; i < static_cast<int>(q_values.size()); ++i)
    if (q_values[static_cast<std::size_t>(i)] > q_values[static_cast<std::size_t>(best)]) best = i;
  return best;
}

float td_from_q(float reward, bool terminal, double gamma, const std::vector<float>& q_target_next,
                const std::vector<float>& q_online_next, bool double_q) {
  if (terminal) return reward;
  if (double_q) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(q_online_next.size()); ++i)
      if (q_online_next[static_cast<std::size_t>(i)] > q_online_next[static_cast<std::size_t>(best)]) best = i;
    return reward + static_cast<float>(gamma) * q_target_next[static_cast<std::size_t>(best)];
  }
  float mx = q_target_next[0];
  for (float v : q_target_next) mx = v > mx ? v : mx;
  return reward + static_cast<float>(gamma) * mx;
}

double lr_at(long long step, double base_lr, LrScheduleKind schedule, long long warmup_steps, int model_dim) {
  if (schedule == LrScheduleKind::Constant) return base_lr;
  if (step < 1) throw ContractError("lr_at: warmup schedule needs step >= 1");
  const double d = static_cast<double>(model_dim);
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(d, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

DqnAgent::DqnAgent(const QNetworkSpec& net_spec, const AgentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      online_(net_spec, mix_seed(seed, 0)),
      target_(net_spec, mix_seed(seed, 0)),
      buffer_(cfg.buffer_capacity),
      action_rng_(seed, 1),
      sample_rng_(seed, 2),
      dropout_rng_(seed, 3) {
  cfg_.validate();
  cfg_.seed = seed;
  target_.copy_from(online_);
}

int DqnAgent::act(const std::vector<float>& history_flat, double epsilon) {
  last_epsilon_ = epsilon;
  const auto& spec = online_.spec();
  NoGradGuard ng;
  Tensor x = Tensor::from({1, spec.history, spec.state_dim}, history_flat);
  Tensor q = online_.forward(x, false, dropout_rng_);
  return select_action(q.data(), epsilon, action_rng_);
}

void DqnAgent::observe(Transition t) { buffer_.push(std::move(t)); }

StepReport DqnAgent::train_step() {
  StepReport rep;
  rep.epsilon = last_epsilon_;
  const int warm = std::max(cfg_.batch_size, cfg_.initial_collect_steps);
  if (buffer_.size() < warm) {
    rep.collecting = true;
    return rep;
  }
  const auto& spec = online_.spec();
  const int B = cfg_.batch_size, H = spec.history, SD = spec.state_dim, A = spec.num_actions;
  const std::vector<int> idx = buffer_.sample_indices(B, sample_rng_);

  std::vector<float> s(static_cast<std::size_t>(B) * H * SD);
  std::vector<float> s2(static_cast<std::size_t>(B) * H * SD);
  std::vector<int> actions(static_cast<std::size_t>(B));
  std::vector<float> rewards(static_cast<std::size_t>(B));
  std::vector<char> terminal(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const Transition& t = buffer_.item(idx[static_cast<std::size_t>(b)]);
    std::copy(t.state_history.begin(), t.state_history.end(),
              s.begin() + static_cast<std::ptrdiff_t>(b) * H * SD);
    std::copy(t.next_state_history.begin(), t.next_state_history.end(),
              s2.begin() + static_cast<std::ptrdiff_t>(b) * H * SD);
    actions[static_cast<std::size_t>(b)] = t.action;
    rewards[static_cast<std::size_t>(b)] = t.reward;
    terminal[static_cast<std::size_t>(b)] = t.terminal ? 1 : 0;
  }

  std::vector<float> targets(static_cast<std::size_t>(B));
  {
    NoGradGuard ng;
    Tensor next = Tensor::from({B, H, SD}, std::move(s2));
    Tensor qt = target_.forward(next, false, dropout_rng_);
    Tensor qo;
    if (cfg_.double_q) qo = online_.forward(next, false, dropout_rng_);
    std::vector<float> trow(static_cast<std::size_t>(A)), orow;
    for (int b = 0; b < B; ++b) {
      std::copy(qt.data().begin() + static_cast<std::ptrdiff_t>(b) * A,
                qt.data().begin() + static_cast<std::ptrdiff_t>(b + 1) * A, trow.begin());
      if (cfg_.double_q) {
        orow.assign(qo.data().begin() + static_cast<std::ptrdiff_t>(b) * A,
                    qo.data().begin() + static_cast<std::ptrdiff_t>(b + 1) * A);
      }
      targets[static_cast<std::size_t>(b)] = td_from_q(rewards[static_cast<std::size_t>(b)],
                                                       terminal[static_cast<std::size_t>(b)] != 0,
                                                       cfg_.gamma, trow, orow, cfg_.double_q);
    }
  }

  Tensor states = Tensor::from({B, H, SD}, std::move(s));
  Tensor q = online_.forward(states, true, dropout_rng_);
  for (float v : q.data())
    if (!std::isfinite(v) || std::fabs(v) > 1e6f)
      throw DivergenceError("q-values exploded during training", gradient_steps_);

  Tensor pred = gather_actions(q, actions);
  Tensor loss = cfg_.loss_kind == LossKind::Huber ? huber_mean(pred, targets) : mse_mean(pred, targets);
  const double lv = static_cast<double>(loss.item());
  if (!std::isfinite(lv)) throw DivergenceError("non-finite training loss", gradient_steps_);

  auto params = online_.parameters();
  zero_grads(params);
  loss.backward();
  rep.grad_norm = cfg_.grad_clip ? clip_global_norm(params, *cfg_.grad_clip) : global_grad_norm(params);
  rep.lr = lr_at(gradient_steps_ + 1, cfg_.lr, cfg_.lr_schedule, cfg_.warmup_steps, spec.model_dim);
  adam_step<float>(params, static_cast<float>(rep.lr), 0.9f, 0.98f, 1e-9f);
  ++gradient_steps_;
  if (gradient_steps_ % cfg_.target_update_period == 0) {
    if (cfg_.tau >= 1.0)
      target_.copy_from(online_);
    else
      target_.polyak_from(online_, static_cast<float>(cfg_.tau));
  }
  rep.loss = lv;
  return rep;
}

EvalStats evaluate_policy(QNet& net, const std::string& env_name, int episodes, std::uint64_t seed,
                          bool env_normalize) {
  if (episodes < 1) throw ConfigError("evaluate_policy: episodes must be >= 1");
  auto env = make_env(env_name);
  const auto& espec = env->spec();
  const auto& nspec = net.spec();
  if (espec.state_dim != nspec.state_dim || espec.num_actions != nspec.num_actions)
    throw ConfigError("evaluate_policy: network (" + std::to_string(nspec.state_dim) + " obs, " +
                      std::to_string(nspec.num_actions) + " actions) does not fit environment '" +
                      env_name + "'");
  Rng env_rng(seed, 0);
  Rng pick_rng(seed, 1);
  HistoryBuffer hist(nspec.history, nspec.state_dim);
  EvalStats st;
  for (int ep = 0; ep < episodes; ++ep) {
    hist.reset(normalize_obs(env->reset(env_rng), espec, env_normalize));
    double ret = 0.0;
    while (true) {
      NoGradGuard ng;
      Tensor x = Tensor::from({1, nspec.history, nspec.state_dim}, hist.flat());
      Tensor q = net.forward(x, false, pick_rng);
      const int a = select_action(q.data(), 0.0, pick_rng);
      StepResult sr = env->step(a);
      ret += sr.reward;
      hist.push(normalize_obs(sr.obs, espec, env_normalize));
      if (sr.terminal || sr.truncated) break;
    }
    st.returns.push_back(ret);
  }
  double sum = 0.0;
  st.min = st.returns[0];
  st.max = st.returns[0];
  for (double r : st.returns) {
    sum += r;
    st.min = std::min(st.min, r);
    st.max = std::max(st.max, r);
  }
  st.mean = sum / static_cast<double>(st.returns.size());
  double ss = 0.0;
  for (double r : st.returns) ss += (r - st.mean) * (r - st.mean);
  st.stddev = std::sqrt(ss / static_cast<double>(st.returns.size()));
  return st;
}

MetricsLog run_training(Env& env, DqnAgent& agent, long long total_steps, long long eval_every,
                        const std::function<void(const MetricsRow&)>& on_eval) {
  MetricsLog log;
  if (total_steps <= 0) return log;
  const AgentConfig& cfg = agent.config();
  const QNetworkSpec& nspec = agent.online().spec();
  const EnvSpec& espec = env.spec();
  if (espec.state_dim != nspec.state_dim || espec.num_actions != nspec.num_actions)
    throw ConfigError("run_training: network dims do not fit environment '" + espec.name + "'");

  Rng env_rng(cfg.seed, 100);
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 777);
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  HistoryBuffer hist(nspec.history, nspec.state_dim);
  hist.reset(normalize_obs(env.reset(env_rng), espec, cfg.env_normalize));
  StepReport last;
  double ep_return = 0.0;
  double best = -std::numeric_limits<double>::infinity();

  for (long long step = 1; step <= total_steps; ++step) {
    const double eps = cfg.epsilon_at(step);
    int a;
    if (agent.buffer().size() < cfg.initial_collect_steps)
      a = static_cast<int>(agent.action_rng().uniform_int(0, espec.num_actions - 1));
    else
      a = agent.act(hist.flat(), eps);

    std::vector<float> prev = hist.flat();
    StepResult sr = env.step(a);
    ep_return += sr.reward;
    hist.push(normalize_obs(sr.obs, espec, cfg.env_normalize));
    agent.observe({std::move(prev), a, static_cast<float>(sr.reward), hist.flat(), sr.terminal});
    if (sr.terminal || sr.truncated) {
      log.episode_returns.push_back(ep_return);
      ep_return = 0.0;
      hist.reset(normalize_obs(env.reset(env_rng), espec, cfg.env_normalize));
    }

    try {
      last = agent.train_step();
    } catch (const DivergenceError& e) {
      log.diverged = true;
      log.diverged_at_step = step;
      break;
    }

    if (eval_every > 0 && step % eval_every == 0) {
      EvalStats es = evaluate_policy(agent.online(), espec.name, 10, eval_seed, cfg.env_normalize);
      MetricsRow row;
      row.step = step;
      row.avg_return = es.mean;
      row.loss = last.loss;
      row.grad_norm = last.grad_norm;
      row.epsilon = eps;
      row.lr = last.lr;
      row.wall_ms = wall_ms();
      log.rows.push_back(row);
      best = std::max(best, es.mean);
      log.final_avg_return = es.mean;
      if (on_eval) on_eval(row);
    }
  }
  if (!log.rows.empty()) log.best_avg_return = best;
  return log;
}

double last_episodes_mean(const MetricsLog& log, int k) {
  if (log.episode_returns.empty()) return 0.0;
  const std::size_t n = log.episode_returns.size();
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), n);
  double s = 0.0;
  for (std::size_t i = n - take; i < n; ++i) s += log.episode_returns[i];
  return s / static_cast<double>(take);
}

void write_metrics_csv(const std::string& path, const MetricsLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "step,avg_return,loss,grad_norm,epsilon,lr,wall_ms\n";
  for (const auto& r : log.rows) {
    out << r.step << ',' << fmt_double(r.avg_return) << ',' << fmt_double(r.loss) << ','
        << fmt_double(r.grad_norm) << ',' << fmt_double(r.epsilon) << ',' << fmt_double(r.lr) << ','
        << r.wall_ms << '\n';
  }
  if (log.diverged) out << "# diverged at step " << log.diverged_at_step << "\n";
  if (!out) throw IoError("write failed on '" + path + "'");
}

}  // namespace tbqn
