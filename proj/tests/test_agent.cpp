// DQN semantics: action selection, TD targets, replay, schedules, target-net
// synchronization, the training loop's determinism, and its divergence guard.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tbqn/agent.h"

using namespace tbqn;
using doctest::Approx;

namespace {

QNetworkSpec tiny_net(int history = 2, int state_dim = 2) {
  QNetworkSpec s;
  s.history = history;
  s.state_dim = state_dim;
  s.model_dim = 8;
  s.num_heads = 2;
  s.num_layers = 1;
  s.ff_dim = 16;
  s.num_actions = 2;
  s.layer_kind = 3;
  s.dropout_rate = 0.0;
  return s;
}

AgentConfig tiny_cfg() {
  AgentConfig c;
  c.loss_kind = LossKind::Mse;
  c.gamma = 0.9;
  c.epsilon = 0.0;
  c.lr = 1e-3;
  c.batch_size = 2;
  c.initial_collect_steps = 2;
  c.buffer_capacity = 64;
  c.target_update_period = 4;
  c.seed = 5;
  return c;
}

Transition make_transition(float tag, int action, float reward, bool terminal, int width) {
  Transition t;
  t.state_history.assign(static_cast<std::size_t>(width), tag);
  t.action = action;
  t.reward = reward;
  t.next_state_history.assign(static_cast<std::size_t>(width), tag + 0.5f);
  t.terminal = terminal;
  return t;
}

}  // namespace

TEST_CASE("select_action: greedy argmax, tie break, uniform exploration") {
  Rng rng(1, 0);
  CHECK(select_action({1.0f, 3.0f, 2.0f}, 0.0, rng) == 1);
  CHECK(select_action({5.0f, 5.0f, 1.0f}, 0.0, rng) == 0);  // lowest index wins ties
  CHECK(select_action({-1.0f, -3.0f}, 0.0, rng) == 0);

  // adding a constant never changes the greedy choice
  Rng r2(2, 0);
  for (int i = 0; i < 50; ++i) {
    std::vector<float> q{static_cast<float>(r2.uniform(-2, 2)),
                         static_cast<float>(r2.uniform(-2, 2)),
                         static_cast<float>(r2.uniform(-2, 2))};
    std::vector<float> shifted(q);
    for (auto& v : shifted) v += 7.25f;
    Rng ra(3, 0), rb(3, 0);
    CHECK(select_action(q, 0.0, ra) == select_action(shifted, 0.0, rb));
  }

  // epsilon = 1: all actions near-uniform
  Rng r3(4, 0);
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action({9.0f, 0.0f, 0.0f}, 1.0, r3))];
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int c : counts) CHECK(std::abs(c - n / 3.0) < 4 * sigma);

  // exactly one uniform draw is consumed on the greedy path too
  Rng used(6, 0), fresh(6, 0);
  (void)select_action({1.0f, 0.0f}, 0.0, used);
  (void)fresh.uniform();
  CHECK(used.next_u32() == fresh.next_u32());
}

TEST_CASE("td_from_q: bootstrap, terminal cut, and double-Q selection") {
  // r + gamma * max target
  CHECK(td_from_q(1.0f, false, 0.99, {2.0f, 1.0f}, {0.0f, 0.0f}, false) == Approx(2.98f));
  // terminal: reward only
  CHECK(td_from_q(2.5f, true, 0.99, {9.0f, 9.0f}, {9.0f, 9.0f}, false) == Approx(2.5f));
  // double-Q: online argmax (index 1) evaluated under the target row
  CHECK(td_from_q(0.0f, false, 0.5, {3.0f, 2.0f}, {1.0f, 5.0f}, true) == Approx(1.0f));
  // plain max would have picked 3.0 instead
  CHECK(td_from_q(0.0f, false, 0.5, {3.0f, 2.0f}, {1.0f, 5.0f}, false) == Approx(1.5f));
}

TEST_CASE("replay buffer: FIFO eviction and uniform sampling") {
  ReplayBuffer buf(5);
  CHECK(buf.capacity() == 5);
  for (int i = 0; i < 8; ++i) buf.push(make_transition(0.0f, 0, static_cast<float>(i), false, 4));
  REQUIRE(buf.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(buf.item(i).reward == Approx(static_cast<float>(i + 3)));

  // uniform with replacement: each index within 4 sigma of its expectation
  ReplayBuffer b2(10);
  for (int i = 0; i < 10; ++i) b2.push(make_transition(0.0f, 0, static_cast<float>(i), false, 4));
  Rng rng(8, 0);
  const int draws = 100000;
  std::vector<int> counts(10, 0);
  auto idx = b2.sample_indices(draws, rng);
  REQUIRE(idx.size() == static_cast<std::size_t>(draws));
  for (int i : idx) {
    REQUIRE(i >= 0);
    REQUIRE(i < 10);
    ++counts[static_cast<std::size_t>(i)];
  }
  const double sigma = std::sqrt(draws * 0.1 * 0.9);
  for (int c : counts) CHECK(std::abs(c - draws / 10.0) < 4 * sigma);
}

TEST_CASE("lr_at: constant passthrough and the warmup ramp") {
  CHECK(lr_at(1, 3e-4, LrScheduleKind::Constant, 4000, 64) == Approx(3e-4));
  CHECK(lr_at(999999, 3e-4, LrScheduleKind::Constant, 4000, 64) == Approx(3e-4));

  // d^-0.5 * min(s^-0.5, s * w^-1.5)
  const double d = 1.0 / std::sqrt(64.0);
  CHECK(lr_at(1, 1.0, LrScheduleKind::Warmup, 4000, 64) ==
        Approx(d * 1.0 * std::pow(4000.0, -1.5)));
  CHECK(lr_at(4000, 1.0, LrScheduleKind::Warmup, 4000, 64) ==
        Approx(d / std::sqrt(4000.0)));
  CHECK(lr_at(16000, 1.0, LrScheduleKind::Warmup, 4000, 64) ==
        Approx(d / std::sqrt(16000.0)));

  // rising through warmup, falling after
  CHECK(lr_at(100, 1.0, LrScheduleKind::Warmup, 4000, 64) <
        lr_at(2000, 1.0, LrScheduleKind::Warmup, 4000, 64));
  CHECK(lr_at(2000, 1.0, LrScheduleKind::Warmup, 4000, 64) <
        lr_at(4000, 1.0, LrScheduleKind::Warmup, 4000, 64));
  CHECK(lr_at(8000, 1.0, LrScheduleKind::Warmup, 4000, 64) <
        lr_at(4000, 1.0, LrScheduleKind::Warmup, 4000, 64));
}

TEST_CASE("epsilon_at: linear decay clamped at the endpoint") {
  AgentConfig c;
  c.epsilon = 1.0;
  c.epsilon_final = 0.05;
  c.epsilon_decay_steps = 5000;
  CHECK(c.epsilon_at(0) == Approx(1.0));
  CHECK(c.epsilon_at(2500) == Approx(0.525));
  CHECK(c.epsilon_at(5000) == Approx(0.05));
  CHECK(c.epsilon_at(99999) == Approx(0.05));

  AgentConfig flat;
  flat.epsilon = 0.1;
  flat.epsilon_decay_steps = 0;
  CHECK(flat.epsilon_at(0) == Approx(0.1));
  CHECK(flat.epsilon_at(123456) == Approx(0.1));
}

TEST_CASE("agent: warm-up gate covers both batch size and collect steps") {
  AgentConfig cfg = tiny_cfg();
  cfg.batch_size = 4;
  cfg.initial_collect_steps = 2;  // the gate is max(batch, collect) = 4
  DqnAgent agent(tiny_net(), cfg, 7);
  for (int i = 0; i < 3; ++i) {
    agent.observe(make_transition(0.1f * i, i % 2, 0.0f, false, 4));
    CHECK(agent.train_step().collecting);
  }
  CHECK(agent.gradient_steps() == 0);
  agent.observe(make_transition(0.4f, 0, 1.0f, false, 4));
  StepReport r = agent.train_step();
  CHECK(!r.collecting);
  CHECK(agent.gradient_steps() == 1);
  CHECK(r.lr == Approx(cfg.lr));
}

TEST_CASE("agent: hard target update copies the online weights bit for bit") {
  AgentConfig cfg = tiny_cfg();
  cfg.target_update_period = 1;
  cfg.tau = 1.0;
  DqnAgent agent(tiny_net(), cfg, 11);
  for (int i = 0; i < 2; ++i) agent.observe(make_transition(0.2f * i, i % 2, 0.5f, false, 4));
  agent.train_step();
  auto po = agent.online().parameters();
  auto pt = agent.target().parameters();
  REQUIRE(po.size() == pt.size());
  for (std::size_t i = 0; i < po.size(); ++i) CHECK(po[i]->value.data() == pt[i]->value.data());

  // the target network accumulates no gradients
  for (Parameter* p : pt) CHECK(!p->value.has_grad());
}

TEST_CASE("agent: between update ticks the target stays frozen") {
  AgentConfig cfg = tiny_cfg();
  cfg.target_update_period = 3;
  DqnAgent agent(tiny_net(), cfg, 13);
  for (int i = 0; i < 2; ++i) agent.observe(make_transition(0.2f * i, i % 2, 0.5f, false, 4));
  const std::vector<float> frozen = agent.target().parameters()[0]->value.data();
  agent.train_step();  // step 1
  agent.train_step();  // step 2
  CHECK(agent.target().parameters()[0]->value.data() == frozen);
  agent.train_step();  // step 3: tick
  CHECK(agent.target().parameters()[0]->value.data() ==
        agent.online().parameters()[0]->value.data());
}

TEST_CASE("agent: one terminal transition is memorized to near-zero loss") {
  AgentConfig cfg = tiny_cfg();
  cfg.batch_size = 1;
  cfg.initial_collect_steps = 1;
  cfg.lr = 3e-3;
  DqnAgent agent(tiny_net(), cfg, 17);
  agent.observe(make_transition(0.3f, 1, 1.0f, true, 4));
  double loss = 1e9;
  for (int i = 0; i < 500; ++i) loss = agent.train_step().loss;
  CHECK(loss < 1e-3);

  // and the memorized Q-value is the reward itself
  std::vector<float> h(4, 0.3f);
  Rng fwd(0, 0);
  NoGradGuard guard;
  Tensor q = agent.online().forward(Tensor::from({1, 2, 2}, h), false, fwd);
  CHECK(q.data()[1] == Approx(1.0f).epsilon(0.05));
}

TEST_CASE("agent: act is epsilon-greedy over the online net") {
  AgentConfig cfg = tiny_cfg();
  DqnAgent agent(tiny_net(), cfg, 19);
  std::vector<float> h(4, 0.1f);

  // greedy matches a manual forward pass
  Rng fwd(0, 0);
  NoGradGuard guard;
  Tensor q = agent.online().forward(Tensor::from({1, 2, 2}, h), false, fwd);
  const int greedy = q.data()[0] >= q.data()[1] ? 0 : 1;
  CHECK(agent.act(h, 0.0) == greedy);

  // epsilon 1 eventually takes the other action too
  bool other = false;
  for (int i = 0; i < 64 && !other; ++i) other = agent.act(h, 1.0) != greedy;
  CHECK(other);

  CHECK_THROWS_AS(agent.act(std::vector<float>(3, 0.0f), 0.0), ShapeError);
}

TEST_CASE("run_training: deterministic given the config, wall time aside") {
  auto run = [&]() {
    auto env = make_env("cartpole");
    QNetworkSpec net = tiny_net(2, 4);
    AgentConfig cfg = tiny_cfg();
    cfg.epsilon = 0.3;
    cfg.batch_size = 4;
    cfg.initial_collect_steps = 16;
    cfg.seed = 42;
    DqnAgent agent(net, cfg, cfg.seed);
    return run_training(*env, agent, 400, 200);
  };
  MetricsLog a = run();
  MetricsLog b = run();
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.rows.size() == 2);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].step == b.rows[i].step);
    CHECK(a.rows[i].avg_return == b.rows[i].avg_return);
    CHECK(a.rows[i].loss == b.rows[i].loss);
    CHECK(a.rows[i].grad_norm == b.rows[i].grad_norm);
    CHECK(a.rows[i].epsilon == b.rows[i].epsilon);
    CHECK(a.rows[i].lr == b.rows[i].lr);
  }
  CHECK(a.episode_returns == b.episode_returns);
  CHECK(a.best_avg_return == b.best_avg_return);
  CHECK(a.final_avg_return == b.final_avg_return);
  CHECK(!a.diverged);

  // the eval hook fires once per row
  auto env = make_env("cartpole");
  AgentConfig cfg = tiny_cfg();
  cfg.batch_size = 4;
  cfg.initial_collect_steps = 16;
  DqnAgent agent(tiny_net(2, 4), cfg, 1);
  int fired = 0;
  MetricsLog log = run_training(*env, agent, 200, 100, [&](const MetricsRow&) { ++fired; });
  CHECK(fired == static_cast<int>(log.rows.size()));
}

TEST_CASE("run_training: zero steps yields an empty log") {
  auto env = make_env("cartpole");
  DqnAgent agent(tiny_net(2, 4), tiny_cfg(), 3);
  MetricsLog log = run_training(*env, agent, 0, 100);
  CHECK(log.rows.empty());
  CHECK(log.episode_returns.empty());
  CHECK(!log.diverged);
}

TEST_CASE("run_training: an exploding optimizer trips the divergence guard") {
  auto env = make_env("cartpole");
  QNetworkSpec net = tiny_net(2, 4);
  AgentConfig cfg = tiny_cfg();
  cfg.lr = 1000.0;
  cfg.grad_clip.reset();
  cfg.batch_size = 4;
  cfg.initial_collect_steps = 8;
  DqnAgent agent(net, cfg, 23);
  MetricsLog log = run_training(*env, agent, 3000, 500);
  REQUIRE(log.diverged);
  CHECK(log.diverged_at_step > 0);
  CHECK(log.diverged_at_step <= 3000);

  // the CSV records the event as a trailing comment
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tbqn_diverged_metrics.csv").string();
  write_metrics_csv(path, log);
  std::ifstream in(path);
  std::string line, last, first;
  bool first_set = false;
  while (std::getline(in, line)) {
    if (!first_set) {
      first = line;
      first_set = true;
    }
    if (!line.empty()) last = line;
  }
  CHECK(first == "step,avg_return,loss,grad_norm,epsilon,lr,wall_ms");
  CHECK(last.find("# diverged at step") != std::string::npos);
  fs::remove(path);
}

TEST_CASE("write_metrics_csv: schema and row count") {
  MetricsLog log;
  log.rows.push_back({1000, 21.5, 0.125, 1.0, 0.5, 0.25, 77});
  log.rows.push_back({2000, 42.0, 0.0625, 0.5, 0.25, 0.25, 99});
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "tbqn_metrics_schema.csv").string();
  write_metrics_csv(path, log);
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "step,avg_return,loss,grad_norm,epsilon,lr,wall_ms");
  CHECK(lines[1] == "1000,21.5,0.125,1,0.5,0.25,77");
  fs::remove(path);
}

TEST_CASE("last_episodes_mean: averages the trailing window") {
  MetricsLog log;
  log.episode_returns = {10.0, 20.0, 30.0, 40.0};
  CHECK(last_episodes_mean(log, 2) == Approx(35.0));
  CHECK(last_episodes_mean(log, 10) == Approx(25.0));
  CHECK(last_episodes_mean(MetricsLog{}, 5) == Approx(0.0));
}

TEST_CASE("evaluate_policy: deterministic, epsilon-free statistics") {
  QNetworkSpec net_spec = tiny_net(2, 4);
  QNet net(net_spec, 29);
  EvalStats a = evaluate_policy(net, "cartpole", 5, 123, false);
  EvalStats b = evaluate_policy(net, "cartpole", 5, 123, false);
  REQUIRE(a.returns.size() == 5);
  CHECK(a.returns == b.returns);
  CHECK(a.mean == b.mean);

  double mn = 1e18, mx = -1e18, sum = 0;
  for (double r : a.returns) {
    mn = std::min(mn, r);
    mx = std::max(mx, r);
    sum += r;
  }
  CHECK(a.mean == Approx(sum / 5));
  CHECK(a.min == Approx(mn));
  CHECK(a.max == Approx(mx));

  EvalStats one = evaluate_policy(net, "cartpole", 1, 9, false);
  CHECK(one.stddev == Approx(0.0));
}
