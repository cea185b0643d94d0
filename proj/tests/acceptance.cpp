// Acceptance gate: one self-contained check per shipped guarantee, each
// printing "criterion N: PASS|FAIL - detail". Run all, or a subset with
// repeated --only N flags. Exits nonzero when any selected criterion fails.
//
//  1  gradient oracle        f64 finite differences through every layer kind
//  2  shape contract         Q-head output across all shipped size variants
//  3  value-learning rules   action selection, TD targets, replay, target sync
//  4  environment fidelity   cartpole closed-form step + bit-stable trajectories
//  5  stabilized recipe      learns cartpole at desk scale within budget
//  6  first-attempt recipe   visibly underperforms the stabilized recipe
//  7  clipping ablation      removing grad clipping hurts (reported, soft gate)
//  8  importance analysis    forest MDI isolates a planted driving parameter
//  9  search sampler         TPE concentrates where scores are high
// 10  study replica          full search twice -> byte-identical reports
// 11  checkpoint round trip  reload reproduces greedy returns bit for bit

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tbqn/agent.h"
#include "tbqn/config.h"
#include "tbqn/drivers.h"
#include "tbqn/hpo.h"
#include "tbqn/model.h"

using namespace tbqn;
namespace fs = std::filesystem;

namespace {

fs::path g_out_root = "acceptance_runs";

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient oracle over the full Q-network
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const double t0 = now_s();
  double worst = 0.0;
  std::string worst_at = "-";

  for (int kind = 1; kind <= 6; ++kind) {
    QNetworkSpec spec;
    spec.history = 5;
    spec.state_dim = 3;
    spec.model_dim = 8;
    spec.num_heads = 2;
    spec.num_layers = 2;
    spec.ff_dim = 16;
    spec.num_actions = 2;
    spec.layer_kind = kind;
    spec.dropout_rate = 0.0;

    QNetT<double> net(spec, 1000 + static_cast<std::uint64_t>(kind));
    Rng data_rng(77, static_cast<std::uint64_t>(kind));
    std::vector<double> xdata(2 * 5 * 3);
    for (auto& v : xdata) v = data_rng.uniform(-1.0, 1.0);
    TensorT<double> x = TensorT<double>::from({2, 5, 3}, xdata);
    x.set_requires_grad(true);
    const std::vector<double> target{0.5, -0.3, 0.2, 0.7};

    Rng fwd(0, 0);
    auto loss_of = [&]() {
      TensorT<double> q = net.forward(x, false, fwd);
      return mse_mean(q, target);
    };
    TensorT<double> loss = loss_of();
    loss.backward();

    auto probe = [&](std::vector<double>& w, const std::vector<double>& grad,
                     const std::string& label) {
      const double eps = 1e-5;
      const std::size_t stride = std::max<std::size_t>(1, w.size() / 4);
      for (std::size_t i = 0; i < w.size(); i += stride) {
        const double keep = w[i];
        w[i] = keep + eps;
        const double up = loss_of().item();
        w[i] = keep - eps;
        const double dn = loss_of().item();
        w[i] = keep;
        const double fd = (up - dn) / (2 * eps);
        const double ad = grad[i];
        if (std::abs(fd) < 1e-10 && std::abs(ad) < 1e-10) continue;
        const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
        if (rel > worst) {
          worst = rel;
          worst_at = "kind " + std::to_string(kind) + " " + label + "[" + std::to_string(i) + "]";
        }
      }
    };

    probe(x.data(), x.grad(), "input");
    for (ParameterT<double>* p : net.parameters()) probe(p->value.data(), p->value.grad(), p->name);
  }

  const double wall = now_s() - t0;
  detail = "max relative error " + fmt(worst, 8) + " at " + worst_at + ", " + fmt(wall, 1) + "s";
  return worst < 1e-4 && wall < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 2: output shapes across every shipped size variant and layer kind
// ---------------------------------------------------------------------------

bool criterion_shapes(std::string& detail) {
  Rng rng(5, 0);
  int checked = 0;
  for (const DimensionVariant& v : dimension_variants()) {
    QNetworkSpec spec;
    spec.history = v.history;
    spec.state_dim = 4;
    spec.model_dim = v.model_dim;
    spec.num_heads = 4;
    spec.num_layers = v.num_layers;
    spec.ff_dim = v.ff_dim;
    spec.num_actions = 2;
    spec.layer_kind = 3;
    spec.dropout_rate = 0.0;
    QNet net(spec, 11);

    std::vector<float> xd(2 * static_cast<std::size_t>(v.history) * 4);
    for (auto& f : xd) f = static_cast<float>(rng.uniform(-1.0, 1.0));
    Rng fwd(0, 0);
    Tensor q = net.forward(Tensor::from({2, v.history, 4}, xd), false, fwd);
    if (q.shape() != Shape{2, 2}) {
      detail = "variant " + v.tag() + " produced shape of rank " + std::to_string(q.rank());
      return false;
    }
    for (float f : q.data())
      if (!std::isfinite(f)) {
        detail = "variant " + v.tag() + " produced a non-finite Q-value";
        return false;
      }
    ++checked;
  }

  for (int kind = 1; kind <= 6; ++kind) {
    QNetworkSpec spec;
    spec.history = 5;
    spec.state_dim = 4;
    spec.model_dim = 64;
    spec.num_heads = 4;
    spec.num_layers = 3;
    spec.ff_dim = 256;
    spec.num_actions = 3;
    spec.layer_kind = kind;
    QNet net(spec, 13);
    std::vector<float> xd(3 * 5 * 4);
    for (auto& f : xd) f = static_cast<float>(rng.uniform(-1.0, 1.0));
    Rng fwd(0, 0);
    Tensor q = net.forward(Tensor::from({3, 5, 4}, xd), false, fwd);
    if (q.shape() != Shape{3, 3}) {
      detail = "layer kind " + std::to_string(kind) + " broke the (batch, actions) contract";
      return false;
    }
    ++checked;
  }
  detail = std::to_string(checked) + " configurations produced finite (batch, actions) outputs";
  return true;
}

// ---------------------------------------------------------------------------
// criterion 3: value-learning semantics
// ---------------------------------------------------------------------------

bool criterion_dqn_semantics(std::string& detail) {
  std::vector<std::string> failures;

  // replay is FIFO at capacity
  {
    ReplayBuffer buf(5);
    for (int i = 0; i < 8; ++i) {
      Transition t;
      t.state_history.assign(4, 0.0f);
      t.next_state_history.assign(4, 0.0f);
      t.reward = static_cast<float>(i);
      buf.push(t);
    }
    for (int i = 0; i < 5; ++i)
      if (buf.item(i).reward != static_cast<float>(i + 3)) failures.push_back("fifo order");
  }

  // sampling is uniform with replacement (3 sigma on a fixed seed)
  {
    ReplayBuffer buf(10);
    for (int i = 0; i < 10; ++i) {
      Transition t;
      t.state_history.assign(4, 0.0f);
      t.next_state_history.assign(4, 0.0f);
      buf.push(t);
    }
    Rng rng(8, 0);
    const int draws = 100000;
    std::vector<int> counts(10, 0);
    for (int idx : buf.sample_indices(draws, rng)) ++counts[static_cast<std::size_t>(idx)];
    const double sigma = std::sqrt(draws * 0.1 * 0.9);
    for (int c : counts)
      if (std::abs(c - draws / 10.0) > 3 * sigma) failures.push_back("sampling uniformity");
  }

  // hard target update is a bitwise copy
  {
    QNetworkSpec spec;
    spec.history = 2;
    spec.state_dim = 2;
    spec.model_dim = 8;
    spec.num_heads = 2;
    spec.num_layers = 1;
    spec.ff_dim = 16;
    spec.num_actions = 2;
    spec.layer_kind = 3;
    AgentConfig cfg;
    cfg.loss_kind = LossKind::Mse;
    cfg.batch_size = 2;
    cfg.initial_collect_steps = 2;
    cfg.target_update_period = 1;
    cfg.tau = 1.0;
    cfg.lr = 1e-3;
    cfg.seed = 3;
    DqnAgent agent(spec, cfg, 3);
    for (int i = 0; i < 2; ++i) {
      Transition t;
      t.state_history.assign(4, 0.1f * static_cast<float>(i));
      t.next_state_history.assign(4, 0.1f * static_cast<float>(i) + 0.05f);
      t.action = i % 2;
      t.reward = 0.5f;
      agent.observe(t);
    }
    agent.train_step();
    auto po = agent.online().parameters();
    auto pt = agent.target().parameters();
    for (std::size_t i = 0; i < po.size(); ++i)
      if (std::memcmp(po[i]->value.data().data(), pt[i]->value.data().data(),
                      po[i]->value.data().size() * sizeof(float)) != 0)
        failures.push_back("hard update bit equality");

    // identical weights are a fixed point of the soft update, any tau
    QNet a(spec, 21), b(spec, 22);
    b.copy_from(a);
    b.polyak_from(a, 0.37f);
    auto pa = a.parameters();
    auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (pa[i]->value.data() != pb[i]->value.data()) failures.push_back("soft update fixed point");
  }

  // TD targets
  if (std::abs(td_from_q(1.0f, false, 0.99, {2.0f, 1.0f}, {0.0f, 0.0f}, false) - 2.98f) > 1e-6f)
    failures.push_back("bootstrapped target");
  if (td_from_q(2.5f, true, 0.99, {9.0f, 9.0f}, {9.0f, 9.0f}, false) != 2.5f)
    failures.push_back("terminal target");
  if (std::abs(td_from_q(0.0f, false, 0.5, {3.0f, 2.0f}, {1.0f, 5.0f}, true) - 1.0f) > 1e-6f)
    failures.push_back("decoupled argmax target");

  // greedy tie-break prefers the lowest index, even at epsilon 0
  {
    Rng rng(9, 0);
    if (select_action({7.0f, 7.0f, 7.0f}, 0.0, rng) != 0) failures.push_back("tie break");
    if (select_action({1.0f, 3.0f, 2.0f}, 0.0, rng) != 1) failures.push_back("greedy argmax");
  }

  if (failures.empty()) {
    detail = "replay, targets, selection, and target-network sync all hold";
    return true;
  }
  detail = "violated: ";
  for (const auto& f : failures) detail += f + "; ";
  return false;
}

// ---------------------------------------------------------------------------
// criterion 4: environment fidelity
// ---------------------------------------------------------------------------

bool criterion_env_oracle(std::string& detail) {
  auto env = make_env("cartpole");
  Rng rng(1, 0);
  env->reset(rng);
  env->set_state({0.0, 0.0, 0.0, 0.0});
  StepResult r = env->step(1);
  const double vel_err = std::abs(r.obs[1] - 0.1951219512195122);
  const double ang_err = std::abs(r.obs[3] - (-0.2926829268292683));
  if (vel_err > 1e-6 || ang_err > 1e-6) {
    detail = "zero-state step off by vel " + fmt(vel_err, 9) + ", ang vel " + fmt(ang_err, 9);
    return false;
  }

  // trajectories are bit-stable across process-internal reruns
  for (const char* name : {"cartpole", "mountaincar", "acrobot"}) {
    auto roll = [&](std::uint64_t seed) {
      auto e = make_env(name);
      Rng reset_rng(seed, 1);
      Rng act_rng(seed, 2);
      std::vector<float> trace = e->reset(reset_rng);
      for (int t = 0; t < 500; ++t) {
        StepResult s = e->step(static_cast<int>(act_rng.uniform_int(0, e->spec().num_actions - 1)));
        trace.insert(trace.end(), s.obs.begin(), s.obs.end());
        trace.push_back(static_cast<float>(s.reward));
        if (s.terminal || s.truncated) e->reset(reset_rng);
      }
      return trace;
    };
    auto t1 = roll(2024);
    auto t2 = roll(2024);
    if (t1.size() != t2.size() ||
        std::memcmp(t1.data(), t2.data(), t1.size() * sizeof(float)) != 0) {
      detail = std::string(name) + " trajectory is not bit-reproducible";
      return false;
    }
  }
  detail = "zero-state oracle within 1e-6; 500-step trajectories bit-identical on all three tasks";
  return true;
}

// ---------------------------------------------------------------------------
// criteria 5/6/7: desk-scale training outcomes (shared runs)
// ---------------------------------------------------------------------------

struct SeedRun {
  int seed = 0;
  double best = 0.0;
  bool diverged = false;
  double wall_s = 0.0;
};

RunConfig desk_config(const std::string& preset) {
  RunConfig cfg = preset_config(preset);
  cfg.env = "cartpole";
  cfg.model.model_dim = 32;
  cfg.model.num_layers = 2;
  cfg.model.ff_dim = 128;
  cfg.model.history = 5;
  cfg.model.num_heads = 4;
  cfg.total_steps = 50000;
  cfg.eval_every = 1000;
  return cfg;
}

std::vector<SeedRun> train_group(const std::string& tag, RunConfig base) {
  const std::vector<int> seeds{1, 2, 3};
  std::vector<std::future<SeedRun>> futs;
  for (int seed : seeds) {
    futs.push_back(std::async(std::launch::async, [tag, base, seed]() {
      RunConfig cfg = base;
      cfg.agent.seed = static_cast<std::uint64_t>(seed);
      cfg.out_dir = (g_out_root / (tag + "_seed" + std::to_string(seed))).string();
      SeedRun out;
      out.seed = seed;
      const double t0 = now_s();
      TrainArtifacts art = run_train(cfg);
      out.wall_s = now_s() - t0;
      out.best = art.log.best_avg_return;
      out.diverged = art.log.diverged;
      return out;
    }));
  }
  std::vector<SeedRun> runs;
  for (auto& f : futs) runs.push_back(f.get());
  return runs;
}

struct TrainingBundle {
  std::vector<SeedRun> stabilized, first_attempt, unclipped;
  bool have_stabilized = false, have_first = false, have_unclipped = false;

  const std::vector<SeedRun>& get_stabilized() {
    if (!have_stabilized) {
      std::fprintf(stderr, "[acceptance] training the stabilized recipe on 3 seeds...\n");
      stabilized = train_group("stabilized", desk_config("final-table3"));
      have_stabilized = true;
    }
    return stabilized;
  }
  const std::vector<SeedRun>& get_first_attempt() {
    if (!have_first) {
      std::fprintf(stderr, "[acceptance] training the first-attempt recipe on 3 seeds...\n");
      first_attempt = train_group("first_attempt", desk_config("baseline-fig4"));
      have_first = true;
    }
    return first_attempt;
  }
  const std::vector<SeedRun>& get_unclipped() {
    if (!have_unclipped) {
      std::fprintf(stderr, "[acceptance] training the unclipped recipe on 3 seeds...\n");
      RunConfig cfg = desk_config("final-table3");
      cfg.agent.grad_clip.reset();
      unclipped = train_group("unclipped", cfg);
      have_unclipped = true;
    }
    return unclipped;
  }
};

TrainingBundle g_bundle;

std::string describe_runs(const std::vector<SeedRun>& runs) {
  std::string s;
  for (const auto& r : runs) {
    s += "seed " + std::to_string(r.seed) + ": " +
         (r.diverged ? "diverged" : "best " + fmt(r.best, 1)) + " (" + fmt(r.wall_s / 60.0, 1) +
         "m); ";
  }
  return s;
}

bool criterion_stabilized_learns(std::string& detail) {
  const auto& runs = g_bundle.get_stabilized();
  int solved = 0;
  double max_wall = 0.0;
  for (const auto& r : runs) {
    if (!r.diverged && r.best >= 195.0) ++solved;
    max_wall = std::max(max_wall, r.wall_s);
  }
  detail = describe_runs(runs) + std::to_string(solved) + "/3 reached 195";
  if (max_wall > 3600.0) {
    detail += "; a seed exceeded the 60-minute budget";
    return false;
  }
  return solved >= 2;
}

bool criterion_first_attempt_trails(std::string& detail) {
  const auto& stab = g_bundle.get_stabilized();
  double min_success = -1.0;
  for (const auto& r : stab)
    if (!r.diverged && r.best >= 195.0)
      min_success = min_success < 0 ? r.best : std::min(min_success, r.best);
  if (min_success < 0) {
    detail = "no successful stabilized run to compare against";
    return false;
  }
  const double threshold = min_success - 100.0;
  const auto& runs = g_bundle.get_first_attempt();
  int trailing = 0;
  for (const auto& r : runs)
    if (r.diverged || r.best <= threshold) ++trailing;
  detail = describe_runs(runs) + std::to_string(trailing) + "/3 at least 100 below the weakest " +
           "successful stabilized run (" + fmt(min_success, 1) + ")";
  return trailing >= 2;
}

bool criterion_unclipped_suffers(std::string& detail) {
  const auto& stab = g_bundle.get_stabilized();
  double clipped_mean = 0.0;
  for (const auto& r : stab) clipped_mean += r.best;
  clipped_mean /= static_cast<double>(stab.size());

  const auto& runs = g_bundle.get_unclipped();
  int diverged = 0;
  double unclipped_mean = 0.0;
  for (const auto& r : runs) {
    if (r.diverged) ++diverged;
    unclipped_mean += r.best;
  }
  unclipped_mean /= static_cast<double>(runs.size());

  detail = describe_runs(runs) + "clipped mean best " + fmt(clipped_mean, 1) +
           " vs unclipped " + fmt(unclipped_mean, 1) + ", " + std::to_string(diverged) +
           " divergence(s)";
  if (diverged >= 1 || unclipped_mean <= 0.75 * clipped_mean) return true;
  // the harm is expected but not guaranteed at this scale; report it either way
  detail += " [expected degradation not observed at this scale]";
  return true;
}

// ---------------------------------------------------------------------------
// criterion 8: forest importance isolates a planted signal
// ---------------------------------------------------------------------------

bool criterion_importance(std::string& detail) {
  SearchSpace space = parse_search_space(R"({
    "params": [
      {"name": "p1", "kind": "uniform",     "lo": 0.0,  "hi": 1.0},
      {"name": "p2", "kind": "uniform",     "lo": 0.0,  "hi": 1.0},
      {"name": "p3", "kind": "log_uniform", "lo": 1e-4, "hi": 1e-1},
      {"name": "p4", "kind": "categorical", "values": ["a", "b", "c"]}
    ]
  })");

  const int trials_per_seed = 200;
  const int n_seeds = 100;
  int hits = 0;
  for (int s = 0; s < n_seeds; ++s) {
    Rng data_rng(static_cast<std::uint64_t>(s), 100);
    std::vector<TrialRecord> records;
    for (int t = 0; t < trials_per_seed; ++t) {
      TrialRecord rec;
      rec.trial_index = t;
      rec.sample = sample_random(space, data_rng);
      rec.score = rec.sample.at("p1").num + 0.1 * data_rng.normal();
      records.push_back(rec);
    }
    Rng forest_rng(static_cast<std::uint64_t>(s), 200);
    ImportanceReport rep = mdi_importance(records, space, ForestOptions{}, forest_rng);
    std::size_t p1 = 0, best = 0;
    for (std::size_t i = 0; i < rep.param_names.size(); ++i) {
      if (rep.param_names[i] == "p1") p1 = i;
      if (rep.averaged[i] > rep.averaged[best]) best = i;
    }
    if (best == p1 && rep.averaged[p1] > 0.5) ++hits;
  }
  detail = std::to_string(hits) + "/" + std::to_string(n_seeds) +
           " seeded datasets ranked the planted parameter first with importance > 0.5";
  return hits >= 95;
}

// ---------------------------------------------------------------------------
// criterion 9: TPE concentrates; empty history matches the random sampler
// ---------------------------------------------------------------------------

double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    d = std::max(d, std::abs(i / n1 - j / n2));
  }
  const double ne = n1 * n2 / (n1 + n2);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

bool criterion_tpe(std::string& detail) {
  // band concentration: reward samples falling in [0.4, 0.6]
  SearchSpace space;
  ParamSpec x;
  x.name = "x";
  x.kind = ParamSpec::Kind::Uniform;
  x.lo = 0.0;
  x.hi = 1.0;
  space.params.push_back(x);

  TpeOptions opts;
  Rng rng(424242, 0);
  std::vector<TrialRecord> history;
  int in_band = 0;
  for (int t = 0; t < 100; ++t) {
    Sample smp = sample_tpe(space, history, opts, rng);
    const double v = smp.at("x").num;
    if (t >= 50 && v >= 0.3 && v <= 0.7) ++in_band;
    TrialRecord rec;
    rec.trial_index = t;
    rec.sample = smp;
    rec.score = (v >= 0.4 && v <= 0.6) ? 1.0 : 0.0;
    history.push_back(rec);
  }

  // distributional null: with no history TPE must sample like the prior
  const int n = 10000;
  std::vector<double> tpe_draws, rnd_draws;
  Rng tpe_rng(7, 1), rnd_rng(13, 2);
  for (int i = 0; i < n; ++i) {
    tpe_draws.push_back(sample_tpe(space, {}, opts, tpe_rng).at("x").num);
    rnd_draws.push_back(sample_random(space, rnd_rng).at("x").num);
  }
  const double p = ks_two_sample_p(std::move(tpe_draws), std::move(rnd_draws));

  detail = std::to_string(in_band) + "/50 informed samples landed in [0.3,0.7]; " +
           "empty-history KS p = " + fmt(p, 4);
  return in_band >= 35 && p > 0.01;
}

// ---------------------------------------------------------------------------
// criterion 10: a full search run is byte-reproducible
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<unreadable:" + path + ">";
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

bool criterion_study_replica(std::string& detail) {
  SearchSpace space = parse_search_space(R"({
    "params": [
      {"name": "agent.lr",                    "kind": "log_uniform", "lo": 1e-5, "hi": 1e-3},
      {"name": "agent.epsilon",               "kind": "uniform",     "lo": 0.0,  "hi": 1.0},
      {"name": "agent.batch_size",            "kind": "categorical", "values": ["16", "32"]},
      {"name": "agent.initial_collect_steps", "kind": "int_uniform", "lo": 200,  "hi": 800}
    ]
  })");

  RunConfig base = desk_config("final-table3");

  StudyOptions opts;
  opts.sampler = "tpe";
  opts.n_trials = 30;
  opts.envs = {"cartpole"};
  opts.steps = 5000;
  opts.runs_per_sample = 2;
  opts.workers = 4;
  opts.seed = 42;

  const double t0 = now_s();
  std::fprintf(stderr, "[acceptance] running the 30-trial study, first replica...\n");
  SearchArtifacts a = run_search(space, opts, base, (g_out_root / "study_a").string());
  std::fprintf(stderr, "[acceptance] running the 30-trial study, second replica...\n");
  SearchArtifacts b = run_search(space, opts, base, (g_out_root / "study_b").string());
  const double wall = now_s() - t0;

  const bool trials_eq = slurp(a.trials_path) == slurp(b.trials_path);
  const bool imp_eq = slurp(a.importance_path) == slurp(b.importance_path);
  const bool marg_eq = slurp(a.marginals_path) == slurp(b.marginals_path);
  const bool files_ok = fs::file_size(a.trials_path) > 0 && fs::file_size(a.importance_path) > 0 &&
                        fs::file_size(a.marginals_path) > 0;

  detail = "30 trials x 1 env x 2 runs, twice, in " + fmt(wall / 60.0, 1) + "m; trials.csv " +
           (trials_eq ? "identical" : "DIFFER") + ", importance.csv " +
           (imp_eq ? "identical" : "DIFFER") + ", marginals.csv " +
           (marg_eq ? "identical" : "DIFFER");
  return trials_eq && imp_eq && marg_eq && files_ok && wall < 4.0 * 3600.0;
}

// ---------------------------------------------------------------------------
// criterion 11: checkpoint round trip
// ---------------------------------------------------------------------------

bool criterion_checkpoint(std::string& detail) {
  RunConfig cfg = desk_config("final-table3");
  cfg.model.model_dim = 8;
  cfg.model.num_heads = 2;
  cfg.model.num_layers = 1;
  cfg.model.ff_dim = 16;
  cfg.model.history = 2;
  cfg.total_steps = 300;
  cfg.eval_every = 150;
  cfg.agent.initial_collect_steps = 16;
  cfg.agent.batch_size = 8;
  cfg.agent.seed = 9;
  cfg.out_dir = (g_out_root / "roundtrip").string();
  TrainArtifacts art = run_train(cfg);

  EvalStats e1 = run_eval(art.final_checkpoint, "", 10, 555);
  EvalStats e2 = run_eval(art.final_checkpoint, "", 10, 555);
  if (e1.returns != e2.returns) {
    detail = "two evaluations of the same checkpoint disagree";
    return false;
  }

  // reload into a differently-initialized net and re-save: bytes must match
  Checkpoint ck = load_checkpoint(art.final_checkpoint);
  QNetworkSpec spec = art.config.model;
  QNet net(spec, 31337);
  load_qnet(net, ck);
  const std::string resaved = (g_out_root / "roundtrip" / "resaved.ckpt").string();
  save_qnet(resaved, ck.meta, net);
  const bool bytes_eq = slurp(art.final_checkpoint) == slurp(resaved);

  EvalStats e3 = evaluate_policy(net, art.config.env, 10, 555, art.config.agent.env_normalize);
  const bool returns_eq = e3.returns == e1.returns;

  detail = std::string("re-saved checkpoint ") + (bytes_eq ? "byte-identical" : "DIFFERS") +
           "; greedy returns " + (returns_eq ? "bit-identical" : "DIFFER") + " (mean " +
           fmt(e1.mean, 1) + ")";
  return bytes_eq && returns_eq;
}

struct Criterion {
  int id;
  const char* name;
  bool (*fn)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "gradient oracle", criterion_gradients},
    {2, "shape contract", criterion_shapes},
    {3, "value-learning rules", criterion_dqn_semantics},
    {4, "environment fidelity", criterion_env_oracle},
    {5, "stabilized recipe learns", criterion_stabilized_learns},
    {6, "first-attempt recipe trails", criterion_first_attempt_trails},
    {7, "clipping ablation", criterion_unclipped_suffers},
    {8, "importance analysis", criterion_importance},
    {9, "search sampler", criterion_tpe},
    {10, "study replica", criterion_study_replica},
    {11, "checkpoint round trip", criterion_checkpoint},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only.insert(std::atoi(argv[++i]));
    } else if (arg == "--out" && i + 1 < argc) {
      g_out_root = argv[++i];
    } else if (arg == "--help" || arg == "-h") {
      std::printf("usage: %s [--only N]... [--out DIR]\n", argv[0]);
      return 0;
    } else {
      std::fprintf(stderr, "unknown argument: %s\n", arg.c_str());
      return 64;
    }
  }

  std::error_code ec;
  fs::create_directories(g_out_root, ec);

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
      ok = false;
    }
    std::printf("criterion %d: %s - %s (%s)\n", c.id, ok ? "PASS" : "FAIL", c.name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
