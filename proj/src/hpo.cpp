#include "tbqn/hpo.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tbqn/textio.h"

namespace tbqn {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;

double gauss_pdf(double x, double mu, double bw) {
  const double z = (x - mu) / bw;
  return std::exp(-0.5 * z * z) / (bw * std::sqrt(kTwoPi));
}
}  // namespace

void ParamSpec::validate() const {
  if (name.empty()) throw ConfigError("search space: parameter with empty name");
  switch (kind) {
    case Kind::Categorical:
      if (values.size() < 2)
        throw ConfigError("search space: categorical '" + name + "' needs >= 2 values");
      break;
    case Kind::Uniform:
      if (!(lo < hi)) throw ConfigError("search space: uniform '" + name + "' needs lo < hi");
      break;
    case Kind::LogUniform:
      if (!(lo < hi)) throw ConfigError("search space: log_uniform '" + name + "' needs lo < hi");
      if (lo <= 0.0) throw ConfigError("search space: log_uniform '" + name + "' needs lo > 0");
      break;
    case Kind::IntUniform:
      // degenerate lo == hi is allowed (a pinned integer)
      if (lo > hi) throw ConfigError("search space: int_uniform '" + name + "' needs lo <= hi");
      break;
  }
}

const ParamSpec* SearchSpace::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void SearchSpace::validate() const {
  if (params.empty()) throw ConfigError("search space: no parameters");
  for (const auto& p : params) {
    p.validate();
    int dup = 0;
    for (const auto& q : params)
      if (q.name == p.name) ++dup;
    if (dup != 1) throw ConfigError("search space: duplicate parameter '" + p.name + "'");
  }
}

SearchSpace parse_search_space(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search space: JSON parse error: ") + e.what());
  }
  if (!j.contains("params") || !j["params"].is_array())
    throw ConfigError("search space: expected top-level 'params' array");
  SearchSpace space;
  for (const auto& pj : j["params"]) {
    ParamSpec p;
    p.name = pj.at("name").get<std::string>();
    const std::string kind = pj.at("kind").get<std::string>();
    if (kind == "categorical") {
      p.kind = ParamSpec::Kind::Categorical;
      for (const auto& v : pj.at("values"))
        p.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (kind == "uniform") {
      p.kind = ParamSpec::Kind::Uniform;
      p.lo = pj.at("lo").get<double>();
      p.hi = pj.at("hi").get<double>();
    } else if (kind == "log_uniform") {
      p.kind = ParamSpec::Kind::LogUniform;
      p.lo = pj.at("lo").get<double>();
      p.hi = pj.at("hi").get<double>();
    } else if (kind == "int_uniform") {
      p.kind = ParamSpec::Kind::IntUniform;
      p.lo = pj.at("lo").get<double>();
      p.hi = pj.at("hi").get<double>();
    } else {
      throw ConfigError("search space: unknown kind '" + kind + "' for parameter '" + p.name + "'");
    }
    space.params.push_back(std::move(p));
  }
  space.validate();
  return space;
}

SearchSpace load_search_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open search space file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_search_space(ss.str());
}

std::string param_value_to_string(const ParamSpec& spec, const ParamValue& v) {
  switch (spec.kind) {
    case ParamSpec::Kind::Categorical:
      return spec.values.at(static_cast<std::size_t>(v.cat_index));
    case ParamSpec::Kind::IntUniform:
      return std::to_string(static_cast<long long>(std::llround(v.num)));
    default:
      return fmt_double(v.num);
  }
}

Sample sample_random(const SearchSpace& space, Rng& rng) {
  Sample s;
  for (const auto& p : space.params) {
    ParamValue v;
    switch (p.kind) {
      case ParamSpec::Kind::Categorical:
        v.cat_index = static_cast<int>(rng.uniform_int(0, static_cast<long long>(p.values.size()) - 1));
        break;
      case ParamSpec::Kind::Uniform:
        v.num = rng.uniform(p.lo, p.hi);
        break;
      case ParamSpec::Kind::LogUniform:
        v.num = std::pow(10.0, rng.uniform(std::log10(p.lo), std::log10(p.hi)));
        break;
      case ParamSpec::Kind::IntUniform:
        v.num = static_cast<double>(rng.uniform_int(static_cast<long long>(p.lo), static_cast<long long>(p.hi)));
        break;
    }
    s[p.name] = v;
  }
  return s;
}

namespace {

// Parzen mixture with a uniform floor so the density never vanishes:
// (1/range + sum of kernels) / (n + 1)
double parzen_density(double z, const std::vector<double>& centers, double bw, double range) {
  double acc = 1.0 / range;
  for (double c : centers) acc += gauss_pdf(z, c, bw);
  return acc / (static_cast<double>(centers.size()) + 1.0);
}

double tpe_bandwidth(double range, std::size_t n) {
  const double a = range / std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)));
  return std::max(a, range / 50.0);
}

ParamValue tpe_numeric(const ParamSpec& p, const std::vector<double>& good,
                       const std::vector<double>& bad, int n_candidates, Rng& rng) {
  const bool logspace = p.kind == ParamSpec::Kind::LogUniform;
  const double zlo = logspace ? std::log10(p.lo) : p.lo;
  const double zhi = logspace ? std::log10(p.hi) : p.hi;
  const double range = zhi - zlo;
  ParamValue out;
  if (range <= 0.0) {  // degenerate pinned value
    out.num = p.lo;
    return out;
  }
  auto tf = [&](double x) { return logspace ? std::log10(x) : x; };
  std::vector<double> gz, bz;
  gz.reserve(good.size());
  bz.reserve(bad.size());
  for (double v : good) gz.push_back(tf(v));
  for (double v : bad) bz.push_back(tf(v));
  const double bw_l = tpe_bandwidth(range, gz.size());
  const double bw_g = tpe_bandwidth(range, bz.size());

  double best_z = zlo, best_ratio = -1.0;
  for (int c = 0; c < n_candidates; ++c) {
    double z;
    if (gz.empty()) {
      z = rng.uniform(zlo, zhi);
    } else {
      const std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(gz.size()) - 1));
      z = gz[i] + bw_l * rng.normal();
      z = std::clamp(z, zlo, zhi);
    }
    const double l = parzen_density(z, gz, bw_l, range);
    const double g = parzen_density(z, bz, bw_g, range);
    const double ratio = l / g;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_z = z;
    }
  }
  double x = logspace ? std::pow(10.0, best_z) : best_z;
  if (p.kind == ParamSpec::Kind::IntUniform) {
    x = std::clamp(std::round(x), p.lo, p.hi);
  } else {
    x = std::clamp(x, p.lo, p.hi);
  }
  out.num = x;
  return out;
}

ParamValue tpe_categorical(const ParamSpec& p, const std::vector<int>& good, const std::vector<int>& bad,
                           int n_candidates, Rng& rng) {
  const std::size_t k = p.values.size();
  std::vector<double> pl(k, 1.0), pg(k, 1.0);  // Laplace smoothing
  for (int v : good) pl[static_cast<std::size_t>(v)] += 1.0;
  for (int v : bad) pg[static_cast<std::size_t>(v)] += 1.0;
  const double zl = static_cast<double>(good.size()) + static_cast<double>(k);
  const double zg = static_cast<double>(bad.size()) + static_cast<double>(k);
  for (auto& x : pl) x /= zl;
  for (auto& x : pg) x /= zg;

  int best = 0;
  double best_ratio = -1.0;
  for (int c = 0; c < n_candidates; ++c) {
    // inverse-CDF draw from pl
    double u = rng.uniform(), acc = 0.0;
    int cand = static_cast<int>(k) - 1;
    for (std::size_t i = 0; i < k; ++i) {
      acc += pl[i];
      if (u < acc) {
        cand = static_cast<int>(i);
        break;
      }
    }
    const double ratio = pl[static_cast<std::size_t>(cand)] / pg[static_cast<std::size_t>(cand)];
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = cand;
    }
  }
  ParamValue out;
  out.cat_index = best;
  return out;
}

}  // namespace

Sample sample_tpe(const SearchSpace& space, const std::vector<TrialRecord>& history,
                  const TpeOptions& opts, Rng& rng) {
  if (static_cast<int>(history.size()) < opts.startup_trials) return sample_random(space, rng);

  // rank by score, best first; stable on trial index
  std::vector<const TrialRecord*> ranked;
  ranked.reserve(history.size());
  for (const auto& r : history) ranked.push_back(&r);
  std::stable_sort(ranked.begin(), ranked.end(), [](const TrialRecord* a, const TrialRecord* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->trial_index < b->trial_index;
  });
  const std::size_t n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(opts.gamma_quantile * static_cast<double>(ranked.size()))));

  Sample out;
  for (const auto& p : space.params) {
    if (p.kind == ParamSpec::Kind::Categorical) {
      std::vector<int> good, bad;
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        auto it = ranked[i]->sample.find(p.name);
        if (it == ranked[i]->sample.end()) continue;
        (i < n_good ? good : bad).push_back(it->second.cat_index);
      }
      out[p.name] = tpe_categorical(p, good, bad, opts.n_candidates, rng);
    } else {
      std::vector<double> good, bad;
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        auto it = ranked[i]->sample.find(p.name);
        if (it == ranked[i]->sample.end()) continue;
        (i < n_good ? good : bad).push_back(it->second.num);
      }
      out[p.name] = tpe_numeric(p, good, bad, opts.n_candidates, rng);
    }
  }
  return out;
}

std::vector<TrialRecord> run_study(const SearchSpace& space, const StudyOptions& opts,
                                   const Objective& objective) {
  if (opts.n_trials < 1) throw ConfigError("study: n_trials must be >= 1");
  if (opts.envs.empty()) throw ConfigError("study: needs at least one environment");
  if (opts.runs_per_sample < 1) throw ConfigError("study: runs_per_sample must be >= 1");
  if (opts.sampler != "random" && opts.sampler != "tpe")
    throw ConfigError("study: sampler must be 'random' or 'tpe', got '" + opts.sampler + "'");
  space.validate();

  Rng sampler_rng(opts.seed, 0xfeed);
  std::vector<TrialRecord> records;
  records.reserve(static_cast<std::size_t>(opts.n_trials));

  const int jobs_per_trial = static_cast<int>(opts.envs.size()) * opts.runs_per_sample;
  for (int trial = 0; trial < opts.n_trials; ++trial) {
    TrialRecord rec;
    rec.trial_index = trial;
    rec.seed = mix_seed(opts.seed, 0x51000 + static_cast<std::uint64_t>(trial));
    rec.steps_trained = opts.steps;
    rec.sample = opts.sampler == "tpe" ? sample_tpe(space, records, opts.tpe, sampler_rng)
                                       : sample_random(space, sampler_rng);

    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(jobs_per_trial));
    std::atomic<int> next_job{0};
    auto worker = [&] {
      while (true) {
        const int job = next_job.fetch_add(1);
        if (job >= jobs_per_trial) return;
        const int env_idx = job / opts.runs_per_sample;
        const int run = job % opts.runs_per_sample;
        const std::uint64_t run_seed =
            mix_seed(rec.seed, static_cast<std::uint64_t>(env_idx) * 1000003ULL + static_cast<std::uint64_t>(run));
        try {
          outcomes[static_cast<std::size_t>(job)] =
              objective(rec.sample, opts.envs[static_cast<std::size_t>(env_idx)], run, run_seed);
        } catch (const std::exception& e) {
          std::cerr << "trial " << trial << " env " << opts.envs[static_cast<std::size_t>(env_idx)]
                    << " run " << run << " failed: " << e.what() << "\n";
          outcomes[static_cast<std::size_t>(job)] = {0.0, true};
        }
      }
    };
    const int n_threads = std::max(1, std::min(opts.workers, jobs_per_trial));
    if (n_threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(n_threads));
      for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }

    double total = 0.0;
    for (std::size_t e = 0; e < opts.envs.size(); ++e) {
      double env_sum = 0.0;
      for (int run = 0; run < opts.runs_per_sample; ++run) {
        const RunOutcome& o = outcomes[e * static_cast<std::size_t>(opts.runs_per_sample) +
                                       static_cast<std::size_t>(run)];
        env_sum += o.score;
        rec.diverged = rec.diverged || o.diverged;
      }
      const double env_mean = env_sum / static_cast<double>(opts.runs_per_sample);
      rec.env_scores[opts.envs[e]] = env_mean;
      total += env_mean;
    }
    rec.score = total / static_cast<double>(opts.envs.size());
    records.push_back(std::move(rec));
  }
  return records;
}

// --- MDI forest -----------------------------------------------------------

namespace {

struct EncodedData {
  std::vector<std::vector<double>> x;  // row-major rows x F
  int features = 0;
  std::vector<int> feature_param;  // feature index -> param index
};

EncodedData encode_records(const std::vector<TrialRecord>& records, const SearchSpace& space) {
  EncodedData d;
  for (int pi = 0; pi < static_cast<int>(space.params.size()); ++pi) {
    const ParamSpec& p = space.params[static_cast<std::size_t>(pi)];
    const int width = p.kind == ParamSpec::Kind::Categorical ? static_cast<int>(p.values.size()) : 1;
    for (int w = 0; w < width; ++w) d.feature_param.push_back(pi);
    d.features += width;
  }
  d.x.reserve(records.size());
  for (const auto& r : records) {
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(d.features));
    for (const auto& p : space.params) {
      auto it = r.sample.find(p.name);
      if (it == r.sample.end())
        throw ContractError("mdi: record missing parameter '" + p.name + "'");
      if (p.kind == ParamSpec::Kind::Categorical) {
        for (int k = 0; k < static_cast<int>(p.values.size()); ++k)
          row.push_back(it->second.cat_index == k ? 1.0 : 0.0);
      } else if (p.kind == ParamSpec::Kind::LogUniform) {
        row.push_back(std::log10(it->second.num));
      } else {
        row.push_back(it->second.num);
      }
    }
    d.x.push_back(std::move(row));
  }
  return d;
}

struct TreeFitter {
  const EncodedData& d;
  const std::vector<double>& y;
  int max_depth;
  Rng& rng;
  std::vector<double>& importance;  // per feature, raw impurity decrease

  void fit(std::vector<int> rows) { split(std::move(rows), 0); }

  void split(std::vector<int> rows, int depth) {
    const std::size_t n = rows.size();
    if (depth >= max_depth || n < 2) return;
    double sum = 0.0, sum2 = 0.0;
    for (int r : rows) {
      sum += y[static_cast<std::size_t>(r)];
      sum2 += y[static_cast<std::size_t>(r)] * y[static_cast<std::size_t>(r)];
    }
    const double node_imp = sum2 - sum * sum / static_cast<double>(n);  // n * variance
    if (node_imp <= 1e-12) return;

    // sqrt-feature subsample without replacement
    const int f_total = d.features;
    const int f_try = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(f_total))));
    std::vector<int> feats(static_cast<std::size_t>(f_total));
    for (int i = 0; i < f_total; ++i) feats[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < f_try; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(0, f_total - 1 - i));
      std::swap(feats[static_cast<std::size_t>(i)], feats[static_cast<std::size_t>(j)]);
    }

    int best_f = -1;
    double best_gain = 0.0, best_thr = 0.0;
    std::vector<std::pair<double, double>> xy(n);
    for (int fi = 0; fi < f_try; ++fi) {
      const int f = feats[static_cast<std::size_t>(fi)];
      for (std::size_t i = 0; i < n; ++i) {
        const int r = rows[i];
        xy[i] = {d.x[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)], y[static_cast<std::size_t>(r)]};
      }
      std::sort(xy.begin(), xy.end());
      double lsum = 0.0, lsum2 = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        lsum += xy[i].second;
        lsum2 += xy[i].second * xy[i].second;
        if (xy[i].first == xy[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
        const double rsum = sum - lsum, rsum2 = sum2 - lsum2;
        const double limp = lsum2 - lsum * lsum / nl;
        const double rimp = rsum2 - rsum * rsum / nr;
        const double gain = node_imp - limp - rimp;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_thr = 0.5 * (xy[i].first + xy[i + 1].first);
        }
      }
    }
    if (best_f < 0) return;
    importance[static_cast<std::size_t>(best_f)] += best_gain;

    std::vector<int> left, right;
    for (int r : rows)
      (d.x[static_cast<std::size_t>(r)][static_cast<std::size_t>(best_f)] <= best_thr ? left : right)
          .push_back(r);
    if (left.empty() || right.empty()) return;  // degenerate; should not happen
    rows.clear();
    rows.shrink_to_fit();
    split(std::move(left), depth + 1);
    split(std::move(right), depth + 1);
  }
};

// per-parameter normalized importance for one target vector
std::vector<double> forest_importance(const EncodedData& d, const std::vector<double>& y,
                                      const SearchSpace& space, const ForestOptions& opts, Rng rng) {
  const std::size_t n_params = space.params.size();
  std::vector<double> acc(n_params, 0.0);
  const int n = static_cast<int>(d.x.size());
  for (int t = 0; t < opts.n_trees; ++t) {
    std::vector<double> feat_imp(static_cast<std::size_t>(d.features), 0.0);
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (auto& r : rows) r = static_cast<int>(rng.uniform_int(0, n - 1));  // bootstrap
    TreeFitter fitter{d, y, opts.max_depth, rng, feat_imp};
    fitter.fit(std::move(rows));

    std::vector<double> per_param(n_params, 0.0);
    double total = 0.0;
    for (int f = 0; f < d.features; ++f) {
      per_param[static_cast<std::size_t>(d.feature_param[static_cast<std::size_t>(f)])] +=
          feat_imp[static_cast<std::size_t>(f)];
      total += feat_imp[static_cast<std::size_t>(f)];
    }
    if (total > 0.0)
      for (std::size_t i = 0; i < n_params; ++i) acc[i] += per_param[i] / total;
  }
  double total = 0.0;
  for (double v : acc) total += v;
  if (total <= 0.0) {  // constant target: uniform fallback
    return std::vector<double>(n_params, 1.0 / static_cast<double>(n_params));
  }
  for (auto& v : acc) v /= total;
  return acc;
}

}  // namespace

ImportanceReport mdi_importance(const std::vector<TrialRecord>& records, const SearchSpace& space,
                                const ForestOptions& opts, Rng& rng) {
  if (records.size() < 10)
    throw ContractError("mdi_importance: needs >= 10 trial records, got " + std::to_string(records.size()));
  space.validate();
  const EncodedData d = encode_records(records, space);

  ImportanceReport rep;
  for (const auto& p : space.params) rep.param_names.push_back(p.name);

  std::vector<std::string> envs;
  for (const auto& [env, score] : records.front().env_scores) envs.push_back(env);
  for (const auto& r : records)
    if (r.env_scores.size() != envs.size())
      throw ContractError("mdi_importance: records disagree on environment sets");

  const std::uint64_t base = rng.next_u64();
  if (envs.empty()) {
    // no per-env breakdown recorded: fit on the aggregate score only
    std::vector<double> y;
    y.reserve(records.size());
    for (const auto& r : records) y.push_back(r.score);
    rep.averaged = forest_importance(d, y, space, opts, Rng(base, 0));
    return rep;
  }

  rep.averaged.assign(space.params.size(), 0.0);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    std::vector<double> y;
    y.reserve(records.size());
    for (const auto& r : records) y.push_back(r.env_scores.at(envs[e]));
    std::vector<double> imp = forest_importance(d, y, space, opts, Rng(base, e + 1));
    for (std::size_t i = 0; i < imp.size(); ++i) rep.averaged[i] += imp[i] / static_cast<double>(envs.size());
    rep.per_env[envs[e]] = std::move(imp);
  }
  return rep;
}

StudyTwoReport study_two_report(const std::vector<TrialRecord>& records, const SearchSpace& space,
                                int top_k) {
  if (records.empty()) throw ContractError("study_two_report: no records");
  StudyTwoReport rep;

  for (const auto& p : space.params) {
    // bucket label per record
    std::vector<std::pair<std::string, double>> labeled;
    labeled.reserve(records.size());
    for (const auto& r : records) {
      auto it = r.sample.find(p.name);
      if (it == r.sample.end()) continue;
      std::string label;
      if (p.kind == ParamSpec::Kind::Categorical || p.kind == ParamSpec::Kind::IntUniform) {
        label = param_value_to_string(p, it->second);
      } else {
        // quartile bins over the declared range (log10 bins for log_uniform)
        const bool logspace = p.kind == ParamSpec::Kind::LogUniform;
        const double zlo = logspace ? std::log10(p.lo) : p.lo;
        const double zhi = logspace ? std::log10(p.hi) : p.hi;
        const double z = logspace ? std::log10(it->second.num) : it->second.num;
        int bin = static_cast<int>(std::floor((z - zlo) / (zhi - zlo) * 4.0));
        bin = std::clamp(bin, 0, 3);
        auto edge = [&](int b) {
          const double ze = zlo + (zhi - zlo) * b / 4.0;
          return fmt_double(logspace ? std::pow(10.0, ze) : ze);
        };
        label = "[" + edge(bin) + "," + edge(bin + 1) + (bin == 3 ? "]" : ")");
      }
      labeled.emplace_back(std::move(label), r.score);
    }
    // group by label, preserving first-seen order
    std::vector<MarginalRow> rows;
    for (const auto& [label, score] : labeled) {
      auto it = std::find_if(rows.begin(), rows.end(),
                             [&](const MarginalRow& m) { return m.value == label; });
      if (it == rows.end()) {
        rows.push_back({p.name, label, score, 1});
      } else {
        it->mean_score += score;
        it->count += 1;
      }
    }
    for (auto& m : rows) m.mean_score /= static_cast<double>(m.count);
    for (auto& m : rows) rep.marginals.push_back(std::move(m));
  }

  std::vector<std::string> envs;
  for (const auto& [env, score] : records.front().env_scores) envs.push_back(env);
  for (const auto& env : envs) {
    std::vector<int> order;
    for (const auto& r : records)
      if (r.env_scores.count(env)) order.push_back(r.trial_index);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return records[static_cast<std::size_t>(a)].env_scores.at(env) >
             records[static_cast<std::size_t>(b)].env_scores.at(env);
    });
    if (static_cast<int>(order.size()) > top_k) order.resize(static_cast<std::size_t>(top_k));
    rep.top_per_env[env] = std::move(order);
  }
  return rep;
}

void write_trials_csv(const std::string& path, const std::vector<TrialRecord>& records,
                      const SearchSpace& space, const std::vector<std::string>& envs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "trial";
  for (const auto& p : space.params) out << ',' << p.name;
  for (const auto& e : envs) out << ",score_" << e;
  out << ",score,diverged,seed,steps\n";
  for (const auto& r : records) {
    out << r.trial_index;
    for (const auto& p : space.params) {
      auto it = r.sample.find(p.name);
      out << ',' << (it == r.sample.end() ? "" : param_value_to_string(p, it->second));
    }
    for (const auto& e : envs) {
      auto it = r.env_scores.find(e);
      out << ',' << (it == r.env_scores.end() ? "" : fmt_double(it->second));
    }
    out << ',' << fmt_double(r.score) << ',' << (r.diverged ? 1 : 0) << ',' << r.seed << ','
        << r.steps_trained << "\n";
  }
  if (!out) throw IoError("write failed on '" + path + "'");
}

void write_importance_csv(const std::string& path, const ImportanceReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "param";
  for (const auto& [env, imp] : report.per_env) out << ",importance_" << env;
  out << ",importance\n";
  for (std::size_t i = 0; i < report.param_names.size(); ++i) {
    out << report.param_names[i];
    for (const auto& [env, imp] : report.per_env) out << ',' << fmt_double(imp[i]);
    out << ',' << fmt_double(report.averaged[i]) << "\n";
  }
  if (!out) throw IoError("write failed on '" + path + "'");
}

void write_marginals_csv(const std::string& path, const StudyTwoReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "param,value,mean_score,count\n";
  for (const auto& m : report.marginals)
    out << m.param << ",\"" << m.value << "\"," << fmt_double(m.mean_score) << ',' << m.count << "\n";
  if (!out) throw IoError("write failed on '" + path + "'");
}

}  // namespace tbqn
