#include "tbqn/env.h"

#include <algorithm>
#include <cmath>

namespace tbqn {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_action(int action, const EnvSpec& spec) {
  if (action < 0 || action >= spec.num_actions)
    throw ContractError(spec.name + ": action " + std::to_string(action) + " out of range [0," +
                        std::to_string(spec.num_actions) + ")");
}

// Pole balancing, Euler-integrated at 20 ms with the standard constants.
class CartPole final : public Env {
 public:
  CartPole() {
    spec_.name = "cartpole";
    spec_.state_dim = 4;
    spec_.num_actions = 2;
    spec_.max_episode_steps = 500;
    spec_.reward_structure = "+1 per step until failure or time limit";
    // position/angle bounds are 2x the failure thresholds (matching the
    // declared observation space); velocities get clip bounds for scaling
    spec_.obs_low = {-4.8f, -10.0f, -0.41887903f, -10.0f};
    spec_.obs_high = {4.8f, 10.0f, 0.41887903f, 10.0f};
  }
  const EnvSpec& spec() const override { return spec_; }

  std::vector<float> reset(Rng& rng) override {
    for (double& v : s_) v = rng.uniform(-0.05, 0.05);
    steps_ = 0;
    done_ = false;
    return obs();
  }

  StepResult step(int action) override {
    check_action(action, spec_);
    if (done_) throw ContractError("cartpole: step() after episode end");
    const double gravity = 9.8, masscart = 1.0, masspole = 0.1;
    const double total_mass = masscart + masspole;
    const double length = 0.5;  // half the pole length
    const double polemass_length = masspole * length;
    const double force_mag = 10.0, tau = 0.02;

    double x = s_[0], x_dot = s_[1], theta = s_[2], theta_dot = s_[3];
    const double force = action == 1 ? force_mag : -force_mag;
    const double costheta = std::cos(theta), sintheta = std::sin(theta);
    const double temp = (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass;
    const double thetaacc = (gravity * sintheta - costheta * temp) /
                            (length * (4.0 / 3.0 - masspole * costheta * costheta / total_mass));
    const double xacc = temp - polemass_length * thetaacc * costheta / total_mass;
    x += tau * x_dot;
    x_dot += tau * xacc;
    theta += tau * theta_dot;
    theta_dot += tau * thetaacc;
    s_ = {x, x_dot, theta, theta_dot};

    const double theta_threshold = 12.0 * 2.0 * kPi / 360.0;
    StepResult r;
    r.obs = obs();
    r.reward = 1.0;
    r.terminal = x < -2.4 || x > 2.4 || theta < -theta_threshold || theta > theta_threshold;
    ++steps_;
    r.truncated = !r.terminal && steps_ >= spec_.max_episode_steps;
    done_ = r.terminal || r.truncated;
    return r;
  }

  void set_state(const std::vector<double>& state) override {
    if (state.size() != 4) throw ContractError("cartpole: set_state expects 4 values");
    std::copy(state.begin(), state.end(), s_.begin());
    done_ = false;
  }

 private:
  std::vector<float> obs() const {
    return {static_cast<float>(s_[0]), static_cast<float>(s_[1]), static_cast<float>(s_[2]),
            static_cast<float>(s_[3])};
  }
  EnvSpec spec_;
  std::array<double, 4> s_{};
  int steps_ = 0;
  bool done_ = false;
};

// Underpowered car in a valley; standard discrete version.
class MountainCar final : public Env {
 public:
  MountainCar() {
    spec_.name = "mountaincar";
    spec_.state_dim = 2;
    spec_.num_actions = 3;
    spec_.max_episode_steps = 200;
    spec_.reward_structure = "-1 per step until the goal position";
    spec_.obs_low = {-1.2f, -0.07f};
    spec_.obs_high = {0.6f, 0.07f};
  }
  const EnvSpec& spec() const override { return spec_; }

  std::vector<float> reset(Rng& rng) override {
    pos_ = rng.uniform(-0.6, -0.4);
    vel_ = 0.0;
    steps_ = 0;
    done_ = false;
    return obs();
  }

  StepResult step(int action) override {
    check_action(action, spec_);
    if (done_) throw ContractError("mountaincar: step() after episode end");
    const double force = 0.001, gravity = 0.0025;
    const double min_position = -1.2, max_position = 0.6, max_speed = 0.07, goal_position = 0.5;

    vel_ += (action - 1) * force + std::cos(3.0 * pos_) * (-gravity);
    vel_ = std::clamp(vel_, -max_speed, max_speed);
    pos_ += vel_;
    pos_ = std::clamp(pos_, min_position, max_position);
    if (pos_ == min_position && vel_ < 0.0) vel_ = 0.0;

    StepResult r;
    r.obs = obs();
    r.reward = -1.0;
    r.terminal = pos_ >= goal_position && vel_ >= 0.0;
    ++steps_;
    r.truncated = !r.terminal && steps_ >= spec_.max_episode_steps;
    done_ = r.terminal || r.truncated;
    return r;
  }

  void set_state(const std::vector<double>& state) override {
    if (state.size() != 2) throw ContractError("mountaincar: set_state expects 2 values");
    pos_ = state[0];
    vel_ = state[1];
    done_ = false;
  }

 private:
  std::vector<float> obs() const { return {static_cast<float>(pos_), static_cast<float>(vel_)}; }
  EnvSpec spec_;
  double pos_ = 0.0, vel_ = 0.0;
  int steps_ = 0;
  bool done_ = false;
};

// Two-link pendulum with the book dynamics, RK4-integrated at 0.2 s.
class Acrobot final : public Env {
 public:
  Acrobot() {
    spec_.name = "acrobot";
    spec_.state_dim = 6;
    spec_.num_actions = 3;
    spec_.max_episode_steps = 500;
    spec_.reward_structure = "-1 per step, 0 on reaching the target height";
    const float v1 = static_cast<float>(4.0 * kPi), v2 = static_cast<float>(9.0 * kPi);
    spec_.obs_low = {-1.0f, -1.0f, -1.0f, -1.0f, -v1, -v2};
    spec_.obs_high = {1.0f, 1.0f, 1.0f, 1.0f, v1, v2};
  }
  const EnvSpec& spec() const override { return spec_; }

  std::vector<float> reset(Rng& rng) override {
    for (double& v : s_) v = rng.uniform(-0.1, 0.1);
    steps_ = 0;
    done_ = false;
    return obs();
  }

  StepResult step(int action) override {
    check_action(action, spec_);
    if (done_) throw ContractError("acrobot: step() after episode end");
    const double torque = static_cast<double>(action - 1);
    const double dt = 0.2;

    // one RK4 step of the augmented state (torque rides along as a constant)
    std::array<double, 4> y = s_;
    auto k1 = dsdt(y, torque);
    auto k2 = dsdt(shifted(y, k1, dt / 2), torque);
    auto k3 = dsdt(shifted(y, k2, dt / 2), torque);
    auto k4 = dsdt(shifted(y, k3, dt), torque);
    for (int i = 0; i < 4; ++i) y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

    y[0] = wrap(y[0]);
    y[1] = wrap(y[1]);
    y[2] = std::clamp(y[2], -4.0 * kPi, 4.0 * kPi);
    y[3] = std::clamp(y[3], -9.0 * kPi, 9.0 * kPi);
    s_ = y;

    StepResult r;
    r.obs = obs();
    r.terminal = -std::cos(s_[0]) - std::cos(s_[1] + s_[0]) > 1.0;
    r.reward = r.terminal ? 0.0 : -1.0;
    ++steps_;
    r.truncated = !r.terminal && steps_ >= spec_.max_episode_steps;
    done_ = r.terminal || r.truncated;
    return r;
  }

  void set_state(const std::vector<double>& state) override {
    if (state.size() != 4) throw ContractError("acrobot: set_state expects 4 values");
    std::copy(state.begin(), state.end(), s_.begin());
    done_ = false;
  }

 private:
  static std::array<double, 4> shifted(const std::array<double, 4>& y, const std::array<double, 4>& k,
                                       double h) {
    std::array<double, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = y[i] + h * k[i];
    return out;
  }

  static std::array<double, 4> dsdt(const std::array<double, 4>& s, double a) {
    const double m1 = 1.0, m2 = 1.0, l1 = 1.0, lc1 = 0.5, lc2 = 0.5, i1 = 1.0, i2 = 1.0, g = 9.8;
    const double theta1 = s[0], theta2 = s[1], dtheta1 = s[2], dtheta2 = s[3];
    const double d1 =
        m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
    const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
    const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - kPi / 2.0);
    const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                        2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                        (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - kPi / 2.0) + phi2;
    const double ddtheta2 =
        (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
        (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    return {dtheta1, dtheta2, ddtheta1, ddtheta2};
  }

  static double wrap(double x) {
    while (x > kPi) x -= 2.0 * kPi;
    while (x < -kPi) x += 2.0 * kPi;
    return x;
  }

  std::vector<float> obs() const {
    return {static_cast<float>(std::cos(s_[0])), static_cast<float>(std::sin(s_[0])),
            static_cast<float>(std::cos(s_[1])), static_cast<float>(std::sin(s_[1])),
            static_cast<float>(s_[2]), static_cast<float>(s_[3])};
  }

  EnvSpec spec_;
  std::array<double, 4> s_{};
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "cartpole") return std::make_unique<CartPole>();
  if (name == "mountaincar") return std::make_unique<MountainCar>();
  if (name == "acrobot") return std::make_unique<Acrobot>();
  throw ConfigError("unknown environment '" + name + "' (expected cartpole, mountaincar, or acrobot)");
}

std::vector<float> normalize_obs(const std::vector<float>& obs, const EnvSpec& spec, bool enabled) {
  if (!enabled) return obs;
  std::vector<float> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const float lo = spec.obs_low[i], hi = spec.obs_high[i];
    const float x = std::clamp(obs[i], lo, hi);
    out[i] = (x - lo) / (hi - lo) * 2.0f - 1.0f;
  }
  return out;
}

HistoryBuffer::HistoryBuffer(int horizon, int state_dim)
    : horizon_(horizon), state_dim_(state_dim),
      data_(static_cast<std::size_t>(horizon) * state_dim, 0.0f) {
  if (horizon < 1) throw ConfigError("history horizon must be >= 1");
  if (state_dim < 1) throw ConfigError("state_dim must be >= 1");
}

void HistoryBuffer::reset(const std::vector<float>& first_obs) {
  std::fill(data_.begin(), data_.end(), 0.0f);
  push(first_obs);
}

void HistoryBuffer::push(const std::vector<float>& obs) {
  if (static_cast<int>(obs.size()) != state_dim_)
    throw ContractError("history push: observation width " + std::to_string(obs.size()) +
                        " != state_dim " + std::to_string(state_dim_));
  std::copy(data_.begin() + state_dim_, data_.end(), data_.begin());
  std::copy(obs.begin(), obs.end(), data_.end() - state_dim_);
}

}  // namespace tbqn
