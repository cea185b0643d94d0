#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "tbqn/errors.h"
#include "tbqn/rng.h"

namespace tbqn {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int num_actions = 0;
  int max_episode_steps = 0;
  std::string reward_structure;
  // Per-dimension bounds used by observation normalization. Unbounded
  // velocity-like dimensions carry documented clipping bounds instead.
  std::vector<float> obs_low, obs_high;
};

struct StepResult {
  std::vector<float> obs;
  double reward = 0.0;
  bool terminal = false;   // environment-defined failure/goal
  bool truncated = false;  // time limit; reported separately so bootstrapping stays correct
};

// Classic-control environment. Physics runs in double; observations are
// rounded to float. Dynamics constants are transcribed from the canonical
// published descriptions and pinned by unit tests.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<float> reset(Rng& rng) = 0;
  virtual StepResult step(int action) = 0;
  // Debug/test hook: overwrite the internal physics state (cartpole: x, x_dot,
  // theta, theta_dot; mountaincar: position, velocity; acrobot: theta1,
  // theta2, omega1, omega2). Clears the episode-over latch, keeps the step
  // counter. Wrong width -> ContractError.
  virtual void set_state(const std::vector<double>& state) = 0;
};

std::unique_ptr<Env> make_env(const std::string& name);

// enabled: maps each dimension affinely to [-1,1] by its bounds (inputs
// clipped to the bounds first); disabled: identity.
std::vector<float> normalize_obs(const std::vector<float>& obs, const EnvSpec& spec, bool enabled);

// Sliding window of the last H observations, oldest first, zero-filled while
// the episode is younger than H. Flat row-major [H * state_dim].
class HistoryBuffer {
 public:
  HistoryBuffer(int horizon, int state_dim);
  void reset(const std::vector<float>& first_obs);
  void push(const std::vector<float>& obs);
  const std::vector<float>& flat() const { return data_; }
  int horizon() const { return horizon_; }
  int state_dim() const { return state_dim_; }

 private:
  int horizon_, state_dim_;
  std::vector<float> data_;
};

}  // namespace tbqn
