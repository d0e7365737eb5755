#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

struct StepResult {
  Vec s_next;
  double r = 0.0;
  bool done = false;
};

/**
 * Finite-action environment. Instances are immutable; state is passed
 * explicitly, so a single instance can serve many concurrent rollouts.
 */
class Env {
 public:
  virtual ~Env() = default;
  virtual int state_dim() const = 0;
  virtual int num_actions() const = 0;
  virtual Vec reset(Rng& rng) const = 0;
  virtual StepResult step(const Vec& s, int a, Rng& rng) const = 0;
  /// Known reward map r(s, a); model rollouts label data with this directly.
  virtual double reward(const Vec& s, int a) const = 0;
  /// Termination predicate on a state. Applied to real and predicted states.
  virtual bool terminal(const Vec& s) const = 0;
  /// Axis-aligned box containing all reachable (non-terminal) states.
  virtual std::pair<Vec, Vec> state_box() const = 0;

 protected:
  void check_action(int a) const {
    if (a < 0 || a >= num_actions())
      throw ActionError("action " + std::to_string(a) + " outside [0, " +
                        std::to_string(num_actions()) + ")");
  }
  void check_state(const Vec& s) const {
    if (static_cast<int>(s.size()) != state_dim())
      throw DimensionError("state dim " + std::to_string(s.size()) + ", expected " +
                           std::to_string(state_dim()));
  }
};

/**
 * Torque-limited pendulum balance task, three actions {-tau_max, 0, +tau_max}.
 *
 * State (theta, omega) with theta = 0 upright. Explicit Euler at dt. The
 * episode terminates when either coordinate leaves its bound, so every
 * non-terminal state lies in the box and the reward below is bounded on it.
 * Reward is maximal (exactly 1) at the upright rest state under zero torque.
 */
class DiscretePendulum : public Env {
 public:
  struct Params {
    double gravity = 10.0;
    double length = 1.0;
    double mass = 1.0;
    double dt = 0.05;
    double torque_max = 2.0;
    double theta_max = 0.8;
    double omega_max = 6.0;
    double init_range = 0.1;  // reset box half-width, both coordinates
  };

  DiscretePendulum() : DiscretePendulum(Params{}) {}
  explicit DiscretePendulum(Params p) : p_(p) {
    if (p_.dt <= 0.0 || p_.theta_max <= 0.0 || p_.omega_max <= 0.0)
      throw ConfigError("DiscretePendulum: dt and bounds must be positive");
  }

  int state_dim() const override { return 2; }
  int num_actions() const override { return 3; }

  Vec reset(Rng& rng) const override {
    return {rng.uniform(-p_.init_range, p_.init_range),
            rng.uniform(-p_.init_range, p_.init_range)};
  }

  StepResult step(const Vec& s, int a, Rng&) const override {
    check_state(s);
    check_action(a);
    double r = reward(s, a);
    double tau = torque(a);
    double theta = s[0], omega = s[1];
    double acc = 1.5 * p_.gravity / p_.length * std::sin(theta) +
                 3.0 * tau / (p_.mass * p_.length * p_.length);
    Vec s2 = {theta + p_.dt * omega, omega + p_.dt * acc};
    bool done = terminal(s2);
    return {std::move(s2), r, done};
  }

  double reward(const Vec& s, int a) const override {
    check_state(s);
    check_action(a);
    double th = s[0] / p_.theta_max;
    double om = s[1] / p_.omega_max;
    double tq = torque(a) / p_.torque_max;
    return 1.0 - th * th - 0.1 * om * om - 0.01 * tq * tq;
  }

  bool terminal(const Vec& s) const override {
    check_state(s);
    return std::abs(s[0]) > p_.theta_max || std::abs(s[1]) > p_.omega_max;
  }

  std::pair<Vec, Vec> state_box() const override {
    return {{-p_.theta_max, -p_.omega_max}, {p_.theta_max, p_.omega_max}};
  }

  double torque(int a) const { return (a - 1) * p_.torque_max; }
  const Params& params() const { return p_; }

 private:
  Params p_;
};

/**
 * Linear dynamics with additive Gaussian noise and a bounded reward:
 *
 *   s' = a_scale * s + b_scale * e_{j mod d} + sigma * z,   z ~ N(0, I)
 *   r(s, a) = tanh(w . s),  w = (1, ..., 1) / sqrt(d)
 *
 * The structured form keeps the mean map's Lipschitz constant closed-form:
 * over keys (s, u) with u the action one-hot scaled by action_weight,
 * ||mu(key) - mu(key')|| <= sqrt(a_scale^2 + (b_scale/action_weight)^2 * c) *
 * ||key - key'|| with c = ceil(n_a / d) the largest number of actions sharing
 * a push dimension. Reward is 1-bounded and ||w||-Lipschitz by construction.
 * Reset is a point mass at the origin; episodes never terminate on state.
 */
class LinearGaussianEnv : public Env {
 public:
  struct Params {
    int state_dim = 4;
    int num_actions = 4;
    double a_scale = 0.9;
    double b_scale = 0.5;
    double sigma = 0.1;      // per-dimension noise std
    double box_half = 1.0;   // sampling box for pretraining and harnesses
  };

  LinearGaussianEnv() : LinearGaussianEnv(Params{}) {}
  explicit LinearGaussianEnv(Params p) : p_(p) {
    if (p_.state_dim <= 0 || p_.num_actions <= 0)
      throw ConfigError("LinearGaussianEnv: dimensions must be positive");
    if (p_.sigma < 0.0) throw ConfigError("LinearGaussianEnv: sigma must be non-negative");
  }

  int state_dim() const override { return p_.state_dim; }
  int num_actions() const override { return p_.num_actions; }

  Vec reset(Rng&) const override { return Vec(p_.state_dim, 0.0); }

  /// Noise-free mean of the next state.
  Vec mean_next(const Vec& s, int a) const {
    check_state(s);
    check_action(a);
    Vec m = scale(s, p_.a_scale);
    m[a % p_.state_dim] += p_.b_scale;
    return m;
  }

  StepResult step(const Vec& s, int a, Rng& rng) const override {
    Vec m = mean_next(s, a);
    for (double& v : m) v += p_.sigma * rng.normal();
    return {std::move(m), reward(s, a), false};
  }

  double reward(const Vec& s, int a) const override {
    check_state(s);
    check_action(a);
    double z = 0.0;
    double w = 1.0 / std::sqrt(static_cast<double>(p_.state_dim));
    for (double v : s) z += w * v;
    return std::tanh(z);
  }

  bool terminal(const Vec& s) const override {
    check_state(s);
    return false;
  }

  std::pair<Vec, Vec> state_box() const override {
    return {Vec(p_.state_dim, -p_.box_half), Vec(p_.state_dim, p_.box_half)};
  }

  /// Closed-form Lipschitz constant of the mean map over embedded keys.
  double mu_lipschitz(double action_weight = 1.0) const {
    int c = (p_.num_actions + p_.state_dim - 1) / p_.state_dim;
    double be = p_.b_scale / action_weight;
    return std::sqrt(p_.a_scale * p_.a_scale + be * be * c);
  }

  /// Sum over dimensions of the per-dimension noise variance.
  double total_noise_var() const { return p_.sigma * p_.sigma * p_.state_dim; }

  const Params& params() const { return p_; }

 private:
  Params p_;
};

}  // namespace dynafilter
