#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/nn.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

/// Linear exploration decay: eps_start -> eps_end over the first
/// decay_frac share of total_steps, constant eps_end afterwards.
inline double epsilon_linear(std::uint64_t step, std::uint64_t total_steps, double eps_start,
                             double eps_end, double decay_frac) {
  if (total_steps == 0 || decay_frac <= 0.0) return eps_end;
  double horizon = decay_frac * static_cast<double>(total_steps);
  double t = static_cast<double>(step);
  if (t >= horizon) return eps_end;
  return eps_start + (eps_end - eps_start) * (t / horizon);
}

/**
 * Q-learning on an MLP, one output per action.
 *
 * The update is the plain stochastic semi-gradient rule with a frozen target
 * network:
 *
 *   y      = r + gamma * max_a' Q(s', a'; theta-)   (y = r at terminal s')
 *   theta <- theta + alpha * (y - Q(s, a; theta)) * grad_theta Q(s, a; theta)
 *
 * which equals theta - alpha * grad of the half squared TD error with y held
 * fixed. Minibatch mode averages the per-sample updates, all evaluated at the
 * pre-update parameters. The target copy refreshes every sync_period updates.
 */
class DqnAgent {
 public:
  DqnAgent(Mlp q, double alpha, double gamma, std::uint64_t sync_period)
      : q_(std::move(q)),
        target_(q_),
        alpha_(alpha),
        gamma_(gamma),
        sync_period_(sync_period) {
    if (alpha_ <= 0.0) throw ConfigError("DqnAgent: alpha must be positive");
    if (gamma_ < 0.0 || gamma_ > 1.0) throw ConfigError("DqnAgent: gamma must be in [0, 1]");
    if (sync_period_ == 0) throw ConfigError("DqnAgent: sync_period must be positive");
  }

  static DqnAgent make(int state_dim, int n_actions, const std::vector<int>& hidden,
                       Activation act, double alpha, double gamma, std::uint64_t sync_period,
                       Rng& init_rng) {
    std::vector<int> widths;
    widths.push_back(state_dim);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(n_actions);
    return DqnAgent(Mlp::init_random(std::move(widths), act, init_rng), alpha, gamma,
                    sync_period);
  }

  int num_actions() const { return q_.out_dim(); }
  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  std::uint64_t update_count() const { return update_count_; }
  std::uint64_t sync_count() const { return sync_count_; }
  Mlp& q_net() { return q_; }
  const Mlp& q_net() const { return q_; }
  const Mlp& target_net() const { return target_; }

  Vec q_values(const Vec& s) const { return q_.forward(s); }
  double q_value(const Vec& s, int a) const {
    check_act(a);
    return q_.forward(s)[a];
  }

  /// Argmax over Q(s, .); ties resolve to the lowest action id.
  int greedy_action(const Vec& s) const {
    Vec q = q_.forward(s);
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a) {
      if (q[a] > q[best]) best = a;
    }
    return best;
  }

  /// With probability eps a uniform action, otherwise greedy. Consumes one
  /// uniform draw always and a second one only on the explore branch.
  int act_epsilon_greedy(const Vec& s, double eps, Rng& rng) const {
    if (rng.uniform01() < eps) return static_cast<int>(rng.uniform_index(num_actions()));
    return greedy_action(s);
  }

  /// TD target under the frozen copy; terminal transitions do not bootstrap.
  double td_target(const Transition& t) const {
    if (t.done) return t.r;
    Vec qn = target_.forward(t.s_next);
    return t.r + gamma_ * *std::max_element(qn.begin(), qn.end());
  }

  void update_single(const Transition& t) {
    check_act(t.a);
    Vec upstream(num_actions(), 0.0);
    upstream[t.a] = 1.0;
    double q_sa = q_.forward(t.s)[t.a];
    double delta = td_target(t) - q_sa;
    Vec g = q_.grad_params(t.s, upstream);
    Vec& theta = q_.params();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += alpha_ * delta * g[i];
    finish_update();
  }

  /// One update step from the average of per-sample increments, all computed
  /// at the current parameters.
  void update_minibatch(const std::vector<const Transition*>& batch) {
    if (batch.empty()) throw EmptyBufferError("DqnAgent::update_minibatch: empty batch");
    Vec total(q_.num_params(), 0.0);
    for (const Transition* t : batch) {
      check_act(t->a);
      Vec upstream(num_actions(), 0.0);
      upstream[t->a] = 1.0;
      double delta = td_target(*t) - q_.forward(t->s)[t->a];
      Vec g = q_.grad_params(t->s, upstream);
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += delta * g[i];
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    Vec& theta = q_.params();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += alpha_ * inv * total[i];
    finish_update();
  }

  void sync_target() {
    target_ = q_;
    ++sync_count_;
  }

 private:
  void check_act(int a) const {
    if (a < 0 || a >= num_actions())
      throw ActionError("DqnAgent: action " + std::to_string(a) + " outside [0, " +
                        std::to_string(num_actions()) + ")");
  }

  void finish_update() {
    ++update_count_;
    if (update_count_ % sync_period_ == 0) sync_target();
  }

  Mlp q_;
  Mlp target_;
  double alpha_;
  double gamma_;
  std::uint64_t sync_period_;
  std::uint64_t update_count_ = 0;
  std::uint64_t sync_count_ = 0;
};

}  // namespace dynafilter
