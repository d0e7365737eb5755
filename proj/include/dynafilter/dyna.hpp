#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "dynafilter/agent.hpp"
#include "dynafilter/core.hpp"
#include "dynafilter/env.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/filter.hpp"
#include "dynafilter/index.hpp"
#include "dynafilter/model.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

/// Uniform interface the training loop needs from a transition model.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;
  virtual bool fitted() const = 0;
  /// Refit from scratch on the given data. Returns the training NLL where the
  /// model has one (NaN otherwise).
  virtual double fit(const std::vector<Transition>& data, Rng& rng) = 0;
  virtual Vec sample(const Vec& s, int a, Rng& rng) const = 0;
};

/// KDE-backed model: a refit rebuilds the support from the data as-is.
class KdeTransitionModel : public TransitionModel {
 public:
  KdeTransitionModel(int state_dim, int n_actions, KdeKernel kernel, double action_weight,
                     double var_floor, double var_ceil, double bandwidth = 0.0)
      : model_(state_dim, n_actions, kernel, action_weight, var_floor, var_ceil) {
    model_.set_bandwidth(bandwidth);
  }

  bool fitted() const override { return model_.fitted(); }

  double fit(const std::vector<Transition>& data, Rng&) override {
    model_.clear();
    model_.add_all(data);
    return std::numeric_limits<double>::quiet_NaN();
  }

  Vec sample(const Vec& s, int a, Rng& rng) const override { return model_.sample(s, a, rng); }

  const KdeModel& kde() const { return model_; }

 private:
  KdeModel model_;
};

/// Ensemble-of-MLPs model with a fixed training recipe per refit.
class EnsembleTransitionModel : public TransitionModel {
 public:
  struct FitParams {
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-3;
    double lipschitz_cap = 0.0;  // <= 0 disables clipping
  };

  EnsembleTransitionModel(int state_dim, int n_actions, const std::vector<int>& hidden,
                          Activation act, double var_floor, double var_ceil, int members,
                          FitParams fp, Rng& init_rng)
      : ensemble_(state_dim, n_actions, hidden, act, var_floor, var_ceil, members, init_rng),
        fp_(fp) {}

  bool fitted() const override { return ensemble_.fitted(); }

  double fit(const std::vector<Transition>& data, Rng& rng) override {
    return ensemble_.fit(data, fp_.epochs, fp_.batch_size, fp_.lr, rng, fp_.lipschitz_cap);
  }

  Vec sample(const Vec& s, int a, Rng& rng) const override {
    return ensemble_.sample(s, a, rng);
  }

  ModelEnsemble& ensemble() { return ensemble_; }
  const ModelEnsemble& ensemble() const { return ensemble_; }

 private:
  ModelEnsemble ensemble_;
  FitParams fp_;
};

/**
 * Draw (s, a) uniformly from the environment's state box and action set, let
 * the real environment produce s', and fit the model on the collected set.
 * These warmup interactions do not enter any buffer or counter. n_samples = 0
 * leaves the model unfitted and returns an empty set.
 */
inline std::vector<Transition> pretrain_model(const Env& env, TransitionModel& model,
                                              std::size_t n_samples, Rng& rng) {
  std::vector<Transition> data;
  if (n_samples == 0) return data;
  auto [lo, hi] = env.state_box();
  data.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Vec s(lo.size());
    for (std::size_t d = 0; d < s.size(); ++d) s[d] = rng.uniform(lo[d], hi[d]);
    int a = static_cast<int>(rng.uniform_index(env.num_actions()));
    StepResult sr = env.step(s, a, rng);
    data.push_back(Transition{std::move(s), a, std::move(sr.s_next), sr.r, sr.done});
  }
  model.fit(data, rng);
  return data;
}

/**
 * Branched model rollouts: n_branches start states drawn uniformly from the
 * real buffer, each advanced up to rollout_len steps under the greedy policy.
 * Rewards come from the known reward map, termination from the environment's
 * predicate applied to predicted states; a predicted terminal truncates its
 * branch. Candidates carry their 1-based depth.
 */
inline std::vector<FilterCandidate> branched_rollout(const Env& env, const TransitionModel& model,
                                                     const DqnAgent& agent,
                                                     const ReplayBuffer& d_real, int n_branches,
                                                     int rollout_len, Rng& rng) {
  if (d_real.empty()) throw EmptyBufferError("branched_rollout: real buffer is empty");
  if (!model.fitted()) throw InsufficientDataError("branched_rollout: model is not fitted");
  std::vector<FilterCandidate> out;
  out.reserve(static_cast<std::size_t>(n_branches) * rollout_len);
  for (int b = 0; b < n_branches; ++b) {
    Vec s = d_real.sample(rng).s;
    for (int j = 1; j <= rollout_len; ++j) {
      int a = agent.greedy_action(s);
      Vec s2 = model.sample(s, a, rng);
      double r = env.reward(s, a);
      bool done = env.terminal(s2);
      out.push_back(FilterCandidate{Transition{s, a, s2, r, done}, j});
      if (done) break;
      s = std::move(s2);
    }
  }
  return out;
}

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Greedy-policy return over n_episodes, each capped at horizon steps.
/// stddev is the population standard deviation across episodes.
inline EvalResult evaluate_policy(const Env& env, const DqnAgent& agent, int n_episodes,
                                  int horizon, Rng& rng) {
  if (n_episodes <= 0) throw ConfigError("evaluate_policy: n_episodes must be positive");
  std::vector<double> returns(n_episodes, 0.0);
  for (int e = 0; e < n_episodes; ++e) {
    Vec s = env.reset(rng);
    double total = 0.0;
    for (int h = 0; h < horizon; ++h) {
      StepResult sr = env.step(s, agent.greedy_action(s), rng);
      total += sr.r;
      if (sr.done) break;
      s = std::move(sr.s_next);
    }
    returns[e] = total;
  }
  EvalResult out;
  for (double r : returns) out.mean += r;
  out.mean /= n_episodes;
  double var = 0.0;
  for (double r : returns) var += (r - out.mean) * (r - out.mean);
  out.stddev = std::sqrt(var / n_episodes);
  return out;
}

struct DynaConfig {
  int episodes = 1;          // K
  int horizon = 1;           // H
  int rollout_len = 1;       // L
  int branches = 1;          // N, so M = N * L candidates per step at most
  int updates_per_step = 0;  // G
  int refit_period = 250;    // F, in real steps
  int pretrain_samples = 0;
  int retention_epochs = 1;  // simulated pool holds this many epochs of keeps
  int min_fit_size = 32;     // refits wait until the real buffer has this many

  double real_fraction = 0.05;  // share of real data in agent minibatches
  int batch_size = 32;

  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_frac = 0.2;

  int eval_period = 0;  // real steps between evaluations; 0 means horizon
  int eval_episodes = 5;
  int eval_horizon = 0;  // 0 means horizon

  FilterScheduleKind filter_kind = FilterScheduleKind::Off;
  double filter_epsilon = std::numeric_limits<double>::infinity();
  FilterKeyMode key_mode = FilterKeyMode::StateOnly;
  double action_weight = 1.0;
  bool exact_index = false;

  int m_link = 16;
  int ef_construction = 200;
  int ef_search = 64;

  bool capture_timing = false;
};

struct EvalPoint {
  std::uint64_t real_steps = 0;
  int episode = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  std::uint64_t kept_count = 0;      // keeps since the previous evaluation
  std::uint64_t rejected_count = 0;  // rejections since the previous evaluation
  double eps_k = std::numeric_limits<double>::infinity();
  double model_nll = std::numeric_limits<double>::quiet_NaN();
  double wallclock_ms = 0.0;
};

struct StepRecord {
  std::uint64_t real_steps = 0;
  int episode = 0;
  int step_in_episode = 0;
  std::uint64_t generated = 0;
  std::uint64_t kept = 0;
  double eps_k = std::numeric_limits<double>::infinity();
};

struct RunTrace {
  std::vector<EvalPoint> evals;
  std::vector<StepRecord> steps;
  std::uint64_t total_real_steps = 0;
  std::uint64_t total_generated = 0;
  std::uint64_t total_kept = 0;
  bool first_step_zero_distance = true;  // StateOnly-mode sanity flag
};

/**
 * Dyna training loop with branched rollouts and the OOD filter.
 *
 * Per real step: act epsilon-greedily, append the real transition to the
 * buffer and the index, refit the model on schedule, generate branched
 * rollouts, filter them, push keeps into the simulated pool, then run G
 * minibatch updates on the configured real/simulated mixture. Every random
 * decision draws from a named substream of the seed, so a run is a pure
 * function of (config, seed), and runs whose configs differ only in filter
 * settings consume identical randomness (filtering itself never draws).
 */
inline RunTrace run_dyna(const Env& env, DqnAgent& agent, TransitionModel& model,
                         const DynaConfig& cfg, std::uint64_t seed) {
  if (cfg.episodes < 1 || cfg.horizon < 1) throw ConfigError("run_dyna: need K >= 1, H >= 1");
  if (cfg.rollout_len < 0 || cfg.branches < 0) throw ConfigError("run_dyna: negative rollout shape");
  if (cfg.real_fraction < 0.0 || cfg.real_fraction > 1.0)
    throw ConfigError("run_dyna: real_fraction must be in [0, 1]");
  if (cfg.filter_kind == FilterScheduleKind::Dynamic && cfg.episodes < 2)
    throw ConfigError("run_dyna: dynamic filter needs at least 2 episodes");

  Rng env_rng = Rng::derive(seed, "env");
  Rng explore_rng = Rng::derive(seed, "explore");
  Rng rollout_rng = Rng::derive(seed, "rollout");
  Rng agent_rng = Rng::derive(seed, "agent-sample");
  Rng fit_rng = Rng::derive(seed, "model-fit");
  Rng level_rng = Rng::derive(seed, "index-levels");
  Rng pretrain_rng = Rng::derive(seed, "pretrain");

  const std::uint64_t total_plan =
      static_cast<std::uint64_t>(cfg.episodes) * static_cast<std::uint64_t>(cfg.horizon);
  const int key_dim = cfg.key_mode == FilterKeyMode::StateOnly
                          ? env.state_dim()
                          : env.state_dim() + env.num_actions();
  const std::uint64_t per_step = static_cast<std::uint64_t>(cfg.branches) * cfg.rollout_len;
  const std::size_t sim_capacity = std::max<std::uint64_t>(
      1, per_step * static_cast<std::uint64_t>(cfg.retention_epochs) * cfg.horizon);

  ReplayBuffer d_real(total_plan);
  ReplayBuffer d_sim(sim_capacity);
  HnswIndex hnsw(key_dim, cfg.m_link, cfg.ef_construction, cfg.ef_search);
  ExactIndex exact(key_dim);

  RejectSchedule sch;
  sch.kind = cfg.filter_kind;
  sch.epsilon = cfg.filter_epsilon;
  sch.total_episodes = cfg.episodes;
  sch.rollout_len = cfg.rollout_len;

  RunTrace trace;
  trace.steps.reserve(total_plan);
  if (cfg.pretrain_samples > 0) pretrain_model(env, model, cfg.pretrain_samples, pretrain_rng);

  auto t0 = std::chrono::steady_clock::now();
  std::uint64_t steps = 0;
  std::uint64_t eval_idx = 0;
  std::uint64_t kept_since_eval = 0, rejected_since_eval = 0;
  double last_eps_k = std::numeric_limits<double>::infinity();
  double last_nll = std::numeric_limits<double>::quiet_NaN();
  const int eval_period = cfg.eval_period > 0 ? cfg.eval_period : cfg.horizon;
  const int eval_horizon = cfg.eval_horizon > 0 ? cfg.eval_horizon : cfg.horizon;

  auto make_key = [&](const Transition& t) {
    return cfg.key_mode == FilterKeyMode::StateOnly
               ? t.s
               : embed_state_action(t.s, t.a, env.num_actions(), cfg.action_weight);
  };

  for (int k = 1; k <= cfg.episodes; ++k) {
    Vec s = env.reset(env_rng);
    for (int h = 1; h <= cfg.horizon; ++h) {
      double eps = epsilon_linear(steps, total_plan, cfg.eps_start, cfg.eps_end,
                                  cfg.eps_decay_frac);
      int a = agent.act_epsilon_greedy(s, eps, explore_rng);
      StepResult sr = env.step(s, a, env_rng);
      Transition t{s, a, sr.s_next, sr.r, sr.done};
      Vec key = make_key(t);
      hnsw.insert(key, level_rng);
      exact.insert(key);
      d_real.push(t);
      ++steps;

      if (steps % static_cast<std::uint64_t>(cfg.refit_period) == 0 &&
          d_real.size() >= static_cast<std::size_t>(cfg.min_fit_size)) {
        std::vector<Transition> data;
        data.reserve(d_real.size());
        for (std::size_t i = 0; i < d_real.size(); ++i) data.push_back(d_real[i]);
        last_nll = model.fit(data, fit_rng);
      }

      StepRecord rec;
      rec.real_steps = steps;
      rec.episode = k;
      rec.step_in_episode = h;
      if (model.fitted() && cfg.branches > 0 && cfg.rollout_len > 0) {
        std::vector<FilterCandidate> batch = branched_rollout(
            env, model, agent, d_real, cfg.branches, cfg.rollout_len, rollout_rng);
        rec.generated = batch.size();
        FilterReport rep;
        if (cfg.filter_kind == FilterScheduleKind::Off) {
          rep.keep.assign(batch.size(), 1);
          rep.n_kept = batch.size();
          rep.nn_dist.assign(batch.size(), 0.0);
        } else {
          std::vector<double> dist =
              cfg.exact_index
                  ? candidate_nn_distances(exact, batch, cfg.key_mode, env.num_actions(),
                                           cfg.action_weight)
                  : candidate_nn_distances(hnsw, batch, cfg.key_mode, env.num_actions(),
                                           cfg.action_weight);
          if (cfg.key_mode == FilterKeyMode::StateOnly &&
              !first_step_distances_zero(batch, dist))
            trace.first_step_zero_distance = false;
          if (cfg.filter_kind == FilterScheduleKind::Static) {
            rep = apply_threshold(dist, sch.epsilon);
          } else {
            rep = apply_dynamic(dist, sch, k);
          }
          last_eps_k = rep.eps_k;
        }
        for (std::size_t i = 0; i < batch.size(); ++i) {
          if (rep.keep[i]) d_sim.push(batch[i].t);
        }
        rec.kept = rep.n_kept;
        rec.eps_k = rep.eps_k;
        trace.total_generated += rec.generated;
        trace.total_kept += rec.kept;
        kept_since_eval += rep.n_kept;
        rejected_since_eval += rec.generated - rep.n_kept;
      }
      trace.steps.push_back(rec);

      for (int g = 0; g < cfg.updates_per_step; ++g) {
        if (d_real.empty()) break;
        std::vector<const Transition*> batch;
        batch.reserve(cfg.batch_size);
        for (int i = 0; i < cfg.batch_size; ++i) {
          double u = agent_rng.uniform01();  // drawn unconditionally to keep streams aligned
          bool from_real = d_sim.empty() || u < cfg.real_fraction;
          const ReplayBuffer& src = from_real ? d_real : d_sim;
          batch.push_back(&src[agent_rng.uniform_index(src.size())]);
        }
        agent.update_minibatch(batch);
      }

      if (steps % static_cast<std::uint64_t>(eval_period) == 0) {
        Rng eval_rng = Rng::derive(seed, "eval", eval_idx++);
        EvalResult er = evaluate_policy(env, agent, cfg.eval_episodes, eval_horizon, eval_rng);
        EvalPoint ep;
        ep.real_steps = steps;
        ep.episode = k;
        ep.eval_return_mean = er.mean;
        ep.eval_return_std = er.stddev;
        ep.kept_count = kept_since_eval;
        ep.rejected_count = rejected_since_eval;
        ep.eps_k = last_eps_k;
        ep.model_nll = last_nll;
        if (cfg.capture_timing) {
          ep.wallclock_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t0)
                                .count();
        }
        trace.evals.push_back(ep);
        kept_since_eval = 0;
        rejected_since_eval = 0;
      }

      s = sr.done ? env.reset(env_rng) : std::move(sr.s_next);
    }
  }
  trace.total_real_steps = steps;
  return trace;
}

}  // namespace dynafilter
