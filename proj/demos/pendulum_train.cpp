// Minimal end-to-end run: pendulum, MLP dynamics model, branched rollouts
// with the dynamic filter, eval curve on stdout. Small on purpose; the real
// experiment configs live next to the CLI.

#include <cstdio>

#include "dynafilter/agent.hpp"
#include "dynafilter/dyna.hpp"
#include "dynafilter/env.hpp"

using namespace dynafilter;

int main() {
  DiscretePendulum env;
  std::uint64_t seed = 3;

  Rng agent_init = Rng::derive(seed, "agent-init");
  DqnAgent agent = DqnAgent::make(env.state_dim(), env.num_actions(), {32, 32},
                                  Activation::Tanh, 1e-3, 0.99, 100, agent_init);

  EnsembleTransitionModel::FitParams fp;
  fp.epochs = 10;
  Rng model_init = Rng::derive(seed, "model-init");
  EnsembleTransitionModel model(env.state_dim(), env.num_actions(), {32, 32}, Activation::Tanh,
                                1e-6, 10.0, 1, fp, model_init);

  DynaConfig cfg;
  cfg.episodes = 10;
  cfg.horizon = 150;
  cfg.rollout_len = 5;
  cfg.branches = 4;
  cfg.updates_per_step = 4;
  cfg.refit_period = 150;
  cfg.pretrain_samples = 128;
  cfg.filter_kind = FilterScheduleKind::Dynamic;
  cfg.eval_period = 150;

  RunTrace trace = run_dyna(env, agent, model, cfg, seed);
  std::printf("steps  episode  eval_return  kept  rejected  eps_k\n");
  for (const auto& e : trace.evals)
    std::printf("%5llu  %4d     %8.2f  %5llu  %5llu  %.3f\n",
                static_cast<unsigned long long>(e.real_steps), e.episode, e.eval_return_mean,
                static_cast<unsigned long long>(e.kept_count),
                static_cast<unsigned long long>(e.rejected_count), e.eps_k);
  std::printf("total: %llu of %llu rollout transitions kept over %llu real steps\n",
              static_cast<unsigned long long>(trace.total_kept),
              static_cast<unsigned long long>(trace.total_generated),
              static_cast<unsigned long long>(trace.total_real_steps));
  return 0;
}
