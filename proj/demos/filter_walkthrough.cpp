// Walks the rejection filter through a toy buffer: a cluster of visited
// states, a batch of model-generated candidates at growing distance, and
// the static vs dynamic keep decisions side by side.

#include <cstdio>

#include "dynafilter/filter.hpp"
#include "dynafilter/index.hpp"
#include "dynafilter/rng.hpp"

using namespace dynafilter;

int main() {
  Rng rng = Rng::derive(7, "demo");
  ExactIndex visited(2);
  for (int i = 0; i < 50; ++i)
    visited.insert({rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)});

  // Candidates drift outward: early rollout steps stay near the data,
  // later ones wander.
  std::vector<double> dists;
  std::printf("candidate  dist      static(eps=0.3)\n");
  for (int step = 1; step <= 8; ++step) {
    Vec c = {0.05 * step, 0.08 * step};
    double d = visited.nearest(c).dist;
    dists.push_back(d);
    std::printf("   %d       %.4f    %s\n", step, d, d < 0.3 ? "keep" : "reject");
  }

  RejectSchedule sch;
  sch.kind = FilterScheduleKind::Dynamic;
  sch.total_episodes = 10;
  sch.rollout_len = 4;
  std::printf("\ndynamic schedule over episodes (same candidates):\n");
  for (int k = 1; k <= 10; k += 3) {
    FilterReport rep = apply_dynamic(dists, sch, k);
    std::printf("  episode %2d: f=%.3f kept=%zu/%zu eps_k=%.4f\n", k, dynamic_fraction(sch, k),
                rep.n_kept, rep.keep.size(), rep.eps_k);
  }
  return 0;
}
