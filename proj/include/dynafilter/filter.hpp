#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/errors.hpp"

namespace dynafilter {

/// What part of a candidate transition forms its lookup key.
enum class FilterKeyMode { StateOnly, StateAction };

enum class FilterScheduleKind { Off, Static, Dynamic };

/**
 * Rejection threshold policy across a K-episode run.
 *
 * Static uses a fixed epsilon. Dynamic eliminates a fraction
 *   f(k) = f1 * (K - k) / (K - 1),   f1 = (L - 1) / L
 * of each batch by distance rank, so episode 1 keeps only the share of a full
 * batch that first rollout steps occupy and episode K keeps everything.
 */
struct RejectSchedule {
  FilterScheduleKind kind = FilterScheduleKind::Static;
  double epsilon = std::numeric_limits<double>::infinity();
  int total_episodes = 1;  // K
  int rollout_len = 1;     // L
};

/// Candidate produced by a model rollout; rollout_step is 1-based depth.
struct FilterCandidate {
  Transition t;
  int rollout_step = 1;
};

struct FilterReport {
  std::vector<char> keep;
  std::vector<double> nn_dist;
  std::size_t n_kept = 0;
  std::size_t n_rejected = 0;
  double eps_k = std::numeric_limits<double>::infinity();
};

/// Eliminated batch fraction for episode k under a dynamic schedule.
inline double dynamic_fraction(const RejectSchedule& sch, int k) {
  if (sch.kind != FilterScheduleKind::Dynamic)
    throw ScheduleError("dynamic_fraction: schedule is not dynamic");
  if (sch.rollout_len < 1) throw ScheduleError("dynamic_fraction: rollout_len must be >= 1");
  if (sch.total_episodes < 2)
    throw ScheduleError("dynamic_fraction: dynamic schedule needs at least 2 episodes");
  if (k < 1 || k > sch.total_episodes)
    throw ScheduleError("dynamic_fraction: episode " + std::to_string(k) + " outside [1, " +
                        std::to_string(sch.total_episodes) + "]");
  double f1 = static_cast<double>(sch.rollout_len - 1) / sch.rollout_len;
  return f1 * static_cast<double>(sch.total_episodes - k) / (sch.total_episodes - 1);
}

/**
 * Threshold for episode k. Static returns the configured epsilon. Dynamic
 * ranks the batch's NN distances and returns the boundary distance so that
 * exactly ceil(f(k) * n) candidates sit at or beyond it; +inf when nothing is
 * to be eliminated.
 */
inline double schedule_eps(const RejectSchedule& sch, int k,
                           const std::vector<double>& nn_distances) {
  if (sch.kind == FilterScheduleKind::Off)
    throw ScheduleError("schedule_eps: filter is off");
  if (sch.kind == FilterScheduleKind::Static) {
    if (!(sch.epsilon >= 0.0)) throw ScheduleError("schedule_eps: static epsilon must be >= 0");
    return sch.epsilon;
  }
  double f = dynamic_fraction(sch, k);
  std::size_t n = nn_distances.size();
  std::size_t m = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n)));
  if (m == 0) return std::numeric_limits<double>::infinity();
  std::vector<double> d = nn_distances;
  std::nth_element(d.begin(), d.begin() + (m - 1), d.end(), std::greater<>());
  return d[m - 1];
}

/// Nearest-neighbour distance from each candidate's key to the index.
template <class Index>
std::vector<double> candidate_nn_distances(const Index& index,
                                           const std::vector<FilterCandidate>& batch,
                                           FilterKeyMode mode, int n_actions,
                                           double action_weight) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& c : batch) {
    if (mode == FilterKeyMode::StateOnly) {
      out.push_back(index.nearest(c.t.s).dist);
    } else {
      out.push_back(index.nearest(embed_state_action(c.t.s, c.t.a, n_actions, action_weight)).dist);
    }
  }
  return out;
}

/// Threshold rule: keep a candidate iff its distance is strictly below eps.
inline FilterReport apply_threshold(const std::vector<double>& distances, double eps) {
  FilterReport rep;
  rep.nn_dist = distances;
  rep.eps_k = eps;
  rep.keep.resize(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    rep.keep[i] = distances[i] < eps ? 1 : 0;
    if (rep.keep[i]) {
      ++rep.n_kept;
    } else {
      ++rep.n_rejected;
    }
  }
  return rep;
}

/**
 * Dynamic rule: eliminate exactly ceil(f(k) * n) candidates, farthest first,
 * ties broken by keeping earlier-indexed candidates. eps_k reports the
 * smallest eliminated distance (+inf when nothing is eliminated).
 */
inline FilterReport apply_dynamic(const std::vector<double>& distances,
                                  const RejectSchedule& sch, int k) {
  double f = dynamic_fraction(sch, k);
  std::size_t n = distances.size();
  std::size_t m = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (distances[a] != distances[b]) return distances[a] > distances[b];
    return a > b;  // later-indexed eliminated first
  });
  FilterReport rep;
  rep.nn_dist = distances;
  rep.keep.assign(n, 1);
  for (std::size_t i = 0; i < m; ++i) rep.keep[order[i]] = 0;
  rep.n_rejected = m;
  rep.n_kept = n - m;
  rep.eps_k = m == 0 ? std::numeric_limits<double>::infinity() : distances[order[m - 1]];
  return rep;
}

/**
 * Out-of-distribution filter over a rollout batch: computes each candidate's
 * nearest-neighbour distance to the index of real data and keeps it iff the
 * distance is strictly below eps.
 */
template <class Index>
FilterReport filter_ood(const Index& index, const std::vector<FilterCandidate>& batch,
                        FilterKeyMode mode, int n_actions, double action_weight, double eps) {
  return apply_threshold(candidate_nn_distances(index, batch, mode, n_actions, action_weight),
                         eps);
}

/**
 * In StateOnly mode a first rollout step starts from a state stored in the
 * index, so its nearest-neighbour distance is exactly zero and any eps > 0
 * keeps it. Returns true when the batch honours that.
 */
inline bool first_step_distances_zero(const std::vector<FilterCandidate>& batch,
                                      const std::vector<double>& distances) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].rollout_step == 1 && distances[i] != 0.0) return false;
  }
  return true;
}

/// Extract the kept transitions in batch order.
inline std::vector<Transition> kept_transitions(const std::vector<FilterCandidate>& batch,
                                                const FilterReport& rep) {
  std::vector<Transition> out;
  out.reserve(rep.n_kept);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (rep.keep[i]) out.push_back(batch[i].t);
  }
  return out;
}

}  // namespace dynafilter
