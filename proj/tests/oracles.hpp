// Independent reference implementations the tests check the library against.
// Everything here is written the slow, obvious way on purpose; none of it
// shares code with the headers under test.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/nn.hpp"

namespace oracle {

using dynafilter::Vec;

/// Central-difference gradient of a scalar function of a flat vector.
inline Vec fd_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                   double h = 1e-6) {
  Vec g(x.size());
  Vec xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = xp[i];
    xp[i] = orig + h;
    double up = f(xp);
    xp[i] = orig - h;
    double dn = f(xp);
    xp[i] = orig;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

/// Exhaustive nearest neighbour: strict < keeps the lowest index on ties.
inline std::pair<double, std::size_t> nn_linear_scan(const std::vector<Vec>& points,
                                                     const Vec& q) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_id = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double d = dynafilter::l2_dist(points[i], q);
    if (d < best) {
      best = d;
      best_id = i;
    }
  }
  return {best, best_id};
}

/// Double-loop filter: keep candidate i iff min_j ||cand_i - real_j|| < eps.
inline std::vector<int> brute_force_filter(const std::vector<Vec>& real_keys,
                                           const std::vector<Vec>& cand_keys, double eps) {
  std::vector<int> keep(cand_keys.size(), 0);
  for (std::size_t i = 0; i < cand_keys.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : real_keys) best = std::min(best, dynafilter::l2_dist(r, cand_keys[i]));
    keep[i] = best < eps ? 1 : 0;
  }
  return keep;
}

/// Weighted KDE moments with a Gaussian kernel, accumulated pair by pair.
struct KdeMoments {
  Vec mean;
  Vec var;
  double n_eff = 0.0;
};

inline KdeMoments kde_gaussian_reference(const std::vector<Vec>& keys,
                                         const std::vector<Vec>& values, const Vec& query,
                                         double bandwidth) {
  std::size_t dim = values.front().size();
  KdeMoments out;
  out.mean.assign(dim, 0.0);
  out.var.assign(dim, 0.0);
  std::vector<double> w(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    double d = dynafilter::l2_dist(keys[i], query);
    w[i] = std::exp(-d * d / (2.0 * bandwidth * bandwidth));
    out.n_eff += w[i];
  }
  for (std::size_t i = 0; i < keys.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) out.mean[d] += w[i] * values[i][d];
  for (std::size_t d = 0; d < dim; ++d) out.mean[d] /= out.n_eff;
  for (std::size_t i = 0; i < keys.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) {
      double dev = values[i][d] - out.mean[d];
      out.var[d] += w[i] * dev * dev;
    }
  for (std::size_t d = 0; d < dim; ++d) out.var[d] /= out.n_eff;
  return out;
}

/// Grouped maximum-likelihood moments for discrete keys: mean and biased
/// variance over the exactly-matching entries, in insertion order.
inline KdeMoments mle_reference(const std::vector<Vec>& keys, const std::vector<Vec>& values,
                                const Vec& query) {
  std::size_t dim = values.front().size();
  KdeMoments out;
  out.mean.assign(dim, 0.0);
  out.var.assign(dim, 0.0);
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i] == query) hits.push_back(i);
  out.n_eff = static_cast<double>(hits.size());
  if (hits.empty()) return out;
  for (std::size_t i : hits)
    for (std::size_t d = 0; d < dim; ++d) out.mean[d] += values[i][d];
  for (std::size_t d = 0; d < dim; ++d) out.mean[d] /= out.n_eff;
  for (std::size_t i : hits)
    for (std::size_t d = 0; d < dim; ++d) {
      double dev = values[i][d] - out.mean[d];
      out.var[d] += dev * dev;
    }
  for (std::size_t d = 0; d < dim; ++d) out.var[d] /= out.n_eff;
  return out;
}

/// Standard normal CDF via erfc; exact enough to pin Monte-Carlo rates.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Pearson statistic against a uniform expectation.
inline double chi_square_uniform(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace oracle
