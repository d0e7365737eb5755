#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

/// Result of a nearest-neighbour query. `dist` is always the true Euclidean
/// distance to the returned point; `visited` counts distance evaluations.
struct NnResult {
  double dist = 0.0;
  std::size_t id = 0;
  std::size_t visited = 0;
};

/// Brute-force reference index. Ties resolve to the lowest id.
class ExactIndex {
 public:
  explicit ExactIndex(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }

  std::size_t insert(const Vec& p) {
    check(p);
    points_.push_back(p);
    return points_.size() - 1;
  }

  const Vec& point(std::size_t id) const { return points_[id]; }

  NnResult nearest(const Vec& q) const {
    check(q);
    if (points_.empty()) throw EmptyIndexError("ExactIndex::nearest: empty index");
    NnResult best{std::numeric_limits<double>::infinity(), 0, points_.size()};
    for (std::size_t i = 0; i < points_.size(); ++i) {
      double d = l2_dist(q, points_[i]);
      if (d < best.dist) {
        best.dist = d;
        best.id = i;
      }
    }
    return best;
  }

 private:
  void check(const Vec& p) const {
    if (static_cast<int>(p.size()) != dim_)
      throw DimensionError("ExactIndex: point dim " + std::to_string(p.size()) + ", expected " +
                           std::to_string(dim_));
  }

  int dim_;
  std::vector<Vec> points_;
};

/**
 * Hierarchical navigable small-world graph over Euclidean points.
 *
 * Construction: each inserted point draws a level floor(-ln(u) * mL) with
 * mL = 1 / ln(M); the insert descends greedily from the entry point to
 * level+1, then links into every layer from min(level, top) down to 0 using a
 * beam of width ef_construction and heuristic neighbour selection. Degree is
 * capped at M per layer, 2M at layer 0. Exactly one uniform draw is consumed
 * per insert regardless of the graph's shape, so callers' random streams stay
 * aligned no matter what is already stored.
 *
 * Queries descend greedily to layer 1 and run a beam of width ef_search at
 * layer 0. The search is approximate: the returned point may not be the true
 * nearest, but the reported distance is the true distance to the returned
 * point, so it never understates the distance to the true nearest neighbour.
 */
class HnswIndex {
 public:
  explicit HnswIndex(int dim, int m_link = 16, int ef_construction = 200, int ef_search = 64)
      : dim_(dim),
        m_link_(m_link),
        m_max0_(2 * m_link),
        ef_construction_(ef_construction),
        ef_search_(ef_search),
        level_mult_(1.0 / std::log(static_cast<double>(m_link))) {
    if (m_link < 2) throw ConfigError("HnswIndex: m_link must be at least 2");
    if (ef_construction < 1 || ef_search < 1)
      throw ConfigError("HnswIndex: beam widths must be positive");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return nodes_.size(); }
  void set_ef_search(int ef) {
    if (ef < 1) throw ConfigError("HnswIndex: beam widths must be positive");
    ef_search_ = ef;
  }

  const Vec& point(std::size_t id) const { return nodes_[id].p; }

  std::size_t insert(const Vec& p, Rng& level_rng) {
    check(p);
    double u = 1.0 - level_rng.uniform01();  // (0, 1], one draw per insert
    int level = static_cast<int>(std::floor(-std::log(u) * level_mult_));

    std::size_t id = nodes_.size();
    nodes_.push_back(Node{p, level, {}});
    nodes_[id].links.resize(level + 1);

    if (id == 0) {
      entry_ = 0;
      top_level_ = level;
      return id;
    }

    std::size_t ep = entry_;
    std::size_t scratch_visited = 0;
    for (int lc = top_level_; lc > level; --lc) ep = greedy_step(p, ep, lc, scratch_visited);

    for (int lc = std::min(level, top_level_); lc >= 0; --lc) {
      std::vector<std::pair<double, std::size_t>> w =
          search_layer(p, ep, ef_construction_, lc, scratch_visited);
      int cap = lc == 0 ? m_max0_ : m_link_;
      std::vector<std::size_t> neigh = select_neighbors(w, m_link_);
      nodes_[id].links[lc] = neigh;
      for (std::size_t nb : neigh) {
        auto& back = nodes_[nb].links[lc];
        back.push_back(id);
        if (static_cast<int>(back.size()) > cap) shrink(nb, lc, cap);
      }
      ep = w.front().second;
    }

    if (level > top_level_) {
      top_level_ = level;
      entry_ = id;
    }
    return id;
  }

  NnResult nearest(const Vec& q) const {
    check(q);
    if (nodes_.empty()) throw EmptyIndexError("HnswIndex::nearest: empty index");
    std::size_t visited = 0;
    std::size_t ep = entry_;
    for (int lc = top_level_; lc > 0; --lc) ep = greedy_step(q, ep, lc, visited);
    std::vector<std::pair<double, std::size_t>> w = search_layer(q, ep, ef_search_, 0, visited);
    NnResult out;
    out.dist = w.front().first;
    out.id = w.front().second;
    out.visited = visited;
    return out;
  }

 private:
  struct Node {
    Vec p;
    int level;
    std::vector<std::vector<std::size_t>> links;  // per layer 0..level
  };

  void check(const Vec& p) const {
    if (static_cast<int>(p.size()) != dim_)
      throw DimensionError("HnswIndex: point dim " + std::to_string(p.size()) + ", expected " +
                           std::to_string(dim_));
  }

  double dist(const Vec& q, std::size_t id, std::size_t& visited) const {
    ++visited;
    return l2_dist(q, nodes_[id].p);
  }

  /// Greedy descent within one layer: follow strictly improving links.
  std::size_t greedy_step(const Vec& q, std::size_t ep, int lc, std::size_t& visited) const {
    double best = dist(q, ep, visited);
    bool moved = true;
    while (moved) {
      moved = false;
      for (std::size_t nb : nodes_[ep].links[lc]) {
        double d = dist(q, nb, visited);
        if (d < best) {
          best = d;
          ep = nb;
          moved = true;
        }
      }
    }
    return ep;
  }

  /// Beam search in one layer. Returns candidates sorted by distance
  /// ascending, at most ef of them.
  std::vector<std::pair<double, std::size_t>> search_layer(const Vec& q, std::size_t ep, int ef,
                                                           int lc, std::size_t& visited) const {
    // Epoch-tagged visited marks: O(frontier) per call instead of O(n).
    // Instances are not safe for concurrent queries because of this scratch.
    seen_.resize(nodes_.size(), 0);
    std::uint64_t epoch = ++epoch_;
    auto mark = [&](std::size_t i) { seen_[i] = epoch; };
    auto marked = [&](std::size_t i) { return seen_[i] == epoch; };
    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> candidates;  // nearest first
    std::priority_queue<Entry> best;                                            // farthest first
    double d0 = dist(q, ep, visited);
    mark(ep);
    candidates.emplace(d0, ep);
    best.emplace(d0, ep);
    while (!candidates.empty()) {
      auto [dc, c] = candidates.top();
      if (dc > best.top().first && static_cast<int>(best.size()) >= ef) break;
      candidates.pop();
      for (std::size_t nb : nodes_[c].links[lc]) {
        if (marked(nb)) continue;
        mark(nb);
        double d = dist(q, nb, visited);
        if (static_cast<int>(best.size()) < ef || d < best.top().first) {
          candidates.emplace(d, nb);
          best.emplace(d, nb);
          if (static_cast<int>(best.size()) > ef) best.pop();
        }
      }
    }
    std::vector<Entry> out;
    out.resize(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = best.top();
      best.pop();
    }
    return out;
  }

  /**
   * Heuristic neighbour selection: walk candidates nearest-first and keep one
   * only if it is closer to the query than to every already kept neighbour.
   * Keeps the graph navigable across clustered data rather than linking the
   * query to a single tight cluster.
   */
  std::vector<std::size_t> select_neighbors(const std::vector<std::pair<double, std::size_t>>& w,
                                            int m) const {
    std::vector<std::size_t> out;
    for (const auto& [dq, c] : w) {
      if (static_cast<int>(out.size()) >= m) break;
      bool ok = true;
      for (std::size_t r : out) {
        if (l2_dist(nodes_[c].p, nodes_[r].p) < dq) {
          ok = false;
          break;
        }
      }
      if (ok) out.push_back(c);
    }
    return out;
  }

  /// Re-select a node's neighbour list after it overflowed its cap.
  void shrink(std::size_t id, int lc, int cap) {
    auto& links = nodes_[id].links[lc];
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(links.size());
    for (std::size_t nb : links) cand.emplace_back(l2_dist(nodes_[id].p, nodes_[nb].p), nb);
    std::sort(cand.begin(), cand.end());
    links = select_neighbors(cand, cap);
  }

  int dim_;
  int m_link_;
  int m_max0_;
  int ef_construction_;
  int ef_search_;
  double level_mult_;
  std::size_t entry_ = 0;
  int top_level_ = -1;
  std::vector<Node> nodes_;
  mutable std::vector<std::uint64_t> seen_;
  mutable std::uint64_t epoch_ = 0;
};

}  // namespace dynafilter
