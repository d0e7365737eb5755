#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dynafilter/errors.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

using Vec = std::vector<double>;

inline void check_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(where) + ": dimension mismatch " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double l2_dist(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "l2_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline Vec sub(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "sub");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "add");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec scale(const Vec& a, double c) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

/**
 * Embed (s, a) into one vector: the state followed by a one-hot action block
 * scaled by action_weight. Used as the common key space for kernel weights
 * and nearest-neighbour lookups over state-action pairs.
 */
inline Vec embed_state_action(const Vec& s, int a, int n_actions, double action_weight) {
  if (a < 0 || a >= n_actions)
    throw ActionError("embed_state_action: action " + std::to_string(a) + " outside [0, " +
                      std::to_string(n_actions) + ")");
  Vec key(s.size() + static_cast<std::size_t>(n_actions), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) key[i] = s[i];
  key[s.size() + static_cast<std::size_t>(a)] = action_weight;
  return key;
}

/// One environment (or model) step. `a` indexes a finite action set.
struct Transition {
  Vec s;
  int a = 0;
  Vec s_next;
  double r = 0.0;
  bool done = false;
};

/**
 * Fixed-capacity ring buffer of transitions with uniform sampling.
 * Once capacity is reached the oldest item is overwritten; stored items are
 * never mutated otherwise.
 */
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
    items_.reserve(capacity_);
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// Append, overwriting the oldest item once full.
  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[write_] = std::move(t);
    }
    write_ = (write_ + 1) % capacity_;
  }

  /// Uniform sample with replacement.
  const Transition& sample(Rng& rng) const {
    if (items_.empty()) throw EmptyBufferError("ReplayBuffer::sample: buffer is empty");
    return items_[rng.uniform_index(items_.size())];
  }

 private:
  std::size_t capacity_;
  std::size_t write_ = 0;
  std::vector<Transition> items_;
};

}  // namespace dynafilter
