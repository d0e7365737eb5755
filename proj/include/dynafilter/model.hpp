#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/nn.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

/// Diagonal Gaussian over the next state, plus the effective sample size
/// behind the estimate (kernel mass for KDE, 0 where the notion does not apply).
struct GaussianPrediction {
  Vec mean;
  Vec var;
  double n_eff = 0.0;
};

inline double clamp_var(double v, double floor_v, double ceil_v) {
  return std::min(std::max(v, floor_v), ceil_v);
}

enum class KdeKernel { Indicator, Gaussian };

/**
 * Kernel conditional density estimator over transitions.
 *
 * Keys are embed_state_action(s, a); weights w_i = K_h(key - key_i). The
 * estimate is the weighted MLE of a diagonal Gaussian:
 *
 *   mean_d = sum_i w_i s'_{i,d} / n_eff
 *   var_d  = sum_i w_i (s'_{i,d} - mean_d)^2 / n_eff,   n_eff = sum_i w_i
 *
 * computed in two passes in support order. With the indicator kernel
 * (w_i = 1 iff the keys match exactly) this is the per-state-action sample
 * MLE with n_eff the visit count. Variances are clamped to
 * [var_floor, var_ceil] after estimation.
 */
class KdeModel {
 public:
  KdeModel(int state_dim, int n_actions, KdeKernel kernel, double action_weight = 1.0,
           double var_floor = 1e-6, double var_ceil = 10.0)
      : state_dim_(state_dim),
        n_actions_(n_actions),
        kernel_(kernel),
        action_weight_(action_weight),
        var_floor_(var_floor),
        var_ceil_(var_ceil) {
    if (var_floor_ < 0.0 || var_ceil_ < var_floor_)
      throw ConfigError("KdeModel: need 0 <= var_floor <= var_ceil");
  }

  /// Fixed bandwidth for the Gaussian kernel; <= 0 selects the median
  /// heuristic at estimation time.
  void set_bandwidth(double h) { bandwidth_ = h; }
  double bandwidth() const { return bandwidth_; }

  void add(const Transition& t) {
    if (static_cast<int>(t.s.size()) != state_dim_ ||
        static_cast<int>(t.s_next.size()) != state_dim_)
      throw DimensionError("KdeModel::add: transition dim mismatch");
    keys_.push_back(embed_state_action(t.s, t.a, n_actions_, action_weight_));
    next_.push_back(t.s_next);
    cached_bandwidth_ = -1.0;
  }

  void add_all(const std::vector<Transition>& ts) {
    for (const auto& t : ts) add(t);
  }

  /// Drop all support points, keeping the configuration.
  void clear() {
    keys_.clear();
    next_.clear();
    cached_bandwidth_ = -1.0;
  }

  std::size_t support_size() const { return keys_.size(); }
  bool fitted() const { return !keys_.empty(); }

  /**
   * Median pairwise key distance over an evenly strided subsample of at most
   * 512 support points. Deterministic given the support.
   */
  double median_heuristic_bandwidth() const {
    if (keys_.size() < 2)
      throw InsufficientDataError("median_heuristic_bandwidth: need at least 2 support points");
    std::vector<const Vec*> sub;
    std::size_t n = keys_.size();
    std::size_t m = std::min<std::size_t>(n, 512);
    for (std::size_t i = 0; i < m; ++i) sub.push_back(&keys_[i * n / m]);
    std::vector<double> d;
    d.reserve(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) d.push_back(l2_dist(*sub[i], *sub[j]));
    std::sort(d.begin(), d.end());
    double med = d.size() % 2 == 1 ? d[d.size() / 2]
                                   : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
    if (med <= 0.0) med = 1e-3;  // all subsampled keys identical
    return med;
  }

  GaussianPrediction estimate(const Vec& s, int a) const {
    if (keys_.empty()) throw NoSupportError("KdeModel::estimate: empty support");
    Vec q = embed_state_action(s, a, n_actions_, action_weight_);
    std::vector<double> w(keys_.size());
    double n_eff = 0.0;
    double h = effective_bandwidth();
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      w[i] = kernel_weight(q, keys_[i], h);
      n_eff += w[i];
    }
    if (n_eff < kMinMass)
      throw NoSupportError("KdeModel::estimate: no kernel mass at query point");
    GaussianPrediction out;
    out.n_eff = n_eff;
    out.mean.assign(state_dim_, 0.0);
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (w[i] == 0.0) continue;
      for (int d = 0; d < state_dim_; ++d) out.mean[d] += w[i] * next_[i][d];
    }
    for (int d = 0; d < state_dim_; ++d) out.mean[d] /= n_eff;
    out.var.assign(state_dim_, 0.0);
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (w[i] == 0.0) continue;
      for (int d = 0; d < state_dim_; ++d) {
        double dev = next_[i][d] - out.mean[d];
        out.var[d] += w[i] * dev * dev;
      }
    }
    for (int d = 0; d < state_dim_; ++d) out.var[d] = clamp_var(out.var[d] / n_eff, var_floor_, var_ceil_);
    return out;
  }

  double effective_sample_size(const Vec& s, int a) const {
    if (keys_.empty()) throw NoSupportError("KdeModel::effective_sample_size: empty support");
    Vec q = embed_state_action(s, a, n_actions_, action_weight_);
    double h = effective_bandwidth();
    double n_eff = 0.0;
    for (const auto& k : keys_) n_eff += kernel_weight(q, k, h);
    return n_eff;
  }

  Vec sample(const Vec& s, int a, Rng& rng) const {
    GaussianPrediction p = estimate(s, a);
    Vec out(state_dim_);
    for (int d = 0; d < state_dim_; ++d) out[d] = p.mean[d] + std::sqrt(p.var[d]) * rng.normal();
    return out;
  }

 private:
  static constexpr double kMinMass = 1e-12;

  double effective_bandwidth() const {
    if (kernel_ == KdeKernel::Indicator) return 0.0;
    if (bandwidth_ > 0.0) return bandwidth_;
    if (cached_bandwidth_ <= 0.0) cached_bandwidth_ = median_heuristic_bandwidth();
    return cached_bandwidth_;
  }

  double kernel_weight(const Vec& a, const Vec& b, double h) const {
    if (kernel_ == KdeKernel::Indicator) return a == b ? 1.0 : 0.0;
    double d = l2_dist(a, b);
    return std::exp(-d * d / (2.0 * h * h));
  }

  int state_dim_;
  int n_actions_;
  KdeKernel kernel_;
  double action_weight_;
  double var_floor_;
  double var_ceil_;
  double bandwidth_ = 0.0;
  mutable double cached_bandwidth_ = -1.0;
  std::vector<Vec> keys_;
  std::vector<Vec> next_;
};

/**
 * MLP transition model with a Gaussian head: input embed_state_action(s, a)
 * (unit action weight), output mean and log-variance per state dimension.
 * Trained by Adam on the diagonal Gaussian negative log-likelihood; predicted
 * variances are clamped to [var_floor, var_ceil].
 */
class MlpGaussianModel {
 public:
  MlpGaussianModel(int state_dim, int n_actions, const std::vector<int>& hidden,
                   Activation act, double var_floor, double var_ceil, Rng& init_rng)
      : state_dim_(state_dim),
        n_actions_(n_actions),
        var_floor_(var_floor),
        var_ceil_(var_ceil),
        net_(make_net(state_dim, n_actions, hidden, act, init_rng)) {
    if (var_floor_ <= 0.0 || var_ceil_ < var_floor_)
      throw ConfigError("MlpGaussianModel: need 0 < var_floor <= var_ceil");
  }

  bool fitted() const { return fitted_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  GaussianPrediction predict(const Vec& s, int a) const {
    Vec out = net_.forward(embed_state_action(s, a, n_actions_, 1.0));
    GaussianPrediction p;
    p.mean.assign(out.begin(), out.begin() + state_dim_);
    p.var.resize(state_dim_);
    for (int d = 0; d < state_dim_; ++d)
      p.var[d] = clamp_var(std::exp(out[state_dim_ + d]), var_floor_, var_ceil_);
    return p;
  }

  Vec sample(const Vec& s, int a, Rng& rng) const {
    GaussianPrediction p = predict(s, a);
    Vec out(state_dim_);
    for (int d = 0; d < state_dim_; ++d) out[d] = p.mean[d] + std::sqrt(p.var[d]) * rng.normal();
    return out;
  }

  /// Mean NLL of the dataset under the current parameters.
  double nll(const std::vector<Transition>& data) const {
    if (data.empty()) throw InsufficientDataError("MlpGaussianModel::nll: empty dataset");
    double total = 0.0;
    for (const auto& t : data) total += sample_nll(t);
    return total / static_cast<double>(data.size());
  }

  /**
   * Minibatch Adam on the Gaussian NLL. Returns the mean NLL over the final
   * epoch. lipschitz_cap > 0 clips the network after every step so the mean
   * map stays within the cap.
   */
  double fit(const std::vector<Transition>& data, int epochs, int batch_size, double lr,
             Rng& rng, double lipschitz_cap = 0.0) {
    if (data.empty()) throw InsufficientDataError("MlpGaussianModel::fit: empty dataset");
    if (epochs <= 0 || batch_size <= 0) throw ConfigError("MlpGaussianModel::fit: bad schedule");
    std::size_t n_params = net_.num_params();
    Vec m(n_params, 0.0), v(n_params, 0.0);
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
    double last_epoch_nll = 0.0;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
      double epoch_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::size_t stop = std::min(order.size(), start + batch_size);
        Vec grad(n_params, 0.0);
        for (std::size_t i = start; i < stop; ++i) {
          epoch_sum += accumulate_grad(data[order[i]], grad);
        }
        double inv = 1.0 / static_cast<double>(stop - start);
        ++t;
        double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        Vec& theta = net_.params();
        for (std::size_t j = 0; j < n_params; ++j) {
          double g = grad[j] * inv;
          m[j] = b1 * m[j] + (1.0 - b1) * g;
          v[j] = b2 * v[j] + (1.0 - b2) * g * g;
          theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
        if (lipschitz_cap > 0.0) net_.clip_lipschitz(lipschitz_cap);
      }
      last_epoch_nll = epoch_sum / static_cast<double>(data.size());
    }
    fitted_ = true;
    return last_epoch_nll;
  }

 private:
  static Mlp make_net(int state_dim, int n_actions, const std::vector<int>& hidden,
                      Activation act, Rng& rng) {
    std::vector<int> widths;
    widths.push_back(state_dim + n_actions);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(2 * state_dim);
    return Mlp::init_random(std::move(widths), act, rng);
  }

  double sample_nll(const Transition& t) const {
    GaussianPrediction p = predict(t.s, t.a);
    double nll = 0.0;
    for (int d = 0; d < state_dim_; ++d) {
      double dev = t.s_next[d] - p.mean[d];
      nll += 0.5 * (std::log(2.0 * 3.14159265358979323846 * p.var[d]) + dev * dev / p.var[d]);
    }
    return nll;
  }

  /// Adds this sample's NLL gradient into grad; returns the sample NLL.
  double accumulate_grad(const Transition& t, Vec& grad) {
    Vec x = embed_state_action(t.s, t.a, n_actions_, 1.0);
    Vec out = net_.forward(x);
    Vec upstream(2 * state_dim_, 0.0);
    double nll = 0.0;
    double log_floor = std::log(var_floor_), log_ceil = std::log(var_ceil_);
    for (int d = 0; d < state_dim_; ++d) {
      double lv = std::min(std::max(out[state_dim_ + d], log_floor), log_ceil);
      bool clamped = lv != out[state_dim_ + d];
      double var = std::exp(lv);
      double dev = p_mean(out, d) - t.s_next[d];
      nll += 0.5 * (std::log(2.0 * 3.14159265358979323846 * var) + dev * dev / var);
      upstream[d] = dev / var;
      upstream[state_dim_ + d] = clamped ? 0.0 : 0.5 * (1.0 - dev * dev / var);
    }
    Vec g = net_.grad_params(x, upstream);
    for (std::size_t j = 0; j < g.size(); ++j) grad[j] += g[j];
    return nll;
  }

  static double p_mean(const Vec& out, int d) { return out[d]; }

  int state_dim_;
  int n_actions_;
  double var_floor_;
  double var_ceil_;
  Mlp net_;
  bool fitted_ = false;
};

/**
 * Ensemble of independently initialised MLP models sharing one dataset.
 * Sampling draws a uniformly random member per call.
 */
class ModelEnsemble {
 public:
  ModelEnsemble(int state_dim, int n_actions, const std::vector<int>& hidden, Activation act,
                double var_floor, double var_ceil, int b_members, Rng& init_rng) {
    if (b_members <= 0) throw ConfigError("ModelEnsemble: need at least one member");
    members_.reserve(b_members);
    for (int i = 0; i < b_members; ++i)
      members_.emplace_back(state_dim, n_actions, hidden, act, var_floor, var_ceil, init_rng);
  }

  std::size_t size() const { return members_.size(); }
  bool fitted() const { return members_.front().fitted(); }
  MlpGaussianModel& member(std::size_t i) { return members_[i]; }
  const MlpGaussianModel& member(std::size_t i) const { return members_[i]; }

  /// Fit every member; returns the mean over members of the final-epoch NLL.
  double fit(const std::vector<Transition>& data, int epochs, int batch_size, double lr,
             Rng& rng, double lipschitz_cap = 0.0) {
    double total = 0.0;
    for (auto& mem : members_) total += mem.fit(data, epochs, batch_size, lr, rng, lipschitz_cap);
    return total / static_cast<double>(members_.size());
  }

  const MlpGaussianModel& pick(Rng& rng) const {
    return members_[rng.uniform_index(members_.size())];
  }

  /// Predict via a uniformly random member, then sample its Gaussian.
  Vec sample(const Vec& s, int a, Rng& rng) const {
    return pick(rng).sample(s, a, rng);
  }

 private:
  std::vector<MlpGaussianModel> members_;
};

}  // namespace dynafilter
