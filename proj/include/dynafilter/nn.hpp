#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dynafilter/core.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/rng.hpp"

namespace dynafilter {

enum class Activation { Linear, Tanh, Relu };

inline double apply_act(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    default: return z;
  }
}

inline double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    default: return 1.0;
  }
}

/**
 * Fully connected network with an explicit backward pass.
 *
 * Parameters live in one flat vector theta; per layer l the slice is W_l
 * (out x in, row-major) followed by b_l. The output layer is always linear,
 * hidden layers use the configured activation. The flat view and the
 * structured (W, b) view address the same storage, so updates through either
 * view agree.
 */
class Mlp {
 public:
  Mlp(std::vector<int> widths, Activation hidden_act)
      : widths_(std::move(widths)), act_(hidden_act) {
    if (widths_.size() < 2) throw DimensionError("Mlp: need at least input and output widths");
    for (int w : widths_) {
      if (w <= 0) throw DimensionError("Mlp: widths must be positive");
    }
    offsets_.resize(num_layers());
    std::size_t off = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      offsets_[l] = off;
      off += static_cast<std::size_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
    }
    theta_.assign(off, 0.0);
  }

  /// Xavier-uniform for tanh/linear, He-normal for relu. Biases start at zero.
  static Mlp init_random(std::vector<int> widths, Activation hidden_act, Rng& rng) {
    Mlp net(std::move(widths), hidden_act);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      int fan_in = net.widths_[l];
      int fan_out = net.widths_[l + 1];
      double* w = net.theta_.data() + net.offsets_[l];
      std::size_t nw = static_cast<std::size_t>(fan_in) * fan_out;
      if (hidden_act == Activation::Relu) {
        double sd = std::sqrt(2.0 / fan_in);
        for (std::size_t i = 0; i < nw; ++i) w[i] = rng.normal(0.0, sd);
      } else {
        double lim = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < nw; ++i) w[i] = rng.uniform(-lim, lim);
      }
    }
    return net;
  }

  std::size_t num_layers() const { return widths_.size() - 1; }
  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation hidden_activation() const { return act_; }

  std::size_t num_params() const { return theta_.size(); }
  Vec& params() { return theta_; }
  const Vec& params() const { return theta_; }

  /// Offset of layer l's W block in the flat vector; biases follow the block.
  std::size_t layer_offset(std::size_t l) const { return offsets_[l]; }

  Vec forward(const Vec& x) const {
    if (static_cast<int>(x.size()) != in_dim())
      throw DimensionError("Mlp::forward: input dim " + std::to_string(x.size()) +
                           ", expected " + std::to_string(in_dim()));
    Vec a = x;
    Vec z;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      affine(l, a, z);
      if (l + 1 < num_layers()) {
        for (double& v : z) v = apply_act(act_, v);
      }
      a.swap(z);
    }
    return a;
  }

  /**
   * Gradient of upstream . f(x) with respect to theta, as a flat vector
   * matching the parameter layout. upstream has out_dim entries.
   */
  Vec grad_params(const Vec& x, const Vec& upstream) const {
    if (static_cast<int>(upstream.size()) != out_dim())
      throw DimensionError("Mlp::grad_params: upstream dim mismatch");
    // Forward with caches: activations a[l] entering layer l, pre-acts z[l].
    std::vector<Vec> acts(num_layers() + 1);
    std::vector<Vec> pre(num_layers());
    acts[0] = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      affine(l, acts[l], pre[l]);
      acts[l + 1] = pre[l];
      if (l + 1 < num_layers()) {
        for (double& v : acts[l + 1]) v = apply_act(act_, v);
      }
    }
    Vec grad(theta_.size(), 0.0);
    Vec delta = upstream;  // d(loss)/d(pre-act of current layer), output layer is linear
    for (std::size_t l = num_layers(); l-- > 0;) {
      int in = widths_[l];
      int out = widths_[l + 1];
      const double* w = theta_.data() + offsets_[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + static_cast<std::size_t>(in) * out;
      for (int o = 0; o < out; ++o) {
        double d = delta[o];
        gb[o] = d;
        const double* ain = acts[l].data();
        double* row = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) row[i] = d * ain[i];
      }
      if (l == 0) break;
      Vec prev(in, 0.0);
      for (int o = 0; o < out; ++o) {
        double d = delta[o];
        const double* row = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) prev[i] += d * row[i];
      }
      for (int i = 0; i < in; ++i) prev[i] *= act_deriv(act_, pre[l - 1][i]);
      delta.swap(prev);
    }
    return grad;
  }

  /// Largest singular value of layer l's weight matrix, by power iteration.
  double layer_operator_norm(std::size_t l, int iters = 50) const {
    int in = widths_[l];
    int out = widths_[l + 1];
    const double* w = theta_.data() + offsets_[l];
    Vec v(in, 1.0 / std::sqrt(static_cast<double>(in)));
    Vec u(out, 0.0);
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
      for (int o = 0; o < out; ++o) {
        const double* row = w + static_cast<std::size_t>(o) * in;
        double s = 0.0;
        for (int i = 0; i < in; ++i) s += row[i] * v[i];
        u[o] = s;
      }
      double un = norm2(u);
      if (un < 1e-300) return 0.0;
      for (double& x : u) x /= un;
      for (int i = 0; i < in; ++i) {
        double s = 0.0;
        for (int o = 0; o < out; ++o) s += w[static_cast<std::size_t>(o) * in + i] * u[o];
        v[i] = s;
      }
      sigma = norm2(v);
      if (sigma < 1e-300) return 0.0;
      for (double& x : v) x /= sigma;
    }
    return sigma;
  }

  /**
   * Rescale weight matrices so the product of layer operator norms is at most
   * cap: each layer is clipped to cap^(1/num_layers). With 1-Lipschitz
   * activations this bounds the network's Lipschitz constant by cap.
   */
  void clip_lipschitz(double cap) {
    if (cap <= 0.0) throw NumericalError("Mlp::clip_lipschitz: cap must be positive");
    double per_layer = std::pow(cap, 1.0 / static_cast<double>(num_layers()));
    for (std::size_t l = 0; l < num_layers(); ++l) {
      double sigma = layer_operator_norm(l);
      if (sigma > per_layer && sigma > 0.0) {
        double f = per_layer / sigma;
        double* w = theta_.data() + offsets_[l];
        std::size_t nw = static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
        for (std::size_t i = 0; i < nw; ++i) w[i] *= f;
      }
    }
  }

 private:
  void affine(std::size_t l, const Vec& in_v, Vec& out_v) const {
    int in = widths_[l];
    int out = widths_[l + 1];
    const double* w = theta_.data() + offsets_[l];
    const double* b = w + static_cast<std::size_t>(in) * out;
    out_v.assign(out, 0.0);
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double s = b[o];
      for (int i = 0; i < in; ++i) s += row[i] * in_v[i];
      out_v[o] = s;
    }
  }

  std::vector<int> widths_;
  Activation act_;
  std::vector<std::size_t> offsets_;
  Vec theta_;
};

/**
 * Empirical Lipschitz constant of f over a sampled domain: the maximum of
 * ||f(x)-f(y)|| / ||x-y|| over n_pairs sampled pairs, times a safety factor.
 * Pairs closer than 1e-9 are skipped; if every pair degenerates the domain
 * sampler is unusable and DegenerateSampleError is thrown.
 */
inline double estimate_lipschitz(const std::function<Vec(const Vec&)>& f,
                                 const std::function<Vec(Rng&)>& sample_domain,
                                 std::size_t n_pairs, double safety, Rng& rng) {
  double best = -1.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Vec x = sample_domain(rng);
    Vec y = sample_domain(rng);
    double d = l2_dist(x, y);
    if (d < 1e-9) continue;
    double num = l2_dist(f(x), f(y));
    double ratio = num / d;
    if (ratio > best) best = ratio;
  }
  if (best < 0.0)
    throw DegenerateSampleError("estimate_lipschitz: all sampled pairs were degenerate");
  return safety * best;
}

/// Empirical sup of ||f(x)|| over n_samples domain draws, times a safety factor.
inline double estimate_sup_norm(const std::function<Vec(const Vec&)>& f,
                                const std::function<Vec(Rng&)>& sample_domain,
                                std::size_t n_samples, double safety, Rng& rng) {
  if (n_samples == 0) throw DegenerateSampleError("estimate_sup_norm: no samples");
  double best = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double v = norm2(f(sample_domain(rng)));
    if (v > best) best = v;
  }
  return safety * best;
}

}  // namespace dynafilter
