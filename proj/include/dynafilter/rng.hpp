#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dynafilter {

/**
 * Deterministic random stream.
 *
 * Wraps std::mt19937_64 (whose raw output sequence is fixed by the standard)
 * but supplies its own samplers: the std::*_distribution adaptors are
 * implementation-defined and would break the bit-reproducibility contract.
 * Streams derived from the same (seed, name) pair are identical; streams with
 * different names are statistically independent, so consumers of one stream
 * cannot perturb another.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derive a named substream from a root seed. FNV-1a over the name, then a
  /// splitmix64 finalizer so nearby seeds do not produce correlated engines.
  static Rng derive(std::uint64_t seed, std::string_view stream_name) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : stream_name) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 1099511628211ull;
    }
    return Rng(mix(seed ^ h));
  }

  /// Derive an indexed substream, e.g. one per evaluation point.
  static Rng derive(std::uint64_t seed, std::string_view stream_name, std::uint64_t index) {
    Rng base = derive(seed, stream_name);
    return Rng(mix(base.next_u64() ^ mix(index)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform index in [0, n). Lemire's multiply-shift reduction, unbiased
  /// enough at these ranges and branch-free.
  std::size_t uniform_index(std::size_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::size_t>(m >> 64);
  }

  /// Standard normal via Box-Muller. No cached spare: one call, two uniforms,
  /// so the consumption pattern is position-independent.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mu, double sd) { return mu + sd * normal(); }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace dynafilter
