// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace softtopic {

/// Seeded generator. Every distribution is implemented here on top of the
/// raw mt19937_64 stream so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// log of a Gamma(shape, 1) draw. Stays finite for very small shapes
  /// where the draw itself underflows.
  double log_gamma_draw(double shape);

  std::vector<double> dirichlet(std::span<const double> alpha);

  /// Poisson draw; large means are split into additive chunks.
  std::uint64_t poisson(double mean);

  /// Draws an index from an unnormalised non-negative weight vector.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Child seed from (seed, component name), stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component);

/// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace softtopic
