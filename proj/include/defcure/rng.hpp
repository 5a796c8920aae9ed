// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <vector>

namespace defcure {

/// Deterministic random stream keyed by a seed and a path of integer keys
/// (chain index, replicate index, ...). Streams with different key paths are
/// statistically independent, so parallel work is reproducible regardless of
/// scheduling. Variates are produced from raw engine output so results do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {})
      : Rng(seed, std::vector<std::uint64_t>(keys)) {}

  Rng(std::uint64_t seed, std::vector<std::uint64_t> keys) : seed_(seed), keys_(std::move(keys)) {
    std::uint64_t state = splitmix(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t k : keys_) state = splitmix(state ^ splitmix(k + 0x9e3779b97f4a7c15ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(state), static_cast<std::uint32_t>(state >> 32),
                      static_cast<std::uint32_t>(keys_.size())};
    engine_.seed(seq);
  }

  /// Child stream with one more key appended.
  Rng substream(std::uint64_t key) const {
    auto keys = keys_;
    keys.push_back(key);
    return Rng(seed_, std::move(keys));
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do u = uniform();
    while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  std::uint64_t next() { return engine_(); }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::vector<std::uint64_t> keys_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace defcure
