#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace wxa {

/// Seeded generator whose uniform/normal draws are defined in terms of raw
/// mt19937_64 output only, so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);

  /// Standard normal via Box-Muller (no cached second variate).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent child stream derived from this generator's seed material.
  [[nodiscard]] static Rng derive(std::uint64_t seed, std::uint64_t stream);

  [[nodiscard]] std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace wxa
