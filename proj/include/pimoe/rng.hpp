#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pimoe {

/// Seeded random stream. Uniform and normal draws are computed here rather
/// than through <random> distributions so results do not depend on the
/// standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
std::uint64_t hash_string(std::string_view text);

/// Independent stream keyed by (seed, name, index); parallel evaluation order
/// never changes what a given key draws.
Rng derive_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

}  // namespace pimoe
