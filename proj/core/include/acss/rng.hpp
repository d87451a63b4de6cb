#pragma once

#include <cstdint>
#include <random>

namespace acss {

// splitmix64 finalizer, used to decorrelate seeds of derived streams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded generator with counter-based substream derivation. Substreams are
// independent of thread scheduling: substream(a, b, c) depends only on the
// root seed and the counters, never on how much the parent stream was used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  // uniform integer in [0, bound)
  std::uint64_t integer(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
  }

  Rng substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    return Rng(mix64(seed_ ^ mix64(a ^ mix64(b ^ mix64(c)))));
  }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace acss
