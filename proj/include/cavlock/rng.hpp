#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cavlock {

// Portable seeded generator. std::mt19937_64 is bit-exact across standard
// libraries; the distributions below are written out by hand because the
// std:: distributions are not. Changing any of this changes every synthesized
// trace, so bump kGeneratorId when you do.
class Rng {
public:
  static constexpr std::string_view kGeneratorId = "mt19937_64+u53+boxmuller/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  std::uint64_t next_u64() { return engine_(); }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// SplitMix64 finalizer; derives independent sub-stream seeds from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace cavlock
