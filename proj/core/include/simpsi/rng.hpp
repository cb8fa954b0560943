#pragma once

#include <cstdint>
#include <string_view>

namespace simpsi::rng {

// One step of the splitmix64 sequence; advances `state` and returns the output.
std::uint64_t splitmix64(std::uint64_t& state);

std::uint64_t fnv1a64(std::string_view s);

// Deterministic pseudo-random stream: xoshiro256++ state expanded from a
// 64-bit seed via splitmix64. Gaussian draws use Box-Muller with the second
// value of each pair cached, so the output sequence is a pure function of
// (seed, call sequence).
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double next_double();
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi], both inclusive. Unbiased via rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal.
  double normal();

  // Child stream keyed by (seed, key); independent of draws made so far.
  RngStream fork(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace simpsi::rng
