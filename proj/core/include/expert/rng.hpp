#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace expert {

// FNV-1a over an arbitrary byte string, seeded. Used to derive independent
// deterministic RNG streams per parameter name / image id, so that adding
// or removing one parameter never shifts the draws of another.
std::uint64_t fnv1a(std::uint64_t seed, std::string_view bytes);

// Deterministic generator; thin wrapper so call sites never depend on
// distribution implementations that vary across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream_name) : engine_(fnv1a(seed, stream_name)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller (platform-independent, unlike
  // std::normal_distribution).
  double normal();

  // Normal(0, std) with resampling until |z| <= 2*std.
  double truncated_normal(double std_dev);

private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace expert
