#include "expert/rng.hpp"

#include <cmath>

namespace expert {

std::uint64_t fnv1a(std::uint64_t seed, std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  // Fold the seed in byte-wise first so that seed and name both perturb
  // the full state.
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xffu;
    h *= 1099511628211ull;
  }
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double Rng::uniform() {
  // 53 random bits -> [0, 1) with full double resolution.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  // Rejection-free modulo is fine here: ranges are tiny relative to 2^64,
  // and exact uniformity is not load-bearing for data synthesis.
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(engine_() % span);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double two_pi = 6.283185307179586476925286766559;
  spare_ = mag * std::sin(two_pi * u2);
  have_spare_ = true;
  return mag * std::cos(two_pi * u2);
}

double Rng::truncated_normal(double std_dev) {
  for (;;) {
    const double z = normal();
    if (std::fabs(z) <= 2.0) return z * std_dev;
  }
}

}  // namespace expert
