#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace auscult {

// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence
// is fixed by the standard) and does its own uniform/normal sampling so that
// results do not depend on the standard library's distribution
// implementations. Replaying with the same seed and the same call sequence
// reproduces identical values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), base_token_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in {0, ..., n-1}. Multiply-shift; bias is O(n / 2^64).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; the spare value is cached so draws come in deterministic order.
  double normal(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // u1 == 0 would take log(0); nudge to the smallest representable draw.
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Child stream derived from (seed material, stream id). Independent of the
  // parent's position, so callers can fan out work without ordering effects.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(mix(base_token_, 0x9e3779b97f4a7c15ULL), stream));
  }

  // Builds an Rng whose identity is a hash of the given parts. Used for
  // per-clip / per-step substreams.
  static Rng from_parts(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    return Rng(mix(mix(mix(a, 0xbf58476d1ce4e5b9ULL), b), c));
  }

  static std::uint64_t hash_string(std::string_view s) {
    // FNV-1a.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words.
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1 | b >> 63);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t base_token_;  // seed material; forking ignores stream position
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace auscult
