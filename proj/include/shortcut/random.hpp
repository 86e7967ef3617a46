#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace shortcut {

/// Seeded source of uniforms and standard normals.
///
/// Bits come from std::mt19937_64 (fully specified by the standard, so the
/// stream is identical across platforms). Uniforms take the top 53 bits;
/// normals use the Box-Muller transform and hand out both variates of each
/// pair. The library-provided distributions are avoided because their
/// output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on (0, 1); never returns 0 so log() in Box-Muller is safe.
  double uniform() {
    std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over the bytes of `text`, folded into `state`.
constexpr std::uint64_t hash_combine(std::uint64_t state, std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(state);
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

constexpr std::uint64_t hash_combine(std::uint64_t state, std::uint64_t value) {
  return mix64(state ^ mix64(value + 0x632be59bd9b4e019ULL));
}

}  // namespace shortcut
