#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace asl {

// All randomness in this project flows through one fixed generator so that
// every artifact (images, batches, weights) is a pure function of the seeds
// written into configs and manifests. The algorithm is pinned here so a
// reimplementation in another language can reproduce the exact streams:
//
//   state' = state + 0x9E3779B97F4A7C15            (golden-gamma increment)
//   output = mix64(state')                          (SplitMix64 finalizer)
//
//   mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//             z ^= z >> 27; z *= 0x94D049BB133111EB;
//             z ^= z >> 31; return z;
//
// Sub-streams are never produced by sharing a generator across purposes;
// they come from derive_seed(seed, tag) below.

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Child-seed derivation: derive_seed(s, t) = mix64(s + kGoldenGamma * (t + 1)).
// Distinct tags give statistically independent streams from one root seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed + kGoldenGamma * (tag + 1));
}

// FNV-1a, used to turn purpose names ("ladders", "probe", ...) into tags.
constexpr std::uint64_t tag_of(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return derive_seed(seed, tag_of(name));
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform in [0, 1): 53 mantissa bits of one output word.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased bounded draw via 128-bit multiply-shift (Lemire reduction
  // without rejection; the ~2^-64 bias is irrelevant here and the mapping
  // is exactly reproducible).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Box-Muller, cosine branch only; consumes exactly two words per call.
  double normal() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  SplitMix64 split(std::uint64_t tag) const {
    return SplitMix64(derive_seed(state_, tag));
  }

 private:
  std::uint64_t state_;
};

}  // namespace asl
