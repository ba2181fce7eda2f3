#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace rubric_loop {

/// SplitMix64 (Steele, Lea, Flood 2014). Chosen because the full algorithm is
/// a few lines and gives identical streams in any language, which keeps
/// splits and samples reproducible across implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

// Sorts ids, then applies a Fisher-Yates shuffle drawing j = below(i + 1)
// for i from n-1 down to 1.
inline std::vector<std::string> canonical_shuffle(std::vector<std::string> ids,
                                                  std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  SplitMix64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

}  // namespace rubric_loop
