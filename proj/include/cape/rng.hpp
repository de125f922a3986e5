#pragma once

// Reproducible random streams. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the uniform and normal transforms are
// implemented here because the std:: distributions differ between standard
// libraries. Bump kStreamVersion whenever any transform changes.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace cape::rng {

inline constexpr std::uint32_t kStreamVersion = 1;

/// One SplitMix64 step; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Mixes a base seed with a sequence of keys into an independent sub-seed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept;

/// FNV-1a, for folding names into derive_seed keys.
std::uint64_t hash_name(std::string_view name) noexcept;

class Stream {
 public:
  explicit Stream(std::uint64_t seed);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal (Marsaglia polar method).
  double normal() noexcept;
  /// Uniform integer in [0, bound) without modulo bias. bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cape::rng
