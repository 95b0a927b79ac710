#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace metarep {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

/// A seeded random stream that can be split into named, independent children.
///
/// Children are derived from the stream's seed, not from its engine state, so
/// `split("noise")` yields the same child no matter how many draws the parent
/// has already made. This lets a master seed fan out into substreams (tasks,
/// features, noise, trial i, ...) that stay fixed when unrelated parts of an
/// experiment change size.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  RngStream split(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t s = detail::splitmix64(seed_ ^ detail::fnv1a(name));
    s = detail::splitmix64(s + index * 0xD1B54A32D192ED03ull);
    return RngStream(s);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }

  double uniform() { return uniform_(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace metarep
