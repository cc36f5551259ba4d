#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sift {

// Portable seeded generator. std::mt19937_64 output is fixed by the standard;
// bounded draws use rejection sampling instead of std::uniform_int_distribution,
// whose algorithm varies between standard libraries.
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64+rejection";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= limit) return r % bound;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sift
