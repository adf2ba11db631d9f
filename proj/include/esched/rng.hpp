#pragma once

#include <cstdint>
#include <random>
#include <utility>

namespace esched {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded 64-bit generator with hand-rolled draws. std::uniform_int_distribution
// is not bit-stable across standard libraries, and seeded fixtures depend on
// stable draw sequences.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // Independent deterministic stream, e.g. one per worker.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(seed ^ splitmix64(0x9d2c5680ull + stream_id));
  }

  std::uint64_t next() { return eng_(); }

  // Uniform-ish draw in [0, n); modulo bias is irrelevant at our n.
  std::uint32_t below(std::uint32_t n) {
    return n ? static_cast<std::uint32_t>(next() % n) : 0u;
  }

  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <typename Seq>
  void shuffle(Seq& s) {
    for (std::size_t i = s.size(); i > 1; --i) {
      std::size_t j = below(static_cast<std::uint32_t>(i));
      std::swap(s[i - 1], s[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace esched
