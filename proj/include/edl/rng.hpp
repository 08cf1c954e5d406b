#pragma once

// xoshiro256** (Blackman & Vigna) seeded through SplitMix64.
//
// Every derived quantity is specified bit-exactly so that runs can be
// reproduced by other implementations:
//   next()      xoshiro256** output
//   uniform()   (next() >> 11) * 2^-53, in [0, 1)
//   below(n)    rejection sampling on next() % n with threshold (2^64 - n) % n
//   stream(seed, keys...)  SplitMix64-chained hash of the seed and keys

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace edl {

class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  static Rng from_state(const State& state);
  /// Independent stream keyed by (seed, keys...).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int below(int n);
  /// Index drawn from a probability vector (entries must sum to ~1).
  int categorical(std::span<const double> probs);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      std::swap(items[i], items[below(i + 1)]);
    }
  }

  const State& state() const { return s_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  State s_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace edl
