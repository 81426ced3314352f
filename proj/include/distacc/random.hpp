#pragma once

// Counter-based random streams. A stream is identified by (seed, node, trial,
// role); the i-th draw is a pure function of that key and i, so streams are
// independent of evaluation order and of each other.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace distacc {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t node, std::uint64_t trial, std::uint64_t role)
      : key_(splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ node) ^ trial) ^ role)) {}

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  // Standard normal by Box-Muller; the second variate of each pair is kept.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace distacc
