#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mret {

/// Seeded generator with platform-independent draws (the std distributions are
/// implementation-defined, which would break cross-build reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream derived from a top-level seed and a stream name.
  static Rng derive(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

  std::uint64_t next() { return engine_(); }
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  std::size_t uniform_index(std::size_t n);
  double normal();
  double truncated_normal(double stddev, double bound_in_stddevs);

  template <typename It>
  void shuffle(It first, It last) {
    for (auto n = last - first; n > 1; --n) {
      auto j = static_cast<decltype(n)>(uniform_index(static_cast<std::size_t>(n)));
      std::swap(first[n - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mret
