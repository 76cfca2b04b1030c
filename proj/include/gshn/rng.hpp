#pragma once

#include <cmath>
#include <cstdint>

namespace gshn {

// Counter-based stream: each draw hashes (seed, stream_id, counter), so
// streams can be split and replayed without shared mutable state.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // Child stream; independent of the parent's subsequent draws.
  RngStream split(std::uint64_t child_id) const {
    return RngStream(seed_, mix(stream_ ^ mix(child_id + 0x9e3779b97f4a7c15ull)));
  }

  std::uint64_t next_u64() {
    std::uint64_t key = mix(seed_ + 0x2545f4914f6cdd1dull * stream_);
    return mix(key ^ (counter_++ * 0x9e3779b97f4a7c15ull));
  }

  // Uniform in [0, 1) with 53 bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Box-Muller; always consumes two uniforms so the draw count is predictable.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  // splitmix64 finalizer.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace gshn
