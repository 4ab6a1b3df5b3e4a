#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

namespace gaide {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d4a2e9fb79b97fULL;
  return x ^ (x >> 31);
}

// Seedable generator. Distributions are implemented by hand so that a given
// seed produces the same stream on every platform; std::mt19937_64 itself is
// fully specified by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // standard normal via Box-Muller (no cached spare, keeps the stream simple)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // uniform direction on the unit sphere in R^3
  std::array<double, 3> unit_vector3() {
    while (true) {
      double x = normal(), y = normal(), z = normal();
      double n = std::sqrt(x * x + y * y + z * z);
      if (n > 1e-12) return {x / n, y / n, z / n};
    }
  }

  // counter-based derivation for fan-out seeds (trials, workers, records)
  static std::uint64_t derive(std::uint64_t master, std::uint64_t counter) {
    return splitmix64(master ^ splitmix64(counter + 0x51ed270eULL));
  }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace gaide
