#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <initializer_list>
#include <utility>

namespace lvg {

// Stateless counter-based generator: every draw is a pure function of its
// key words, so dropout masks depend only on (seed, step, layer, element)
// and never on call order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto w : words) h = mix64(h ^ mix64(w));
  return h;
}

// Uniform double in [0, 1) from the top 53 bits of the hash.
inline double uniform01(std::initializer_list<std::uint64_t> words) {
  return static_cast<double>(hash_key(words) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two keyed uniforms.
inline double normal01(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const double u1 = 1.0 - uniform01({a, b, c, 0});  // (0, 1]
  const double u2 = uniform01({a, b, c, 1});
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Fisher-Yates driven by the keyed generator.
template <typename Vec>
void keyed_shuffle(Vec& v, std::uint64_t seed, std::uint64_t stream) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform01({seed, stream, i}) * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(v[i - 1], v[j]);
  }
}

// Sequential draws from the keyed generator: (seed, stream, counter).
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  double uniform() { return uniform01({seed_, stream_, counter_++}); }
  double normal() { return normal01(seed_, stream_, counter_++); }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace lvg
