#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace odce::rng {

// splitmix64 finalizer, used to spread structured stream keys across the
// seed space before they reach the generator.
inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t t, std::uint64_t i) {
  return mix(mix(mix(seed) ^ t) ^ i);
}

// Deterministic random stream. Every stochastic routine in the library
// receives one of these, keyed by (seed, iteration, index), so results are
// identical regardless of evaluation order or worker count. All samplers
// are implemented on top of raw 64-bit draws rather than std::
// distributions, whose outputs vary across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : gen_(key) {}
  Rng(std::uint64_t seed, std::uint64_t t, std::uint64_t i)
      : gen_(stream_key(seed, t, i)) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + uniform01() * (b - a); }

  // Inverse-CDF exponential with the given rate.
  double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

  // Exponential conditioned on [0, bound), by inverting the truncated CDF.
  double truncated_exponential(double rate, double bound) {
    return -std::log1p(uniform01() * std::expm1(-rate * bound)) / rate;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Sum of independent Bernoulli trials. Linear in `trials`, which keeps the
  // draw exact and portable; packet counts in this codebase stay small.
  std::int64_t binomial(std::int64_t trials, double p) {
    if (trials < 0) throw std::invalid_argument("binomial: negative trial count");
    if (p <= 0.0) return 0;
    std::int64_t k = 0;
    for (std::int64_t t = 0; t < trials; ++t) k += bernoulli(p) ? 1 : 0;
    return k;
  }

  // Standard normal via Box-Muller (first coordinate only).
  double normal01() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Uniform integer in [0, k) by rejection, bias-free.
  std::uint64_t below(std::uint64_t k) {
    if (k == 0) throw std::invalid_argument("below: empty range");
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % k;
    std::uint64_t r = gen_();
    while (r >= limit) r = gen_();
    return r % k;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace odce::rng
