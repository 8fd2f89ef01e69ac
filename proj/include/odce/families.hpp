#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "odce/ce.hpp"
#include "odce/rng.hpp"

namespace odce {

// Rates are clamped to this interval whenever an update would leave it
// (empty or zero-sum elite component).
inline constexpr double kRateMin = 1e-6;
inline constexpr double kRateMax = 1e6;

// --- independent exponentials ------------------------------------------

// One draw per component, rates[j] for component j.
void sample_exp(std::span<const double> rates, rng::Rng& gen, std::span<double> out);

struct RateUpdate {
  std::vector<double> rates;
  std::vector<std::size_t> clamped;  // components whose rate hit a bound
};

// Maximum-likelihood rates from the elite candidates: count / sum per
// component, clamped to [kRateMin, kRateMax].
RateUpdate update_exp(const SampleMatrix& samples, std::span<const std::uint8_t> elite);

// --- exponentials truncated to [0, bound) ------------------------------

void sample_trunc_exp(std::span<const double> rates, std::span<const double> bounds,
                      rng::Rng& gen, std::span<double> out);

// Mean of the truncated density at the given rate and bound.
double trunc_exp_mean(double rate, double bound);

struct TruncRateRoot {
  double rate = 0.0;
  bool clamped = false;
};

// Solves mean(rate) = m for the rate, given the truncation bound. The
// moment equation m = 1/rate - bound/(exp(rate*bound) - 1) has a root iff
// 0 < m < bound/2; outside that range the rate is clamped (m >= bound/2
// maps to kRateMin, the flat-density limit, and m <= 0 to kRateMax).
// Newton from 1/m with a bisection fallback; residual below 1e-10.
TruncRateRoot solve_trunc_exp_rate(double elite_mean, double bound);

RateUpdate update_trunc_exp(const SampleMatrix& samples, std::span<const std::uint8_t> elite,
                            std::span<const double> bounds);

// --- Bernoulli vector conditioned on a fixed number of ones ------------

// One draw of (Z_1..Z_n) with margin: Z_i ~ Bernoulli(probs[i]), conditioned
// on sum Z = k. Components are visited in index order; each conditional
// probability accounts for how many ones and zeros remain feasible, and
// once only one completion is feasible the remainder is forced without
// consuming randomness. k = n and k = 0 consume no randomness at all.
std::vector<std::uint8_t> sample_conditional_bernoulli(std::span<const double> probs,
                                                       std::size_t k, rng::Rng& gen);

// Elite frequency of Z_i = 1 per component. Rows of `z` are candidates.
struct BinaryMatrix {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<std::uint8_t> data;
  std::uint8_t at(std::size_t component, std::size_t cand) const {
    return data[cand * dim + component];
  }
};

std::vector<double> update_bernoulli(const BinaryMatrix& z, std::span<const std::uint8_t> elite);

}  // namespace odce
