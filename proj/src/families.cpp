#include "odce/families.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odce {

namespace {

// 1 - u/expm1(u), the truncation deficit factor. Series below u = 1e-2
// avoids the cancellation in the direct form.
double phi(double u) {
  if (u < 1e-2) return u / 2.0 - u * u / 12.0 + u * u * u * u / 720.0;
  return 1.0 - u / std::expm1(u);
}

// d/d(rate) of trunc_exp_mean.
double mean_deriv(double rate, double bound) {
  const double u = rate * bound;
  if (u < 1e-2) return -bound * bound / 12.0 + bound * bound * u * u / 240.0;
  const double e1 = std::expm1(u);
  const double e2 = -std::expm1(-u);
  return -1.0 / (rate * rate) + bound * bound / (e1 * e2);
}

double clamp_rate(double rate, bool& hit) {
  if (rate < kRateMin) { hit = true; return kRateMin; }
  if (rate > kRateMax) { hit = true; return kRateMax; }
  hit = false;
  return rate;
}

}  // namespace

void sample_exp(std::span<const double> rates, rng::Rng& gen, std::span<double> out) {
  if (rates.size() != out.size())
    throw std::invalid_argument("sample_exp: size mismatch");
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (!(rates[j] > 0.0)) throw std::invalid_argument("sample_exp: rate must be positive");
    out[j] = gen.exponential(rates[j]);
  }
}

RateUpdate update_exp(const SampleMatrix& samples, std::span<const std::uint8_t> elite) {
  if (elite.size() != samples.count)
    throw std::invalid_argument("update_exp: elite mask has wrong length");
  std::size_t cnt = 0;
  for (auto e : elite) cnt += e ? 1 : 0;
  if (cnt == 0) throw std::invalid_argument("update_exp: empty elite set");

  RateUpdate out;
  out.rates.resize(samples.dim);
  for (std::size_t j = 0; j < samples.dim; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.count; ++i)
      if (elite[i]) sum += samples.at(j, i);
    double rate = sum > 0.0 ? static_cast<double>(cnt) / sum : kRateMax;
    bool hit = false;
    rate = clamp_rate(rate, hit);
    if (hit || sum <= 0.0) out.clamped.push_back(j);
    out.rates[j] = rate;
  }
  return out;
}

void sample_trunc_exp(std::span<const double> rates, std::span<const double> bounds,
                      rng::Rng& gen, std::span<double> out) {
  if (rates.size() != out.size() || bounds.size() != out.size())
    throw std::invalid_argument("sample_trunc_exp: size mismatch");
  for (std::size_t j = 0; j < rates.size(); ++j) {
    if (!(rates[j] > 0.0)) throw std::invalid_argument("sample_trunc_exp: rate must be positive");
    if (!(bounds[j] > 0.0)) throw std::invalid_argument("sample_trunc_exp: bound must be positive");
    out[j] = gen.truncated_exponential(rates[j], bounds[j]);
  }
}

double trunc_exp_mean(double rate, double bound) {
  return phi(rate * bound) / rate;
}

TruncRateRoot solve_trunc_exp_rate(double elite_mean, double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound))
    throw std::invalid_argument("solve_trunc_exp_rate: bound must be positive and finite");
  if (!std::isfinite(elite_mean))
    throw std::invalid_argument("solve_trunc_exp_rate: mean must be finite");
  // The moment equation has a root only for means in (0, bound/2); the
  // boundary cases degrade to the flat and the point-mass limits.
  if (!(elite_mean > 0.0)) return {kRateMax, true};
  if (elite_mean >= bound / 2.0) return {kRateMin, true};

  const double m = elite_mean;
  double rate = 1.0 / m;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const double f = trunc_exp_mean(rate, bound) - m;
    if (std::abs(f) < 1e-12) { converged = true; break; }
    const double d = mean_deriv(rate, bound);
    const double next = rate - f / d;
    if (!(next > 0.0) || !std::isfinite(next)) break;
    rate = next;
  }

  if (!converged || std::abs(trunc_exp_mean(rate, bound) - m) >= 1e-12) {
    // The mean is strictly decreasing in the rate, so bisection on the
    // admissible interval always brackets the root.
    double lo = kRateMin, hi = kRateMax;
    if (trunc_exp_mean(lo, bound) - m < 0.0) return {kRateMin, true};
    if (trunc_exp_mean(hi, bound) - m > 0.0) return {kRateMax, true};
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (trunc_exp_mean(mid, bound) - m > 0.0) lo = mid; else hi = mid;
      if (hi - lo < 1e-13 * std::max(1.0, lo)) break;
    }
    rate = 0.5 * (lo + hi);
  }

  bool hit = false;
  rate = clamp_rate(rate, hit);
  return {rate, hit};
}

RateUpdate update_trunc_exp(const SampleMatrix& samples, std::span<const std::uint8_t> elite,
                            std::span<const double> bounds) {
  if (elite.size() != samples.count)
    throw std::invalid_argument("update_trunc_exp: elite mask has wrong length");
  if (bounds.size() != samples.dim)
    throw std::invalid_argument("update_trunc_exp: bounds have wrong length");
  std::size_t cnt = 0;
  for (auto e : elite) cnt += e ? 1 : 0;
  if (cnt == 0) throw std::invalid_argument("update_trunc_exp: empty elite set");

  RateUpdate out;
  out.rates.resize(samples.dim);
  for (std::size_t j = 0; j < samples.dim; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.count; ++i)
      if (elite[i]) sum += samples.at(j, i);
    const auto root = solve_trunc_exp_rate(sum / static_cast<double>(cnt), bounds[j]);
    if (root.clamped) out.clamped.push_back(j);
    out.rates[j] = root.rate;
  }
  return out;
}

std::vector<std::uint8_t> sample_conditional_bernoulli(std::span<const double> probs,
                                                       std::size_t k, rng::Rng& gen) {
  const std::size_t n = probs.size();
  if (k > n) throw std::invalid_argument("sample_conditional_bernoulli: k exceeds dimension");
  for (double p : probs)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("sample_conditional_bernoulli: probability outside [0, 1]");
  std::vector<std::uint8_t> z(n, 0);
  std::size_t ones = 0, zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ones == k) { z[i] = 0; ++zeros; continue; }
    if (zeros == n - k) { z[i] = 1; ++ones; continue; }
    const bool bit = gen.bernoulli(probs[i]);
    z[i] = bit ? 1 : 0;
    bit ? ++ones : ++zeros;
  }
  return z;
}

std::vector<double> update_bernoulli(const BinaryMatrix& z, std::span<const std::uint8_t> elite) {
  if (elite.size() != z.count)
    throw std::invalid_argument("update_bernoulli: elite mask has wrong length");
  std::size_t cnt = 0;
  for (auto e : elite) cnt += e ? 1 : 0;
  if (cnt == 0) throw std::invalid_argument("update_bernoulli: empty elite set");
  std::vector<double> probs(z.dim, 0.0);
  for (std::size_t j = 0; j < z.dim; ++j) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < z.count; ++i)
      if (elite[i] && z.at(j, i)) ++hits;
    probs[j] = static_cast<double>(hits) / static_cast<double>(cnt);
  }
  return probs;
}

}  // namespace odce
