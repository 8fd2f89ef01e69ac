#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "odce/errors.hpp"
#include "odce/rng.hpp"

namespace odce {

// Knobs for the cross-entropy loop. n_samples = 0 means "use the problem
// default", which is 7 * dim.
struct CeConfig {
  std::size_t n_samples = 0;
  double rho = 0.1;       // elite fraction
  int stop_window = 5;    // consecutive stable thresholds required to stop
  double alpha = 1.0;     // parameter smoothing; 1 keeps the raw update
  int max_iters = 500;
  std::uint64_t seed = 0;
  int workers = 1;
};

void validate(const CeConfig& cfg, std::size_t dim);

// Candidate store, one contiguous block per candidate.
struct SampleMatrix {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  SampleMatrix() = default;
  SampleMatrix(std::size_t count_, std::size_t dim_)
      : count(count_), dim(dim_), data(count_ * dim_, 0.0) {}

  std::span<double> candidate(std::size_t i) {
    return {data.data() + i * dim, dim};
  }
  std::span<const double> candidate(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
  double at(std::size_t component, std::size_t cand) const {
    return data[cand * dim + component];
  }
};

// A problem plugs its sampling density, score, and analytic parameter
// update into the generic loop. Parameters travel as a flat vector; their
// layout is the problem's own business.
class CeProblem {
 public:
  virtual ~CeProblem() = default;
  virtual std::size_t dim() const = 0;
  // Sample count used when the config leaves n_samples at 0. Problems whose
  // candidate encoding is wider than their real decision space override this.
  virtual std::size_t default_samples() const { return 7 * dim(); }
  virtual std::vector<double> initial_params() const = 0;
  // Fill `out` (length dim) with one draw from the density at `params`.
  virtual void sample(std::span<const double> params, rng::Rng& gen,
                      std::span<double> out) const = 0;
  virtual double score(std::span<const double> candidate) const = 0;
  // Maximum-likelihood update from the elite subset (elite[i] != 0).
  virtual std::vector<double> update(const SampleMatrix& samples,
                                     std::span<const std::uint8_t> elite,
                                     std::span<const double> old_params) const = 0;
};

// (1-rho)-quantile of the scores, taken as the ceil((1-rho)*N)-th order
// statistic (1-based) of the sorted scores.
double elite_threshold(std::span<const double> scores, double rho);

struct CeIterRecord {
  int iter = 0;
  double gamma_hat = 0.0;
  double best_score = 0.0;
};
using CeTrace = std::vector<CeIterRecord>;

struct CeResult {
  std::vector<double> best;          // best-scoring candidate ever sampled
  double best_score = 0.0;
  std::vector<double> final_params;  // smoothed parameters after the last update
  CeTrace trace;
  int iterations = 0;
  bool stopped_by_threshold = false;
};

// Iterates sample / threshold / update until the threshold is unchanged
// (within 1e-12) for cfg.stop_window consecutive iterations, or max_iters.
// Candidate i of iteration t is drawn from the stream keyed (seed, t, i),
// so runs are reproducible for any worker count.
CeResult ce_optimize(const CeProblem& problem, const CeConfig& cfg);

struct IsEstimate {
  double estimate = 0.0;
  double sample_variance = 0.0;       // of the summands, not of the mean
  std::vector<double> summands;       // indicator times likelihood ratio
};

// Importance-sampling estimate of P_f(score(X) >= gamma) using draws from
// g. density_f and density_g must return the density of their argument;
// sample_g draws one point. Throws DegeneracyError when a point inside the
// event has zero g-density, since g then fails to dominate the target.
template <class SampleG, class DensityG, class DensityF, class Score>
IsEstimate rare_event_probability(SampleG&& sample_g, DensityG&& density_g,
                                  DensityF&& density_f, Score&& score,
                                  double gamma, std::size_t n, rng::Rng& gen) {
  if (n == 0) throw std::invalid_argument("rare_event_probability: need at least one draw");
  IsEstimate out;
  out.summands.reserve(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = sample_g(gen);
    double w = 0.0;
    if (score(x) >= gamma) {
      const double fg = density_g(x);
      const double ff = density_f(x);
      w = ff / fg;
      if (!std::isfinite(w))
        throw DegeneracyError(
            "rare_event_probability: sampling density does not dominate the "
            "target on the event");
    }
    out.summands.push_back(w);
    sum += w;
  }
  out.estimate = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double w : out.summands) {
      const double d = w - out.estimate;
      ss += d * d;
    }
    out.sample_variance = ss / static_cast<double>(n - 1);
  }
  return out;
}

}  // namespace odce
