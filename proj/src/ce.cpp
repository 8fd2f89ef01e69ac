#include "odce/ce.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "odce/parallel.hpp"

namespace odce {

void validate(const CeConfig& cfg, std::size_t dim) {
  if (dim == 0) throw ConfigError("ce: problem dimension is zero");
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("ce: rho must lie in (0, 1)");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw ConfigError("ce: alpha must lie in (0, 1]");
  if (cfg.stop_window < 1) throw ConfigError("ce: stop window must be positive");
  if (cfg.max_iters < 1) throw ConfigError("ce: max_iters must be positive");
  if (cfg.workers < 1) throw ConfigError("ce: worker count must be positive");
}

double elite_threshold(std::span<const double> scores, double rho) {
  if (scores.empty()) throw std::invalid_argument("elite_threshold: no scores");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("elite_threshold: rho outside (0, 1)");
  const std::size_t n = scores.size();
  // ceil((1-rho)*n) computed with a guard against cases like 0.8*10 landing
  // one ulp above 8, which would push ceil to 9.
  double raw = (1.0 - rho) * static_cast<double>(n);
  std::size_t k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  if (k < 1) k = 1;
  if (k > n) k = n;
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  return sorted[k - 1];
}

CeResult ce_optimize(const CeProblem& problem, const CeConfig& cfg) {
  const std::size_t dim = problem.dim();
  validate(cfg, dim);
  const std::size_t n = cfg.n_samples > 0 ? cfg.n_samples : problem.default_samples();

  CeResult result;
  std::vector<double> params = problem.initial_params();
  SampleMatrix samples(n, dim);
  std::vector<double> scores(n, 0.0);
  std::vector<std::uint8_t> elite(n, 0);

  double prev_gamma = 0.0;
  int stable = 0;
  bool have_prev = false;

  for (int t = 1; t <= cfg.max_iters; ++t) {
    parallel_for(n, cfg.workers, [&](std::size_t i) {
      rng::Rng gen(cfg.seed, static_cast<std::uint64_t>(t), i);
      problem.sample(params, gen, samples.candidate(i));
      scores[i] = problem.score(samples.candidate(i));
    });

    const double gamma = elite_threshold(scores, cfg.rho);
    for (std::size_t i = 0; i < n; ++i) elite[i] = scores[i] >= gamma ? 1 : 0;

    for (std::size_t i = 0; i < n; ++i) {
      if (result.best.empty() || scores[i] > result.best_score) {
        result.best.assign(samples.candidate(i).begin(), samples.candidate(i).end());
        result.best_score = scores[i];
      }
    }

    std::vector<double> updated = problem.update(samples, elite, params);
    if (updated.size() != params.size())
      throw std::logic_error("ce_optimize: update changed the parameter length");
    for (std::size_t j = 0; j < params.size(); ++j)
      params[j] = cfg.alpha * updated[j] + (1.0 - cfg.alpha) * params[j];

    result.trace.push_back({t, gamma, result.best_score});
    result.iterations = t;

    if (have_prev && std::abs(gamma - prev_gamma) <= 1e-12) {
      if (++stable >= cfg.stop_window) {
        result.stopped_by_threshold = true;
        break;
      }
    } else {
      stable = 0;
    }
    prev_gamma = gamma;
    have_prev = true;
  }

  result.final_params = std::move(params);
  return result;
}

}  // namespace odce
