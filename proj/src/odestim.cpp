#include "odce/odestim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "odce/errors.hpp"
#include "odce/families.hpp"

namespace odce {

CostVector CostModel::apply(std::span<const double> loads) const {
  switch (kind) {
    case CostKind::kConstantRandom:
      throw std::logic_error("CostModel::apply: constant costs are drawn, not computed");
    case CostKind::kAffine: {
      CostVector c(loads.size());
      for (std::size_t i = 0; i < loads.size(); ++i) c[i] = a + b * loads[i];
      return c;
    }
    case CostKind::kPower: {
      CostVector c(loads.size());
      for (std::size_t i = 0; i < loads.size(); ++i) c[i] = a + b * std::pow(loads[i], gamma);
      return c;
    }
  }
  throw std::logic_error("CostModel::apply: unknown kind");
}

void validate(const CostModel& m) {
  if (!(m.a > 0.0) || !std::isfinite(m.a))
    throw ConfigError("cost model: 'a' must be positive and finite");
  switch (m.kind) {
    case CostKind::kConstantRandom:
      if (!(m.b >= m.a) || !std::isfinite(m.b))
        throw ConfigError("cost model: constant-random needs b >= a");
      break;
    case CostKind::kAffine:
      if (!(m.b >= 0.0) || !std::isfinite(m.b))
        throw ConfigError("cost model: affine needs b >= 0");
      break;
    case CostKind::kPower:
      if (!(m.b >= 0.0) || !std::isfinite(m.b))
        throw ConfigError("cost model: power needs b >= 0");
      if (!(m.gamma > 0.0) || !std::isfinite(m.gamma))
        throw ConfigError("cost model: power needs gamma > 0");
      break;
  }
}

void validate(const Scenario& s) {
  if (s.p < 2) throw ConfigError("scenario: p must be at least 2");
  validate(s.cost_model);
  if (!(s.prior_rate > 0.0) || !std::isfinite(s.prior_rate))
    throw ConfigError("scenario: prior rate must be positive and finite");
  if (s.fixed_point_rounds < 1)
    throw ConfigError("scenario: fixed-point rounds must be positive");
  if (s.family == FamilyKind::kTruncExp &&
      (!(s.family_bound > 0.0) || !std::isfinite(s.family_bound)))
    throw ConfigError("scenario: truncated family needs a positive bound");
  const std::size_t n = static_cast<std::size_t>(s.p) * s.p - s.p;
  if (s.constraint.mode == ConstraintMode::kFixedZeros && s.constraint.mask.size() != n)
    throw ConfigError("scenario: fixed-zeros mask must have one entry per couple");
  if (s.constraint.mode == ConstraintMode::kFixedK && s.constraint.k_active > n)
    throw ConfigError("scenario: fixed-K count exceeds the number of couples");
}

GroundTruth simulate_from_x0(const Scenario& s, const OdVector& x0, std::uint64_t seed) {
  validate(s);
  Network net(s.p);
  if (static_cast<int>(x0.size()) != net.n)
    throw std::invalid_argument("simulate: demand vector has wrong length");
  for (double v : x0)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("simulate: demands must be nonnegative and finite");

  CostVector c(net.n);
  RoutingMatrix a;
  LoadVector y;
  if (s.cost_model.kind == CostKind::kConstantRandom) {
    rng::Rng gen(seed, 0, 1);
    for (int i = 0; i < net.n; ++i) c[i] = gen.uniform(s.cost_model.a, s.cost_model.b);
    a = routing_matrix(net, shortest_paths(net, c));
    y = arc_loads(a, x0);
  } else {
    c = s.cost_model.apply(LoadVector(net.n, 0.0));
    for (int round = 0; round < s.fixed_point_rounds; ++round) {
      a = routing_matrix(net, shortest_paths(net, c));
      y = arc_loads(a, x0);
      c = s.cost_model.apply(y);
    }
  }
  return GroundTruth{net, x0, std::move(y), std::move(c), std::move(a)};
}

GroundTruth simulate(const Scenario& s, std::uint64_t seed) {
  validate(s);
  Network net(s.p);
  OdVector x0(net.n);
  rng::Rng gen(seed, 0, 0);
  for (int i = 0; i < net.n; ++i) x0[i] = gen.exponential(s.prior_rate);
  return simulate_from_x0(s, x0, seed);
}

namespace {

LoadVector predicted_loads(std::span<const double> x_hat, const GroundTruth& truth,
                           PerformanceMode mode, const CostModel& cost_model) {
  OdVector x(x_hat.begin(), x_hat.end());
  LoadVector y = arc_loads(truth.a, x);
  if (mode == PerformanceMode::kCoupled) {
    // A constant cost function evaluates to the truth's own drawn costs.
    const CostVector c = cost_model.kind == CostKind::kConstantRandom
                             ? truth.c
                             : cost_model.apply(y);
    const RoutingMatrix a2 = routing_matrix(truth.net, shortest_paths(truth.net, c));
    y = arc_loads(a2, x);
  }
  return y;
}

double residual_norm(const LoadVector& y_obs, const LoadVector& y_hat) {
  double ss = 0.0;
  for (std::size_t i = 0; i < y_obs.size(); ++i) {
    const double d = y_obs[i] - y_hat[i];
    ss += d * d;
  }
  return std::sqrt(ss);
}

}  // namespace

double performance(std::span<const double> x_hat, const GroundTruth& truth,
                   PerformanceMode mode, const CostModel& cost_model) {
  if (static_cast<int>(x_hat.size()) != truth.net.n)
    throw std::invalid_argument("performance: candidate has wrong length");
  const LoadVector y_hat = predicted_loads(x_hat, truth, mode, cost_model);
  return 1.0 / std::max(residual_norm(truth.y, y_hat), 1e-12);
}

RankReport identifiability_report(const GroundTruth& truth) {
  const ReducedSystem r = reduce_system(truth.a, truth.y);
  RankReport rep;
  rep.used_arcs = static_cast<int>(r.rows.size());
  rep.rank = r.rank;
  rep.nullity = r.nullity;
  rep.square = rep.used_arcs == r.cols;
  rep.identifiable = r.nullity == 0;
  return rep;
}

namespace {

// CE problem over demand vectors. Fixed-K widens the candidate to
// [x, z]: the demand values followed by the exact activity bits, so the
// update never has to guess which components were active.
class DemandProblem final : public CeProblem {
 public:
  DemandProblem(const GroundTruth& truth, const EstimateOptions& opt)
      : truth_(truth), opt_(opt), n_(static_cast<std::size_t>(truth.net.n)) {
    if (opt_.constraint.mode == ConstraintMode::kFixedZeros &&
        opt_.constraint.mask.size() != n_)
      throw ConfigError("estimate: fixed-zeros mask must have one entry per couple");
    if (opt_.constraint.mode == ConstraintMode::kFixedK && opt_.constraint.k_active > n_)
      throw ConfigError("estimate: fixed-K count exceeds the number of couples");
    if (!(opt_.initial_rate > 0.0) || !std::isfinite(opt_.initial_rate))
      throw ConfigError("estimate: initial rate must be positive and finite");
    if (opt_.family == FamilyKind::kTruncExp &&
        (!(opt_.family_bound > 0.0) || !std::isfinite(opt_.family_bound)))
      throw ConfigError("estimate: truncated family needs a positive bound");
    bounds_.assign(n_, opt_.family_bound);
  }

  bool fixed_k() const { return opt_.constraint.mode == ConstraintMode::kFixedK; }

  std::size_t dim() const override { return fixed_k() ? 2 * n_ : n_; }

  std::size_t default_samples() const override { return 7 * n_; }

  std::vector<double> initial_params() const override {
    std::vector<double> params(n_, opt_.initial_rate);
    if (fixed_k()) {
      const double p0 = n_ > 0 ? static_cast<double>(opt_.constraint.k_active) /
                                     static_cast<double>(n_)
                               : 0.0;
      params.insert(params.end(), n_, p0);
    }
    return params;
  }

  void sample(std::span<const double> params, rng::Rng& gen,
              std::span<double> out) const override {
    const std::span<const double> rates = params.first(n_);
    if (fixed_k()) {
      const std::span<const double> probs = params.subspan(n_, n_);
      const auto z = sample_conditional_bernoulli(probs, opt_.constraint.k_active, gen);
      for (std::size_t j = 0; j < n_; ++j) {
        out[j] = z[j] ? draw(rates[j], j, gen) : 0.0;
        out[n_ + j] = z[j] ? 1.0 : 0.0;
      }
      return;
    }
    const bool masked = opt_.constraint.mode == ConstraintMode::kFixedZeros;
    for (std::size_t j = 0; j < n_; ++j) {
      if (masked && !opt_.constraint.mask[j]) {
        out[j] = 0.0;
        continue;
      }
      out[j] = draw(rates[j], j, gen);
    }
  }

  double score(std::span<const double> candidate) const override {
    return performance(candidate.first(n_), truth_, opt_.mode, opt_.cost_model);
  }

  std::vector<double> update(const SampleMatrix& samples,
                             std::span<const std::uint8_t> elite,
                             std::span<const double> old_params) const override {
    std::vector<double> params(old_params.begin(), old_params.end());
    if (fixed_k()) {
      update_fixed_k(samples, elite, params);
      return params;
    }
    const bool masked = opt_.constraint.mode == ConstraintMode::kFixedZeros;
    std::size_t cnt = 0;
    for (auto e : elite) cnt += e ? 1 : 0;
    for (std::size_t j = 0; j < n_; ++j) {
      if (masked && !opt_.constraint.mask[j]) continue;
      double sum = 0.0;
      for (std::size_t i = 0; i < samples.count; ++i)
        if (elite[i]) sum += samples.at(j, i);
      params[j] = refit(sum, cnt, j);
    }
    return params;
  }

  // Location of the sampling density at the given parameters, used as one
  // extra candidate after the loop.
  std::vector<double> density_location(std::span<const double> params) const {
    std::vector<double> x(n_, 0.0);
    const std::span<const double> rates = params.first(n_);
    if (fixed_k()) {
      const std::span<const double> probs = params.subspan(n_, n_);
      std::vector<std::size_t> order(n_);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs[a] > probs[b];
      });
      for (std::size_t r = 0; r < opt_.constraint.k_active; ++r)
        x[order[r]] = mean_of(rates[order[r]], order[r]);
      return x;
    }
    const bool masked = opt_.constraint.mode == ConstraintMode::kFixedZeros;
    for (std::size_t j = 0; j < n_; ++j) {
      if (masked && !opt_.constraint.mask[j]) continue;
      x[j] = mean_of(rates[j], j);
    }
    return x;
  }

  std::size_t clamp_events() const { return clamp_events_; }

 private:
  double draw(double rate, std::size_t j, rng::Rng& gen) const {
    if (opt_.family == FamilyKind::kTruncExp)
      return gen.truncated_exponential(rate, bounds_[j]);
    return gen.exponential(rate);
  }

  double mean_of(double rate, std::size_t j) const {
    if (opt_.family == FamilyKind::kTruncExp) return trunc_exp_mean(rate, bounds_[j]);
    return 1.0 / rate;
  }

  double refit(double sum, std::size_t cnt, std::size_t j) const {
    if (opt_.family == FamilyKind::kTruncExp) {
      const auto root = solve_trunc_exp_rate(sum / static_cast<double>(cnt), bounds_[j]);
      if (root.clamped) ++clamp_events_;
      return root.rate;
    }
    double rate = sum > 0.0 ? static_cast<double>(cnt) / sum : kRateMax;
    if (rate < kRateMin) { rate = kRateMin; ++clamp_events_; }
    if (rate > kRateMax) { rate = kRateMax; ++clamp_events_; }
    if (sum <= 0.0) ++clamp_events_;
    return rate;
  }

  void update_fixed_k(const SampleMatrix& samples, std::span<const std::uint8_t> elite,
                      std::vector<double>& params) const {
    std::size_t cnt = 0;
    for (auto e : elite) cnt += e ? 1 : 0;
    for (std::size_t j = 0; j < n_; ++j) {
      double sum = 0.0;
      std::size_t active = 0;
      std::size_t hits = 0;
      for (std::size_t i = 0; i < samples.count; ++i) {
        if (!elite[i]) continue;
        if (samples.at(n_ + j, i) != 0.0) {
          ++active;
          ++hits;
          sum += samples.at(j, i);
        }
      }
      // Rate information exists only where the component was active in at
      // least one elite candidate; otherwise the old rate stands.
      if (active > 0) params[j] = refit(sum, active, j);
      params[n_ + j] = cnt > 0 ? static_cast<double>(hits) / static_cast<double>(cnt) : 0.0;
    }
  }

  const GroundTruth& truth_;
  EstimateOptions opt_;
  std::size_t n_;
  std::vector<double> bounds_;
  mutable std::size_t clamp_events_ = 0;
};

}  // namespace

EstimationResult estimate(const GroundTruth& truth, const EstimateOptions& opt) {
  DemandProblem problem(truth, opt);
  CeResult ce = ce_optimize(problem, opt.ce);

  EstimationResult out;
  out.x_hat.assign(ce.best.begin(), ce.best.begin() + truth.net.n);
  out.score = ce.best_score;

  const std::vector<double> refined = problem.density_location(ce.final_params);
  const double refined_score = performance(refined, truth, opt.mode, opt.cost_model);
  if (refined_score > out.score) {
    out.x_hat = refined;
    out.score = refined_score;
    out.refined = true;
  }

  out.y_hat = predicted_loads(out.x_hat, truth, opt.mode, opt.cost_model);
  out.residual = residual_norm(truth.y, out.y_hat);
  out.iterations = ce.iterations;
  out.stopped_by_threshold = ce.stopped_by_threshold;
  out.trace = std::move(ce.trace);
  out.diagnostics = identifiability_report(truth);
  if (problem.clamp_events() > 0)
    out.warnings.push_back("rate update clamped " + std::to_string(problem.clamp_events()) +
                           " component-iterations");
  return out;
}

namespace {

class TotalCostProblem final : public CeProblem {
 public:
  TotalCostProblem(const GroundTruth& truth, const Scenario& s)
      : truth_(truth), s_(s), n_(static_cast<std::size_t>(truth.net.n)) {}

  std::size_t dim() const override { return n_; }

  std::vector<double> initial_params() const override {
    return std::vector<double>(n_, s_.prior_rate);
  }

  void sample(std::span<const double> params, rng::Rng& gen,
              std::span<double> out) const override {
    for (std::size_t j = 0; j < n_; ++j) {
      if (s_.family == FamilyKind::kTruncExp)
        out[j] = gen.truncated_exponential(params[j], s_.family_bound);
      else
        out[j] = gen.exponential(params[j]);
    }
  }

  double score(std::span<const double> candidate) const override {
    return -total_cost(candidate);
  }

  double total_cost(std::span<const double> x) const {
    OdVector xv(x.begin(), x.end());
    const LoadVector y = arc_loads(truth_.a, xv);
    const CostVector c = s_.cost_model.apply(y);
    double total = 0.0;
    for (double v : c) total += std::abs(v);
    return total;
  }

  std::vector<double> update(const SampleMatrix& samples,
                             std::span<const std::uint8_t> elite,
                             std::span<const double> old_params) const override {
    if (s_.family == FamilyKind::kTruncExp) {
      std::vector<double> bounds(n_, s_.family_bound);
      return update_trunc_exp(samples, elite, bounds).rates;
    }
    (void)old_params;
    return update_exp(samples, elite).rates;
  }

 private:
  const GroundTruth& truth_;
  const Scenario& s_;
  std::size_t n_;
};

}  // namespace

CostOptResult minimize_total_cost(const Scenario& s, std::uint64_t seed) {
  validate(s);
  if (!s.cost_model.depends_on_load())
    throw ConfigError(
        "minimize_total_cost: cost model does not depend on load, so every "
        "demand vector induces the same total cost");
  const GroundTruth truth = simulate(s, seed);
  TotalCostProblem problem(truth, s);
  CeResult ce = ce_optimize(problem, s.ce);
  CostOptResult out;
  out.x_best = std::move(ce.best);
  out.total_cost = problem.total_cost(out.x_best);
  out.trace = std::move(ce.trace);
  out.iterations = ce.iterations;
  return out;
}

}  // namespace odce
