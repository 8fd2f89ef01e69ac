#include "odce/pfilter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "odce/errors.hpp"
#include "odce/parallel.hpp"

namespace odce {

namespace {

constexpr std::uint64_t kTruthLane = 1000000007ull;
constexpr std::uint64_t kXiTag = 1000003ull;

std::vector<int> successor_arcs(const Network& net, int arc) {
  const auto [tail, head] = arc_endpoints(net, arc);
  (void)tail;
  std::vector<int> out;
  out.reserve(net.p - 1);
  for (int k = 0; k < net.p; ++k)
    if (k != head) out.push_back(arc_index(net, head, k));
  return out;
}

CostVector costs_for_loads(const DynamicsParams& dyn, const std::vector<std::int64_t>& y) {
  if (dyn.cost_model.kind == CostKind::kConstantRandom) return dyn.constant_costs;
  LoadVector loads(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) loads[i] = static_cast<double>(y[i]);
  return dyn.cost_model.apply(loads);
}

}  // namespace

void validate(const DynamicsParams& dyn, const TrafficState& state) {
  const int n = dyn.net.n;
  if (static_cast<int>(dyn.length.size()) != n)
    throw ConfigError("dynamics: length vector must have one entry per arc");
  if (static_cast<int>(dyn.capacity.size()) != n)
    throw ConfigError("dynamics: capacity vector must have one entry per arc");
  if (!(dyn.beta >= 0.0) || !std::isfinite(dyn.beta))
    throw ConfigError("dynamics: beta must be nonnegative and finite");
  for (double l : dyn.length)
    if (!(l > 0.0) || l < dyn.beta)
      throw ConfigError("dynamics: arc lengths must be positive and at least beta");
  if (dyn.cost_model.kind == CostKind::kConstantRandom) {
    if (static_cast<int>(dyn.constant_costs.size()) != n)
      throw ConfigError("dynamics: constant costs must have one entry per arc");
    for (double c : dyn.constant_costs)
      if (!(c > 0.0)) throw ConfigError("dynamics: constant costs must be positive");
  } else {
    validate(dyn.cost_model);
  }
  if (static_cast<int>(state.y.size()) != n || static_cast<int>(state.c.size()) != n)
    throw ConfigError("dynamics: state vectors must have one entry per arc");
  for (int i = 0; i < n; ++i) {
    if (state.y[i] < 0) throw ConfigError("dynamics: negative occupancy");
    if (dyn.capacity[i] < state.y[i])
      throw ConfigError("dynamics: occupancy exceeds capacity");
  }
}

std::int64_t sending(const TrafficState& state, const DynamicsParams& dyn,
                     rng::Rng& gen, int arc) {
  if (arc < 0 || arc >= dyn.net.n) throw std::invalid_argument("sending: arc out of range");
  return gen.binomial(state.y[arc], dyn.beta / dyn.length[arc]);
}

std::vector<std::int64_t> draw_sends(const TrafficState& state, const DynamicsParams& dyn,
                                     rng::Rng& gen) {
  std::vector<std::int64_t> sends(dyn.net.n, 0);
  for (int arc = 0; arc < dyn.net.n; ++arc) sends[arc] = sending(state, dyn, gen, arc);
  return sends;
}

std::int64_t receiving(std::span<const std::int64_t> occupancy, const DynamicsParams& dyn,
                       std::span<const std::int64_t> first_guess_sends, int arc) {
  if (arc < 0 || arc >= dyn.net.n) throw std::invalid_argument("receiving: arc out of range");
  std::int64_t room = 0;
  for (int l : successor_arcs(dyn.net, arc))
    room += dyn.capacity[l] + first_guess_sends[l] - occupancy[l];
  return room;
}

TrafficState advance_with_sends(const TrafficState& state, const DynamicsParams& dyn,
                                std::span<const std::int64_t> sends) {
  const int n = dyn.net.n;
  if (static_cast<int>(sends.size()) != n)
    throw std::invalid_argument("advance_with_sends: sends vector has wrong length");

  std::vector<std::int64_t> flux(n, 0);
  for (int arc = 0; arc < n; ++arc) {
    const std::int64_t r = receiving(state.y, dyn, sends, arc);
    flux[arc] = std::min(sends[arc], r);
  }

  TrafficState next;
  next.y = state.y;
  // Free space is granted against start-of-step occupancy only, consumed in
  // ascending arc order, so no arc can ever be pushed past its capacity.
  std::vector<std::int64_t> room(n, 0);
  for (int l = 0; l < n; ++l) room[l] = dyn.capacity[l] - state.y[l];

  for (int arc = 0; arc < n; ++arc) {
    if (flux[arc] <= 0) continue;
    const auto succ = successor_arcs(dyn.net, arc);
    std::int64_t room_total = 0;
    for (int l : succ) room_total += room[l];
    const std::int64_t moved = std::min(flux[arc], room_total);
    if (moved <= 0) continue;

    // Proportional quotas with largest-remainder rounding; remainder ties
    // break toward the lower arc index.
    std::vector<std::int64_t> alloc(succ.size(), 0);
    std::vector<double> frac(succ.size(), 0.0);
    std::int64_t assigned = 0;
    for (std::size_t s = 0; s < succ.size(); ++s) {
      const double quota = static_cast<double>(moved) *
                           static_cast<double>(room[succ[s]]) /
                           static_cast<double>(room_total);
      alloc[s] = static_cast<std::int64_t>(std::floor(quota));
      if (alloc[s] > room[succ[s]]) alloc[s] = room[succ[s]];
      frac[s] = quota - static_cast<double>(alloc[s]);
      assigned += alloc[s];
    }
    std::vector<std::size_t> order(succ.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; assigned < moved && r < order.size(); ++r) {
      const std::size_t s = order[r];
      if (alloc[s] < room[succ[s]]) {
        ++alloc[s];
        ++assigned;
      }
    }
    // Numerical slack in the quotas cannot leave anything unassigned while
    // room remains, but guard anyway.
    for (std::size_t s = 0; assigned < moved && s < succ.size(); ++s) {
      const std::int64_t extra = std::min(moved - assigned, room[succ[s]] - alloc[s]);
      alloc[s] += extra;
      assigned += extra;
    }

    next.y[arc] -= assigned;
    for (std::size_t s = 0; s < succ.size(); ++s) {
      next.y[succ[s]] += alloc[s];
      room[succ[s]] -= alloc[s];
    }
  }

  next.c = costs_for_loads(dyn, next.y);
  return next;
}

TrafficState step(const TrafficState& state, const DynamicsParams& dyn, rng::Rng& gen) {
  const auto sends = draw_sends(state, dyn, gen);
  return advance_with_sends(state, dyn, sends);
}

std::vector<TrafficState> simulate_trajectory(const TrafficState& initial,
                                              const DynamicsParams& dyn, int steps,
                                              std::uint64_t seed) {
  validate(dyn, initial);
  if (steps < 0) throw ConfigError("simulate_trajectory: negative step count");
  std::vector<TrafficState> out;
  out.reserve(steps);
  TrafficState cur = initial;
  for (int t = 1; t <= steps; ++t) {
    rng::Rng gen(seed, 2ull * static_cast<std::uint64_t>(t), kTruthLane);
    cur = step(cur, dyn, gen);
    out.push_back(cur);
  }
  return out;
}

std::uint64_t xi_stream_key(std::uint64_t seed, int step) {
  return rng::stream_key(seed, kXiTag, static_cast<std::uint64_t>(step));
}

OdVector observe_xi(const TrafficState& state, const DynamicsParams& dyn,
                    const XiBudget& budget, std::uint64_t stream_key) {
  const int n = dyn.net.n;
  GroundTruth truth{dyn.net, OdVector(n, 0.0), LoadVector(n, 0.0), state.c, {}};
  for (int i = 0; i < n; ++i) truth.y[i] = static_cast<double>(state.y[i]);
  truth.a = routing_matrix(dyn.net, shortest_paths(dyn.net, state.c));

  double mean_load = 0.0;
  for (double v : truth.y) mean_load += v;
  mean_load /= static_cast<double>(n);

  EstimateOptions opt;
  opt.family = FamilyKind::kExp;
  opt.initial_rate = 1.0 / std::max(mean_load, 1e-6);
  opt.mode = PerformanceMode::kStaticA;
  opt.ce.n_samples = budget.n_samples;
  opt.ce.max_iters = budget.max_iters;
  opt.ce.seed = stream_key;
  return estimate(truth, opt).x_hat;
}

ParticleEnsemble make_ensemble(const TrafficState& initial, std::size_t n_particles,
                               WeightMode mode, int n_arcs) {
  if (n_particles == 0) throw ConfigError("filter: need at least one particle");
  ParticleEnsemble e;
  e.mode = mode;
  e.states.assign(n_particles, initial);
  e.weights.assign(n_particles, 1.0 / static_cast<double>(n_particles));
  if (mode == WeightMode::kPerComponent)
    e.component_weights.assign(n_particles * static_cast<std::size_t>(n_arcs),
                               1.0 / static_cast<double>(n_particles));
  return e;
}

WeightUpdateOutcome weight_update(ParticleEnsemble& ensemble,
                                  std::span<const double> x_obs,
                                  const std::vector<OdVector>& predictions, double sigma) {
  const std::size_t m = ensemble.size();
  if (predictions.size() != m)
    throw std::invalid_argument("weight_update: one prediction per particle required");
  if (!(sigma > 0.0)) throw std::invalid_argument("weight_update: sigma must be positive");
  const std::size_t n = x_obs.size();
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  WeightUpdateOutcome outcome;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (predictions[i].size() != n)
      throw std::invalid_argument("weight_update: prediction has wrong length");
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x_obs[j] - predictions[i][j];
      ss += d * d;
    }
    ensemble.weights[i] *= std::exp(-ss * inv2s2);
    total += ensemble.weights[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(ensemble.weights.begin(), ensemble.weights.end(),
              1.0 / static_cast<double>(m));
    outcome.underflow_reset = true;
  } else {
    for (double& w : ensemble.weights) w /= total;
  }

  if (ensemble.mode == WeightMode::kPerComponent) {
    for (std::size_t j = 0; j < n; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = x_obs[j] - predictions[i][j];
        double& w = ensemble.component_weights[i * n + j];
        w *= std::exp(-d * d * inv2s2);
        col += w;
      }
      if (!(col > 0.0) || !std::isfinite(col)) {
        for (std::size_t i = 0; i < m; ++i)
          ensemble.component_weights[i * n + j] = 1.0 / static_cast<double>(m);
        outcome.underflow_reset = true;
      } else {
        for (std::size_t i = 0; i < m; ++i) ensemble.component_weights[i * n + j] /= col;
      }
    }
  }
  return outcome;
}

double ess(std::span<const double> weights) {
  if (weights.empty()) throw std::invalid_argument("ess: no weights");
  double sum = 0.0, sq = 0.0;
  for (double w : weights) {
    sum += w;
    sq += w * w;
  }
  if (!(sq > 0.0)) throw std::invalid_argument("ess: all weights are zero");
  return sum * sum / sq;
}

void resample(ParticleEnsemble& ensemble, rng::Rng& gen) {
  const std::size_t m = ensemble.size();
  const double u0 = gen.uniform01();
  std::vector<std::size_t> picks(m, 0);
  double cum = ensemble.weights[0];
  std::size_t idx = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double u = (u0 + static_cast<double>(k)) / static_cast<double>(m);
    while (u > cum && idx + 1 < m) cum += ensemble.weights[++idx];
    picks[k] = idx;
  }
  std::vector<TrafficState> states;
  states.reserve(m);
  for (std::size_t k = 0; k < m; ++k) states.push_back(ensemble.states[picks[k]]);
  ensemble.states = std::move(states);
  std::fill(ensemble.weights.begin(), ensemble.weights.end(), 1.0 / static_cast<double>(m));
  if (ensemble.mode == WeightMode::kPerComponent)
    std::fill(ensemble.component_weights.begin(), ensemble.component_weights.end(),
              1.0 / static_cast<double>(m));
}

void validate(const FilterConfig& cfg) {
  if (cfg.n_particles == 0) throw ConfigError("filter: need at least one particle");
  if (cfg.steps < 1) throw ConfigError("filter: need at least one step");
  if (cfg.steps > 100000) throw ConfigError("filter: step count too large");
  if (cfg.sigma < 0.0 || !std::isfinite(cfg.sigma))
    throw ConfigError("filter: sigma must be nonnegative and finite");
  if (!(cfg.resample_threshold > 0.0 && cfg.resample_threshold <= 1.0))
    throw ConfigError("filter: resample threshold must lie in (0, 1]");
  if (cfg.workers < 1) throw ConfigError("filter: worker count must be positive");
  if (cfg.xi.max_iters < 1) throw ConfigError("filter: observation budget needs iterations");
}

namespace {

double weighted_quantile(std::vector<std::pair<double, double>>& value_weight, double q) {
  std::sort(value_weight.begin(), value_weight.end());
  double cum = 0.0;
  for (const auto& [v, w] : value_weight) {
    cum += w;
    if (cum >= q) return v;
  }
  return value_weight.back().first;
}

}  // namespace

FilterOutput filter_run(const std::vector<TrafficState>& truth_trajectory,
                        const TrafficState& initial, const DynamicsParams& dyn,
                        const FilterConfig& cfg) {
  validate(cfg);
  validate(dyn, initial);
  if (static_cast<int>(truth_trajectory.size()) < cfg.steps)
    throw std::invalid_argument("filter_run: trajectory shorter than the step count");

  const int n = dyn.net.n;
  const std::size_t m = cfg.n_particles;
  ParticleEnsemble ensemble = make_ensemble(initial, m, cfg.weight_mode, n);
  FilterOutput out;

  for (int t = 1; t <= cfg.steps; ++t) {
    parallel_for(m, cfg.workers, [&](std::size_t i) {
      rng::Rng gen(cfg.seed, 2ull * static_cast<std::uint64_t>(t), i);
      ensemble.states[i] = step(ensemble.states[i], dyn, gen);
    });

    const std::uint64_t xi_key = xi_stream_key(cfg.seed, t);
    const TrafficState& truth_state = truth_trajectory[t - 1];
    const OdVector x_obs = observe_xi(truth_state, dyn, cfg.xi, xi_key);

    // The observation operator is deterministic in (state, key), so
    // duplicate particles share one evaluation.
    std::map<std::vector<std::int64_t>, std::size_t> unique;
    std::vector<std::size_t> which(m, 0);
    std::vector<const TrafficState*> reps;
    for (std::size_t i = 0; i < m; ++i) {
      auto [it, inserted] = unique.try_emplace(ensemble.states[i].y, reps.size());
      if (inserted) reps.push_back(&ensemble.states[i]);
      which[i] = it->second;
    }
    std::vector<OdVector> rep_predictions(reps.size());
    parallel_for(reps.size(), cfg.workers, [&](std::size_t u) {
      rep_predictions[u] = observe_xi(*reps[u], dyn, cfg.xi, xi_key);
    });
    std::vector<OdVector> predictions(m);
    for (std::size_t i = 0; i < m; ++i) predictions[i] = rep_predictions[which[i]];

    double sigma = cfg.sigma;
    if (sigma == 0.0) {
      double norm = 0.0;
      for (double v : x_obs) norm += v * v;
      sigma = std::max(0.1 * std::sqrt(norm), 1e-3);
    }
    if (weight_update(ensemble, x_obs, predictions, sigma).underflow_reset)
      out.warnings.push_back("step " + std::to_string(t) +
                             ": weights underflowed, reset to uniform");

    for (int arc = 0; arc < n; ++arc) {
      FilterRow row;
      row.step = t;
      row.arc = arc;
      std::vector<std::pair<double, double>> vw(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double w = ensemble.mode == WeightMode::kPerComponent
                             ? ensemble.component_weights[i * static_cast<std::size_t>(n) + arc]
                             : ensemble.weights[i];
        const double y = static_cast<double>(ensemble.states[i].y[arc]);
        row.mean_y += w * y;
        row.mean_c += w * ensemble.states[i].c[arc];
        vw[i] = {y, w};
      }
      row.q05_y = weighted_quantile(vw, 0.05);
      row.q95_y = weighted_quantile(vw, 0.95);
      out.rows.push_back(row);
    }

    double e = ess(ensemble.weights);
    bool resampled = false;
    if (cfg.resample_enabled && e < cfg.resample_threshold * static_cast<double>(m)) {
      rng::Rng gen(cfg.seed, 2ull * static_cast<std::uint64_t>(t) + 1ull, 0);
      resample(ensemble, gen);
      resampled = true;
      e = ess(ensemble.weights);
    }
    out.ess_rows.push_back({t, e, resampled});
  }
  return out;
}

}  // namespace odce
