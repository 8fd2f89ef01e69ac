#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "odce/graph.hpp"
#include "odce/odestim.hpp"
#include "odce/rng.hpp"

namespace odce {

// Packet counts per arc plus the travel costs they induce.
struct TrafficState {
  std::vector<std::int64_t> y;
  CostVector c;
};

// Fixed physical description of the rolling network.
struct DynamicsParams {
  Network net{2};
  double beta = 1.0;                    // free-flow pace; success prob on arc i is beta/length[i]
  std::vector<double> length;           // arc lengths, all >= beta
  std::vector<std::int64_t> capacity;   // hard per-arc occupancy limits
  CostModel cost_model;                 // refreshes costs from loads after each step
  CostVector constant_costs;            // used instead when the model is constant-random
};

void validate(const DynamicsParams& dyn, const TrafficState& state);

// Number of packets ready to leave the arc: Binomial(y, beta/length).
std::int64_t sending(const TrafficState& state, const DynamicsParams& dyn,
                     rng::Rng& gen, int arc);

// Draws sending counts for every arc in index order from one stream.
std::vector<std::int64_t> draw_sends(const TrafficState& state, const DynamicsParams& dyn,
                                     rng::Rng& gen);

// Space the arcs downstream of `arc` could absorb, counting the capacity
// they would free if their own first-guess sends all left:
//   R_i = sum over successors l of (capacity_l + first_guess_sends_l - y_l).
std::int64_t receiving(std::span<const std::int64_t> occupancy, const DynamicsParams& dyn,
                       std::span<const std::int64_t> first_guess_sends, int arc);

// One deterministic transition given the sending draws: each arc moves
// min(sends, receiving) packets, placed on downstream arcs proportionally
// to the space that is actually still free, in ascending arc order, with
// largest-remainder rounding. Whatever finds no room stays put. Total
// occupancy is conserved exactly and no capacity is ever exceeded.
TrafficState advance_with_sends(const TrafficState& state, const DynamicsParams& dyn,
                                std::span<const std::int64_t> sends);

// draw_sends + advance_with_sends.
TrafficState step(const TrafficState& state, const DynamicsParams& dyn, rng::Rng& gen);

// States after steps 1..steps, truth lane of the given seed.
std::vector<TrafficState> simulate_trajectory(const TrafficState& initial,
                                              const DynamicsParams& dyn, int steps,
                                              std::uint64_t seed);

// Sampling budget for the demand-estimation observation operator.
struct XiBudget {
  std::size_t n_samples = 0;  // 0 keeps the estimator default
  int max_iters = 30;
};

// Stream key shared by every evaluation of the observation operator at one
// time step, so truth and particles see the same operator.
std::uint64_t xi_stream_key(std::uint64_t seed, int step);

// The observation operator: runs the demand estimator against the state's
// own loads and routing and returns the estimated demand vector.
OdVector observe_xi(const TrafficState& state, const DynamicsParams& dyn,
                    const XiBudget& budget, std::uint64_t stream_key);

enum class WeightMode { kScalar, kPerComponent };

struct ParticleEnsemble {
  std::vector<TrafficState> states;
  std::vector<double> weights;            // normalized, one per particle
  std::vector<double> component_weights;  // per-component mode: M x n, particle-major
  WeightMode mode = WeightMode::kScalar;
  std::size_t size() const { return states.size(); }
};

ParticleEnsemble make_ensemble(const TrafficState& initial, std::size_t n_particles,
                               WeightMode mode, int n_arcs);

struct WeightUpdateOutcome {
  bool underflow_reset = false;
};

// Gaussian-kernel reweighting against the observed demand estimate:
// w_i gets exp(-||x_obs - prediction_i||^2 / (2 sigma^2)). Per-component
// mode additionally keeps a weight per (particle, arc) driven by the
// component-wise kernel. All-zero updates reset to uniform.
WeightUpdateOutcome weight_update(ParticleEnsemble& ensemble,
                                  std::span<const double> x_obs,
                                  const std::vector<OdVector>& predictions, double sigma);

// Effective sample size (sum w)^2 / sum w^2, in [1, M].
double ess(std::span<const double> weights);

// Systematic resampling; leaves the weights uniform.
void resample(ParticleEnsemble& ensemble, rng::Rng& gen);

struct FilterConfig {
  std::size_t n_particles = 100;
  int steps = 20;
  double sigma = 0.0;              // 0: per-step default 0.1 * ||x_obs||, floor 1e-3
  double resample_threshold = 0.5; // fraction of M below which resampling fires
  bool resample_enabled = true;
  WeightMode weight_mode = WeightMode::kScalar;
  XiBudget xi;
  std::uint64_t seed = 0;
  int workers = 1;
};

void validate(const FilterConfig& cfg);

struct FilterRow {
  int step = 0;
  int arc = 0;
  double mean_y = 0.0;
  double q05_y = 0.0;
  double q95_y = 0.0;
  double mean_c = 0.0;
};

struct EssRow {
  int step = 0;
  double ess = 0.0;       // end of step, after any resampling
  bool resampled = false;
};

struct FilterOutput {
  std::vector<FilterRow> rows;
  std::vector<EssRow> ess_rows;
  std::vector<std::string> warnings;
};

// Bootstrap particle filter along the given truth trajectory. Posterior
// summaries are recorded after reweighting and before any resampling.
FilterOutput filter_run(const std::vector<TrafficState>& truth_trajectory,
                        const TrafficState& initial, const DynamicsParams& dyn,
                        const FilterConfig& cfg);

}  // namespace odce
