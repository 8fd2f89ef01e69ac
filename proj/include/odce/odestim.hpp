#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odce/ce.hpp"
#include "odce/graph.hpp"

namespace odce {

// How arc cost responds to arc load. kConstantRandom draws each cost once
// from Uniform[a, b) and never changes it; kAffine is a + b*y; kPower is
// a + b*y^gamma.
enum class CostKind { kConstantRandom, kAffine, kPower };

struct CostModel {
  CostKind kind = CostKind::kAffine;
  double a = 1.0;
  double b = 1.0;
  double gamma = 1.0;

  bool depends_on_load() const {
    return kind != CostKind::kConstantRandom && b > 0.0;
  }
  // Per-arc costs for the given loads; invalid for kConstantRandom, whose
  // costs are drawn, not computed.
  CostVector apply(std::span<const double> loads) const;
};

void validate(const CostModel& m);

enum class FamilyKind { kExp, kTruncExp };

enum class ConstraintMode { kNone, kFixedZeros, kFixedK };

// kFixedZeros pins every couple with mask[i] == 0 to exactly zero demand.
// kFixedK estimates demands of the form X_i = Z_i * E_i where Z has exactly
// k_active ones; the couple set itself is part of the search.
struct Constraint {
  ConstraintMode mode = ConstraintMode::kNone;
  std::vector<std::uint8_t> mask;  // kFixedZeros only; 1 = free, 0 = pinned
  std::size_t k_active = 0;        // kFixedK only
};

// kStaticA scores a candidate against the truth routing; kCoupled re-routes
// once on the costs the candidate itself would induce before comparing.
enum class PerformanceMode { kStaticA, kCoupled };

struct Scenario {
  int p = 5;
  CostModel cost_model;
  double prior_rate = 1.0;  // demand prior: iid exponential at this rate
  int fixed_point_rounds = 3;
  FamilyKind family = FamilyKind::kExp;
  double family_bound = 50.0;  // per-couple cap for the truncated family
  Constraint constraint;
  PerformanceMode mode = PerformanceMode::kStaticA;
  CeConfig ce;
};

void validate(const Scenario& s);

struct GroundTruth {
  Network net;
  OdVector x0;      // demands the loads were generated from
  LoadVector y;     // observed arc loads, y = A x0
  CostVector c;     // arc costs consistent with y
  RoutingMatrix a;  // routing under c
};

// Draws demands from the prior and runs fixed_point_rounds of
// route / load / re-cost alternation, finishing with a routing pass and a
// final load computation, so y = A x0 holds exactly for the returned A.
GroundTruth simulate(const Scenario& s, std::uint64_t seed);
GroundTruth simulate_from_x0(const Scenario& s, const OdVector& x0, std::uint64_t seed);

// S(x) = 1 / max(||y_obs - y_hat||_2, 1e-12). cost_model is only touched in
// coupled mode, where y_hat comes from re-routing on the candidate's costs.
double performance(std::span<const double> x_hat, const GroundTruth& truth,
                   PerformanceMode mode, const CostModel& cost_model);

struct RankReport {
  int used_arcs = 0;
  int rank = 0;
  int nullity = 0;
  bool square = false;
  bool identifiable = false;  // nullity == 0
};

RankReport identifiability_report(const GroundTruth& truth);

struct EstimateOptions {
  FamilyKind family = FamilyKind::kExp;
  double family_bound = 50.0;
  double initial_rate = 1.0;
  Constraint constraint;
  PerformanceMode mode = PerformanceMode::kStaticA;
  CostModel cost_model;  // used by coupled mode only
  CeConfig ce;
};

struct EstimationResult {
  OdVector x_hat;
  LoadVector y_hat;
  double score = 0.0;     // S(x_hat)
  double residual = 0.0;  // ||y - y_hat||_2
  int iterations = 0;
  bool stopped_by_threshold = false;
  bool refined = false;  // final-density point estimate beat every sample
  CeTrace trace;
  RankReport diagnostics;
  std::vector<std::string> warnings;
};

// Cross-entropy search for demands explaining truth.y. Candidates are
// demand vectors drawn from the chosen family under the constraint; the
// best-scoring candidate ever seen is returned, after also scoring the
// final sampling density's own location as one extra deterministic
// candidate.
EstimationResult estimate(const GroundTruth& truth, const EstimateOptions& opt);

struct CostOptResult {
  OdVector x_best;
  double total_cost = 0.0;  // sum of |c_i| at x_best
  CeTrace trace;
  int iterations = 0;
};

// CE minimization of the total induced cost over demand vectors, on the
// network the scenario describes. Requires a load-dependent cost model;
// otherwise every demand vector scores the same and the search is vacuous.
CostOptResult minimize_total_cost(const Scenario& s, std::uint64_t seed);

}  // namespace odce
