#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "odce/ce.hpp"
#include "odce/graph.hpp"
#include "odce/pfilter.hpp"

namespace odce::io {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// Per-arc vector as CSV rows `tail,head,value`, one row per arc in
// arc_index order.
void write_arc_csv(const std::filesystem::path& path, const Network& net,
                   std::span<const double> values);
std::vector<double> read_arc_csv(const std::filesystem::path& path, const Network& net);

// Optimizer trace: `iter,gamma_hat,best_score`.
void write_trace_csv(const std::filesystem::path& path, const CeTrace& trace);

// Filter posterior summaries: `step,arc,mean_Y,q05_Y,q95_Y,mean_C`.
void write_filter_csv(const std::filesystem::path& path, const std::vector<FilterRow>& rows);

// Degeneracy trace: `step,ess,resampled`.
void write_ess_csv(const std::filesystem::path& path, const std::vector<EssRow>& rows);

// Shortest-path tables and assignment matrix, round-trippable.
void write_routing_json(const std::filesystem::path& path, const Network& net,
                        const PathTable& table, const RoutingMatrix& a);
RoutingMatrix read_routing_json(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace odce::io
