#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace odce {

// Per-arc travel cost, indexed by arc_index. Length p*p - p.
using CostVector = std::vector<double>;
// Per-arc traffic volume, same indexing.
using LoadVector = std::vector<double>;
// Per-OD-couple demand volume. Couples share the arc numbering: couple
// (i, j) sits at the same index as arc (i, j).
using OdVector = std::vector<double>;

// Complete directed graph on p nodes: one arc for every ordered pair of
// distinct nodes, n = p*p - p arcs in total.
struct Network {
  int p = 0;
  int n = 0;
  explicit Network(int nodes);
};

// Canonical arc numbering used everywhere in this codebase (vectors, matrix
// rows and columns, CSV row order): row-major over ordered pairs with the
// diagonal skipped,
//   arc_index(i, j) = i*(p-1) + (j < i ? j : j-1).
int arc_index(const Network& net, int tail, int head);

// Inverse of arc_index.
std::pair<int, int> arc_endpoints(const Network& net, int arc);

// All-pairs shortest paths. `dist` and `via` are p*p row-major; via holds
// the intermediate node splitting the path, or -1 when the direct arc is
// optimal. Ties during relaxation keep the incumbent route, so the table
// (and every path reconstructed from it) is deterministic.
struct PathTable {
  int p = 0;
  std::vector<double> dist;
  std::vector<int> via;
  double at(int i, int k) const { return dist[static_cast<std::size_t>(i) * p + k]; }
  int via_at(int i, int k) const { return via[static_cast<std::size_t>(i) * p + k]; }
};

// Requires strictly positive finite costs of length net.n.
PathTable shortest_paths(const Network& net, const CostVector& costs);

// Node sequence of the unique stored path from origin to destination
// (inclusive). Throws if the via table is internally inconsistent.
std::vector<int> reconstruct_path(const PathTable& table, int origin, int destination);

// Binary assignment matrix: entry (arc, couple) is 1 when the couple's
// shortest path traverses the arc. Rows and columns both use arc_index.
struct RoutingMatrix {
  int n = 0;
  std::vector<std::uint8_t> a;  // n*n row-major
  std::uint8_t at(int arc, int couple) const {
    return a[static_cast<std::size_t>(arc) * n + couple];
  }
};

RoutingMatrix routing_matrix(const Network& net, const PathTable& table);

// y = A x: arc loads induced by routing every couple's demand along its
// shortest path.
LoadVector arc_loads(const RoutingMatrix& a, const OdVector& x);

// The observation system y = A x restricted to arcs that carry at least one
// couple. rank is computed by singular value decomposition with relative
// tolerance 1e-9; nullity = cols - rank counts unidentifiable directions.
struct ReducedSystem {
  std::vector<int> rows;        // arc indices kept, ascending
  std::vector<std::uint8_t> a;  // rows.size() x cols, row-major
  std::vector<double> loads;    // observed load for each kept row
  int cols = 0;
  int rank = 0;
  int nullity = 0;
};

ReducedSystem reduce_system(const RoutingMatrix& a, const LoadVector& y);

}  // namespace odce
