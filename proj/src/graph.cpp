#include "odce/graph.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace odce {

Network::Network(int nodes) : p(nodes), n(nodes * nodes - nodes) {
  if (nodes < 2) throw std::invalid_argument("Network: need at least 2 nodes");
}

int arc_index(const Network& net, int tail, int head) {
  if (tail < 0 || tail >= net.p || head < 0 || head >= net.p)
    throw std::invalid_argument("arc_index: node out of range");
  if (tail == head) throw std::invalid_argument("arc_index: self-loop");
  return tail * (net.p - 1) + (head < tail ? head : head - 1);
}

std::pair<int, int> arc_endpoints(const Network& net, int arc) {
  if (arc < 0 || arc >= net.n) throw std::invalid_argument("arc_endpoints: arc out of range");
  int tail = arc / (net.p - 1);
  int rem = arc % (net.p - 1);
  int head = rem < tail ? rem : rem + 1;
  return {tail, head};
}

PathTable shortest_paths(const Network& net, const CostVector& costs) {
  if (static_cast<int>(costs.size()) != net.n)
    throw std::invalid_argument("shortest_paths: cost vector has wrong length");
  for (double c : costs)
    if (!(c > 0.0) || !std::isfinite(c))
      throw std::invalid_argument("shortest_paths: costs must be positive and finite");

  const int p = net.p;
  PathTable t;
  t.p = p;
  t.dist.assign(static_cast<std::size_t>(p) * p, 0.0);
  t.via.assign(static_cast<std::size_t>(p) * p, -1);
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < p; ++k)
      if (i != k) t.dist[static_cast<std::size_t>(i) * p + k] = costs[arc_index(net, i, k)];

  // Floyd-Warshall. Only strict improvements replace the stored route, so
  // equal-cost alternatives never displace the incumbent.
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) {
      if (i == j) continue;
      const double dij = t.dist[static_cast<std::size_t>(i) * p + j];
      for (int k = 0; k < p; ++k) {
        if (k == i || k == j) continue;
        const double cand = dij + t.dist[static_cast<std::size_t>(j) * p + k];
        if (cand < t.dist[static_cast<std::size_t>(i) * p + k]) {
          t.dist[static_cast<std::size_t>(i) * p + k] = cand;
          t.via[static_cast<std::size_t>(i) * p + k] = j;
        }
      }
    }

  // Re-sum each stored path left to right so that dist equals the plain
  // ordered sum of its arc costs, not a rearrangement of it. The splits
  // introduced above accumulate in tree order, which can differ from the
  // sequential sum in the last few ulps.
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < p; ++k) {
      if (i == k) continue;
      auto nodes = reconstruct_path(t, i, k);
      double s = 0.0;
      for (std::size_t step = 0; step + 1 < nodes.size(); ++step)
        s += costs[arc_index(net, nodes[step], nodes[step + 1])];
      t.dist[static_cast<std::size_t>(i) * p + k] = s;
    }
  return t;
}

namespace {

void expand(const PathTable& t, int i, int k, std::vector<int>& out,
            std::vector<std::uint8_t>& on_stack, int p, int depth) {
  if (depth > p * p)
    throw std::runtime_error("reconstruct_path: via table is cyclic");
  const int j = t.via_at(i, k);
  if (j < 0) {
    out.push_back(k);
    return;
  }
  if (j >= p || j == i || j == k)
    throw std::runtime_error("reconstruct_path: via table is inconsistent");
  const std::size_t cell = static_cast<std::size_t>(i) * p + k;
  if (on_stack[cell]) throw std::runtime_error("reconstruct_path: via table is cyclic");
  on_stack[cell] = 1;
  expand(t, i, j, out, on_stack, p, depth + 1);
  expand(t, j, k, out, on_stack, p, depth + 1);
  on_stack[cell] = 0;
}

}  // namespace

std::vector<int> reconstruct_path(const PathTable& t, int origin, int destination) {
  const int p = t.p;
  if (origin < 0 || origin >= p || destination < 0 || destination >= p)
    throw std::invalid_argument("reconstruct_path: node out of range");
  if (origin == destination)
    throw std::invalid_argument("reconstruct_path: origin equals destination");
  std::vector<int> nodes{origin};
  std::vector<std::uint8_t> on_stack(static_cast<std::size_t>(p) * p, 0);
  expand(t, origin, destination, nodes, on_stack, p, 0);
  if (nodes.size() > static_cast<std::size_t>(p))
    throw std::runtime_error("reconstruct_path: path revisits a node");
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t b = a + 1; b < nodes.size(); ++b)
      if (nodes[a] == nodes[b])
        throw std::runtime_error("reconstruct_path: path revisits a node");
  return nodes;
}

RoutingMatrix routing_matrix(const Network& net, const PathTable& t) {
  if (t.p != net.p) throw std::invalid_argument("routing_matrix: table size mismatch");
  RoutingMatrix m;
  m.n = net.n;
  m.a.assign(static_cast<std::size_t>(net.n) * net.n, 0);
  for (int i = 0; i < net.p; ++i)
    for (int k = 0; k < net.p; ++k) {
      if (i == k) continue;
      const int couple = arc_index(net, i, k);
      auto nodes = reconstruct_path(t, i, k);
      for (std::size_t step = 0; step + 1 < nodes.size(); ++step) {
        const int arc = arc_index(net, nodes[step], nodes[step + 1]);
        m.a[static_cast<std::size_t>(arc) * net.n + couple] = 1;
      }
    }
  return m;
}

LoadVector arc_loads(const RoutingMatrix& a, const OdVector& x) {
  if (static_cast<int>(x.size()) != a.n)
    throw std::invalid_argument("arc_loads: demand vector has wrong length");
  LoadVector y(a.n, 0.0);
  for (int arc = 0; arc < a.n; ++arc) {
    double s = 0.0;
    const std::uint8_t* row = &a.a[static_cast<std::size_t>(arc) * a.n];
    for (int couple = 0; couple < a.n; ++couple)
      if (row[couple]) s += x[couple];
    y[arc] = s;
  }
  return y;
}

ReducedSystem reduce_system(const RoutingMatrix& a, const LoadVector& y) {
  if (static_cast<int>(y.size()) != a.n)
    throw std::invalid_argument("reduce_system: load vector has wrong length");
  ReducedSystem r;
  r.cols = a.n;
  for (int arc = 0; arc < a.n; ++arc) {
    const std::uint8_t* row = &a.a[static_cast<std::size_t>(arc) * a.n];
    bool any = false;
    for (int couple = 0; couple < a.n; ++couple)
      if (row[couple]) { any = true; break; }
    if (!any) continue;
    r.rows.push_back(arc);
    r.a.insert(r.a.end(), row, row + a.n);
    r.loads.push_back(y[arc]);
  }
  const int m = static_cast<int>(r.rows.size());
  if (m == 0) {
    r.rank = 0;
    r.nullity = r.cols;
    return r;
  }
  Eigen::MatrixXd mat(m, r.cols);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < r.cols; ++j)
      mat(i, j) = static_cast<double>(r.a[static_cast<std::size_t>(i) * r.cols + j]);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
  const auto& sv = svd.singularValues();
  const double tol = 1e-9 * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  r.rank = rank;
  r.nullity = r.cols - rank;
  return r;
}

}  // namespace odce
