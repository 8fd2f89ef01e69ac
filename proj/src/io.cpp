#include "odce/io.hpp"

#include <charconv>
#include <fstream>

#include "odce/errors.hpp"

namespace odce::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return f;
}

void finish(std::ofstream& f, const std::filesystem::path& path) {
  f.flush();
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  double v = 0.0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw IoError("malformed number '" + s + "' in " + path.string());
  return v;
}

long parse_long(const std::string& s, const std::filesystem::path& path) {
  long v = 0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw IoError("malformed integer '" + s + "' in " + path.string());
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_arc_csv(const std::filesystem::path& path, const Network& net,
                   std::span<const double> values) {
  if (static_cast<int>(values.size()) != net.n)
    throw std::invalid_argument("write_arc_csv: vector has wrong length");
  auto f = open_out(path);
  f << "tail,head,value\n";
  for (int arc = 0; arc < net.n; ++arc) {
    const auto [tail, head] = arc_endpoints(net, arc);
    f << tail << ',' << head << ',' << format_double(values[arc]) << '\n';
  }
  finish(f, path);
}

std::vector<double> read_arc_csv(const std::filesystem::path& path, const Network& net) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || split_csv(line) != std::vector<std::string>{"tail", "head", "value"})
    throw IoError("bad header in " + path.string());
  std::vector<double> values(net.n, 0.0);
  for (int arc = 0; arc < net.n; ++arc) {
    if (!std::getline(f, line)) throw IoError("truncated file: " + path.string());
    const auto cells = split_csv(line);
    if (cells.size() != 3) throw IoError("bad row in " + path.string());
    const auto [tail, head] = arc_endpoints(net, arc);
    if (parse_long(cells[0], path) != tail || parse_long(cells[1], path) != head)
      throw IoError("rows out of arc order in " + path.string());
    values[arc] = parse_double(cells[2], path);
  }
  while (std::getline(f, line))
    if (!line.empty()) throw IoError("trailing rows in " + path.string());
  return values;
}

void write_trace_csv(const std::filesystem::path& path, const CeTrace& trace) {
  auto f = open_out(path);
  f << "iter,gamma_hat,best_score\n";
  for (const auto& rec : trace)
    f << rec.iter << ',' << format_double(rec.gamma_hat) << ','
      << format_double(rec.best_score) << '\n';
  finish(f, path);
}

void write_filter_csv(const std::filesystem::path& path, const std::vector<FilterRow>& rows) {
  auto f = open_out(path);
  f << "step,arc,mean_Y,q05_Y,q95_Y,mean_C\n";
  for (const auto& r : rows)
    f << r.step << ',' << r.arc << ',' << format_double(r.mean_y) << ','
      << format_double(r.q05_y) << ',' << format_double(r.q95_y) << ','
      << format_double(r.mean_c) << '\n';
  finish(f, path);
}

void write_ess_csv(const std::filesystem::path& path, const std::vector<EssRow>& rows) {
  auto f = open_out(path);
  f << "step,ess,resampled\n";
  for (const auto& r : rows)
    f << r.step << ',' << format_double(r.ess) << ','
      << (r.resampled ? "true" : "false") << '\n';
  finish(f, path);
}

void write_routing_json(const std::filesystem::path& path, const Network& net,
                        const PathTable& table, const RoutingMatrix& a) {
  nlohmann::json j;
  j["p"] = net.p;
  j["n"] = net.n;
  j["dist"] = table.dist;
  j["via"] = table.via;
  nlohmann::json rows = nlohmann::json::array();
  for (int arc = 0; arc < a.n; ++arc) {
    nlohmann::json row = nlohmann::json::array();
    for (int couple = 0; couple < a.n; ++couple) row.push_back(static_cast<int>(a.at(arc, couple)));
    rows.push_back(std::move(row));
  }
  j["a"] = std::move(rows);
  write_json(path, j);
}

RoutingMatrix read_routing_json(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  RoutingMatrix m;
  m.n = j.at("n").get<int>();
  if (m.n <= 0) throw IoError("bad arc count in " + path.string());
  const auto& rows = j.at("a");
  if (static_cast<int>(rows.size()) != m.n) throw IoError("bad matrix shape in " + path.string());
  m.a.reserve(static_cast<std::size_t>(m.n) * m.n);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != m.n) throw IoError("bad matrix shape in " + path.string());
    for (const auto& cell : row) {
      const int v = cell.get<int>();
      if (v != 0 && v != 1) throw IoError("non-binary matrix entry in " + path.string());
      m.a.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return m;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  finish(f, path);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  auto f = open_in(path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace odce::io
