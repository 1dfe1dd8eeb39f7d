#include "fdnet/netcore.hpp"

#include "fdnet/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace fdnet {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::string row_context(std::size_t line_no, std::string_view column) {
  return "row " + std::to_string(line_no) + ", column '" + std::string(column) + "'";
}

std::int64_t parse_int(std::string_view field, std::size_t line_no, std::string_view column) {
  std::int64_t value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::NonNumericField,
         "non-integer field '" + std::string(field) + "' at " + row_context(line_no, column));
  }
  return value;
}

double parse_real(std::string_view field, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::NonNumericField,
         "non-numeric field '" + std::string(field) + "' at " + row_context(line_no, column));
  }
  return value;
}

bool is_covariate_header(std::string_view name) {
  if (name.size() < 2 || name.front() != 'x') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::int64_t> sorted_unique(std::vector<std::int64_t> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

int dense_index(const std::vector<std::int64_t>& table, std::int64_t id) {
  return static_cast<int>(std::lower_bound(table.begin(), table.end(), id) - table.begin());
}

void check_unique_worker_period(const std::vector<Edge>& edges,
                                const std::vector<std::size_t>& line_numbers) {
  std::set<std::pair<int, int>> seen;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!seen.emplace(edges[e].worker, edges[e].period).second) {
      const std::string where = line_numbers.empty() ? "edge " + std::to_string(e)
                                                     : "row " + std::to_string(line_numbers[e]);
      fail(ErrorCode::DuplicateWorkerPeriod, "duplicate (worker, period) at " + where);
    }
  }
}

}  // namespace

NetworkData load_edge_list(std::istream& source, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(source, line)) {
    fail(ErrorCode::MissingColumn, "edge list: missing header row");
  }
  ++line_no;
  const auto header_views = split_fields(line);
  std::vector<std::string> header(header_views.begin(), header_views.end());

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::MissingColumn, "edge list: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_worker = column_of(schema.worker);
  const std::size_t c_firm = column_of(schema.firm);
  const std::size_t c_period = column_of(schema.period);
  const std::size_t c_y = column_of(schema.outcome);
  std::vector<std::size_t> c_x;
  if (schema.covariates.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (is_covariate_header(header[c])) c_x.push_back(c);
    }
  } else {
    for (const auto& name : schema.covariates) c_x.push_back(column_of(name));
  }

  struct RawRow {
    std::int64_t worker, firm, period;
    double y;
    std::vector<double> x;
  };
  std::vector<RawRow> rows;
  std::vector<std::size_t> line_numbers;
  while (std::getline(source, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::MalformedRow, "edge list: row " + std::to_string(line_no) + " has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    RawRow row;
    row.worker = parse_int(fields[c_worker], line_no, header[c_worker]);
    row.firm = parse_int(fields[c_firm], line_no, header[c_firm]);
    row.period = parse_int(fields[c_period], line_no, header[c_period]);
    row.y = parse_real(fields[c_y], line_no, header[c_y]);
    row.x.reserve(c_x.size());
    for (std::size_t c : c_x) row.x.push_back(parse_real(fields[c], line_no, header[c]));
    rows.push_back(std::move(row));
    line_numbers.push_back(line_no);
  }

  NetworkData net;
  std::vector<std::int64_t> w, f, p;
  for (const auto& r : rows) {
    w.push_back(r.worker);
    f.push_back(r.firm);
    p.push_back(r.period);
  }
  net.worker_ids = sorted_unique(std::move(w));
  net.firm_ids = sorted_unique(std::move(f));
  net.period_ids = sorted_unique(std::move(p));
  net.n_workers = static_cast<int>(net.worker_ids.size());
  net.n_firms = static_cast<int>(net.firm_ids.size());
  net.n_periods = static_cast<int>(net.period_ids.size());
  net.n_covariates = static_cast<int>(c_x.size());
  net.edges.reserve(rows.size());
  for (auto& r : rows) {
    Edge e;
    e.worker = dense_index(net.worker_ids, r.worker);
    e.firm = dense_index(net.firm_ids, r.firm);
    e.period = dense_index(net.period_ids, r.period);
    e.y = r.y;
    e.x = std::move(r.x);
    net.edges.push_back(std::move(e));
  }
  check_unique_worker_period(net.edges, line_numbers);
  return net;
}

NetworkData load_edge_list_file(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  return load_edge_list(in, schema);
}

void write_edge_list(std::ostream& out, const NetworkData& net) {
  out << "worker_id,firm_id,period,y";
  for (int c = 0; c < net.n_covariates; ++c) out << ",x" << (c + 1);
  out << '\n';
  for (const auto& e : net.edges) {
    out << net.worker_ids[e.worker] << ',' << net.firm_ids[e.firm] << ','
        << net.period_ids[e.period] << ',' << format_real(e.y);
    for (double v : e.x) out << ',' << format_real(v);
    out << '\n';
  }
}

NetworkData make_network(std::vector<Edge> edges, int n_workers, int n_firms, int n_periods) {
  NetworkData net;
  net.n_workers = n_workers;
  net.n_firms = n_firms;
  net.n_periods = n_periods;
  net.n_covariates = edges.empty() ? 0 : static_cast<int>(edges.front().x.size());
  for (const auto& e : edges) {
    if (e.worker < 0 || e.worker >= n_workers || e.firm < 0 || e.firm >= n_firms ||
        e.period < 0 || e.period >= n_periods) {
      fail(ErrorCode::InvalidArgument, "make_network: id out of range");
    }
    if (static_cast<int>(e.x.size()) != net.n_covariates) {
      fail(ErrorCode::DimensionMismatch, "make_network: covariate count differs across edges");
    }
  }
  net.edges = std::move(edges);
  check_unique_worker_period(net.edges, {});
  net.worker_ids.resize(n_workers);
  net.firm_ids.resize(n_firms);
  net.period_ids.resize(n_periods);
  std::iota(net.worker_ids.begin(), net.worker_ids.end(), 0);
  std::iota(net.firm_ids.begin(), net.firm_ids.end(), 0);
  std::iota(net.period_ids.begin(), net.period_ids.end(), 0);
  return net;
}

Components connected_components(const NetworkData& net) {
  const int nodes = net.n_workers + net.n_firms;
  DisjointSet dsu(nodes);
  for (const auto& e : net.edges) dsu.unite(e.worker, net.n_workers + e.firm);

  Components comps;
  comps.worker_label.assign(net.n_workers, -1);
  comps.firm_label.assign(net.n_firms, -1);
  std::unordered_map<int, int> root_label;
  for (int v = 0; v < nodes; ++v) {
    const int root = dsu.find(v);
    auto [it, inserted] = root_label.emplace(root, comps.count);
    if (inserted) {
      ++comps.count;
      comps.sizes.push_back(0);
    }
    ++comps.sizes[it->second];
    if (v < net.n_workers) {
      comps.worker_label[v] = it->second;
    } else {
      comps.firm_label[v - net.n_workers] = it->second;
    }
  }
  return comps;
}

NetworkData restrict_to_component(const NetworkData& net, const Components& comps, int label) {
  std::vector<std::size_t> keep;
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    if (comps.worker_label[net.edges[e].worker] == label) keep.push_back(e);
  }
  return subnetwork(net, keep);
}

NetworkData largest_component(const NetworkData& net) {
  const Components comps = connected_components(net);
  if (comps.count == 0) return net;
  const auto best = std::max_element(comps.sizes.begin(), comps.sizes.end());
  return restrict_to_component(net, comps, static_cast<int>(best - comps.sizes.begin()));
}

NetworkData subnetwork(const NetworkData& net, const std::vector<std::size_t>& edge_indices) {
  std::map<int, int> workers, firms, periods;
  for (std::size_t e : edge_indices) {
    const Edge& edge = net.edges.at(e);
    workers.emplace(edge.worker, 0);
    firms.emplace(edge.firm, 0);
    periods.emplace(edge.period, 0);
  }
  NetworkData out;
  out.n_covariates = net.n_covariates;
  auto densify = [](std::map<int, int>& table, const std::vector<std::int64_t>& ids,
                    std::vector<std::int64_t>& out_ids) {
    int next = 0;
    for (auto& [old_index, new_index] : table) {
      new_index = next++;
      out_ids.push_back(ids[old_index]);
    }
    return next;
  };
  out.n_workers = densify(workers, net.worker_ids, out.worker_ids);
  out.n_firms = densify(firms, net.firm_ids, out.firm_ids);
  out.n_periods = densify(periods, net.period_ids, out.period_ids);
  out.edges.reserve(edge_indices.size());
  for (std::size_t e : edge_indices) {
    Edge edge = net.edges[e];
    edge.worker = workers[edge.worker];
    edge.firm = firms[edge.firm];
    edge.period = periods[edge.period];
    out.edges.push_back(std::move(edge));
  }
  return out;
}

DesignMatrices DesignMatrices::with_outcome(linalg::Vector new_y) const {
  if (new_y.size() != n()) {
    fail(ErrorCode::DimensionMismatch, "with_outcome: outcome length does not match design");
  }
  DesignMatrices out = *this;
  out.y = std::move(new_y);
  return out;
}

DesignMatrices DesignMatrices::from_dense(linalg::Vector y, const linalg::Matrix& x1,
                                          linalg::Matrix x2) {
  if (y.size() != x1.rows() || x2.rows() != x1.rows()) {
    fail(ErrorCode::DimensionMismatch, "from_dense: y, x1 and x2 must have the same row count");
  }
  DesignMatrices dm;
  dm.y = std::move(y);
  dm.x1 = x1.sparseView(0.0, 0.0);
  dm.x2 = std::move(x2);
  dm.normalization = "none";
  dm.columns.assign(x1.cols(), ColumnRole{});
  dm.projector = std::make_shared<const linalg::ColumnSpaceProjector>(dm.x1);
  dm.rank1 = dm.projector->rank();
  return dm;
}

DesignMatrices build_design(const NetworkData& net, Normalization normalization) {
  DesignMatrices dm;
  const auto n = static_cast<Eigen::Index>(net.edges.size());

  std::vector<bool> firm_dropped(net.n_firms, false);
  if (normalization == Normalization::DropLastFirmPerComponent) {
    const Components comps = connected_components(net);
    std::vector<int> last_firm(comps.count, -1);
    for (int f = 0; f < net.n_firms; ++f) last_firm[comps.firm_label[f]] = f;
    for (int f : last_firm) {
      if (f >= 0) {
        firm_dropped[f] = true;
        dm.dropped_firms.push_back(f);
      }
    }
    std::sort(dm.dropped_firms.begin(), dm.dropped_firms.end());
    dm.normalization = "drop-last-firm-per-component";
  } else {
    dm.normalization = "none";
  }

  std::vector<int> firm_col(net.n_firms, -1);
  for (int w = 0; w < net.n_workers; ++w) dm.columns.push_back({ColumnKind::Worker, w});
  int next = net.n_workers;
  for (int f = 0; f < net.n_firms; ++f) {
    if (firm_dropped[f]) continue;
    firm_col[f] = next++;
    dm.columns.push_back({ColumnKind::Firm, f});
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * net.edges.size());
  dm.y.resize(n);
  dm.x2.resize(n, net.n_covariates);
  dm.edge_worker_col.resize(n);
  dm.edge_firm_col.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Edge& e = net.edges[i];
    dm.y(i) = e.y;
    for (int c = 0; c < net.n_covariates; ++c) dm.x2(i, c) = e.x[c];
    triplets.emplace_back(i, e.worker, 1.0);
    dm.edge_worker_col[i] = e.worker;
    dm.edge_firm_col[i] = firm_col[e.firm];
    if (firm_col[e.firm] >= 0) triplets.emplace_back(i, firm_col[e.firm], 1.0);
  }
  dm.x1.resize(n, next);
  dm.x1.setFromTriplets(triplets.begin(), triplets.end());
  dm.x1.makeCompressed();

  dm.projector = std::make_shared<const linalg::ColumnSpaceProjector>(dm.x1);
  dm.rank1 = dm.projector->rank();
  if (normalization == Normalization::DropLastFirmPerComponent && dm.rank1 < dm.x1.cols()) {
    fail(ErrorCode::RankDeficient, "build_design: x1 has rank " + std::to_string(dm.rank1) +
                                       " < " + std::to_string(dm.x1.cols()) +
                                       " columns after normalization");
  }
  return dm;
}

std::string to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::ConfigA: return "A";
    case PatternKind::ConfigB: return "B";
    case PatternKind::ConfigC: return "C";
    case PatternKind::ConfigD: return "D";
    case PatternKind::ConfigE: return "E";
    case PatternKind::ConfigF: return "F";
    case PatternKind::Tetrad: return "tetrad";
  }
  return "?";
}

std::optional<PatternKind> pattern_kind_from_string(const std::string& name) {
  static const std::map<std::string, PatternKind> table = {
      {"A", PatternKind::ConfigA}, {"B", PatternKind::ConfigB}, {"C", PatternKind::ConfigC},
      {"D", PatternKind::ConfigD}, {"E", PatternKind::ConfigE}, {"F", PatternKind::ConfigF},
      {"tetrad", PatternKind::Tetrad}};
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

namespace {

struct TwoPeriodWorker {
  int worker = -1;
  std::size_t first = 0;
  std::size_t second = 0;
  int firm_first = -1;
  int firm_second = -1;

  bool has(int f) const { return firm_first == f || firm_second == f; }
  std::size_t edge_at(int f) const { return firm_first == f ? first : second; }
};

void push_capped(std::vector<SubnetworkPattern>& out, SubnetworkPattern p, std::size_t limit) {
  if (limit != 0 && out.size() >= limit) {
    fail(ErrorCode::CapExceeded, "find_patterns: more than " + std::to_string(limit) + " patterns");
  }
  out.push_back(std::move(p));
}

std::vector<SubnetworkPattern> find_tetrads(const NetworkData& net, std::size_t limit) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> dyads;
  std::set<std::int64_t> agent_set;
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    const std::int64_t a = net.worker_ids[net.edges[e].worker];
    const std::int64_t b = net.firm_ids[net.edges[e].firm];
    if (a == b) continue;
    dyads.emplace(std::minmax(a, b), e);
    agent_set.insert(a);
    agent_set.insert(b);
  }
  const std::vector<std::int64_t> agents(agent_set.begin(), agent_set.end());
  auto dyad = [&](std::int64_t a, std::int64_t b) -> std::optional<std::size_t> {
    auto it = dyads.find(std::minmax(a, b));
    if (it == dyads.end()) return std::nullopt;
    return it->second;
  };
  std::vector<SubnetworkPattern> out;
  const std::size_t na = agents.size();
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = i + 1; j < na; ++j) {
      const auto ij = dyad(agents[i], agents[j]);
      if (!ij) continue;
      for (std::size_t k = j + 1; k < na; ++k) {
        const auto ik = dyad(agents[i], agents[k]);
        const auto jk = dyad(agents[j], agents[k]);
        if (!ik || !jk) continue;
        for (std::size_t l = k + 1; l < na; ++l) {
          const auto il = dyad(agents[i], agents[l]);
          const auto jl = dyad(agents[j], agents[l]);
          const auto kl = dyad(agents[k], agents[l]);
          if (!il || !jl || !kl) continue;
          push_capped(out, {PatternKind::Tetrad, {*ij, *ik, *il, *jk, *jl, *kl}}, limit);
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<SubnetworkPattern> find_patterns(const NetworkData& net, PatternKind kind, std::size_t limit) {
  if (kind == PatternKind::Tetrad) return find_tetrads(net, limit);
  if (net.n_periods != 2) {
    fail(ErrorCode::InvalidArgument, "find_patterns: configurations A-F need exactly 2 periods, got " +
                                         std::to_string(net.n_periods));
  }

  std::vector<std::array<long, 2>> spell(net.n_workers, {-1, -1});
  for (std::size_t e = 0; e < net.edges.size(); ++e) {
    spell[net.edges[e].worker][net.edges[e].period] = static_cast<long>(e);
  }
  std::vector<TwoPeriodWorker> stayers, movers;
  for (int w = 0; w < net.n_workers; ++w) {
    if (spell[w][0] < 0 || spell[w][1] < 0) continue;
    TwoPeriodWorker tw;
    tw.worker = w;
    tw.first = static_cast<std::size_t>(spell[w][0]);
    tw.second = static_cast<std::size_t>(spell[w][1]);
    tw.firm_first = net.edges[tw.first].firm;
    tw.firm_second = net.edges[tw.second].firm;
    (tw.firm_first == tw.firm_second ? stayers : movers).push_back(tw);
  }

  std::vector<SubnetworkPattern> out;
  auto shared_firms = [](const TwoPeriodWorker& a, const TwoPeriodWorker& b) {
    return static_cast<int>(b.has(a.firm_first)) + static_cast<int>(b.has(a.firm_second));
  };

  switch (kind) {
    case PatternKind::ConfigA:
      for (const auto& s : stayers) push_capped(out, {kind, {s.first, s.second}}, limit);
      break;
    case PatternKind::ConfigB:
      for (const auto& m : movers) push_capped(out, {kind, {m.first, m.second}}, limit);
      break;
    case PatternKind::ConfigC:
    case PatternKind::ConfigD:
    case PatternKind::ConfigE: {
      const int wanted = kind == PatternKind::ConfigC ? 2 : (kind == PatternKind::ConfigE ? 1 : 0);
      for (std::size_t a = 0; a < movers.size(); ++a) {
        for (std::size_t b = a + 1; b < movers.size(); ++b) {
          const auto& i = movers[a];
          const auto& k = movers[b];
          if (shared_firms(i, k) != wanted) continue;
          if (kind == PatternKind::ConfigC) {
            push_capped(out, {kind,
                           {i.first, i.second, k.edge_at(i.firm_first), k.edge_at(i.firm_second)}}, limit);
          } else {
            push_capped(out, {kind, {i.first, i.second, k.first, k.second}}, limit);
          }
        }
      }
      break;
    }
    case PatternKind::ConfigF: {
      // Loop i{a,b} -> i'{b,c} -> i''{c,a}, anchored at the smallest worker
      // and walked from its first-period firm, so each loop appears once.
      for (std::size_t a = 0; a < movers.size(); ++a) {
        const auto& i = movers[a];
        const int fa = i.firm_first;
        const int fb = i.firm_second;
        for (std::size_t b = a + 1; b < movers.size(); ++b) {
          const auto& i2 = movers[b];
          if (!i2.has(fb) || i2.has(fa)) continue;
          const int fc = i2.firm_first == fb ? i2.firm_second : i2.firm_first;
          for (std::size_t c = a + 1; c < movers.size(); ++c) {
            if (c == b) continue;
            const auto& i3 = movers[c];
            if (!(i3.has(fc) && i3.has(fa))) continue;
            push_capped(out, {kind,
                           {i.edge_at(fa), i.edge_at(fb), i2.edge_at(fb), i2.edge_at(fc),
                            i3.edge_at(fc), i3.edge_at(fa)}}, limit);
          }
        }
      }
      break;
    }
    case PatternKind::Tetrad:
      break;
  }
  return out;
}

}  // namespace fdnet
