#pragma once

// Edge-list ingestion, design matrices and subnetwork patterns for bipartite
// worker-firm networks (and dyadic formation networks for tetrads).

#include "fdnet/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fdnet {

struct Edge {
  int worker = 0;
  int firm = 0;
  int period = 0;
  double y = 0.0;
  std::vector<double> x;
};

/// Bipartite multigraph of employment spells. Ids are dense in
/// [0, n_workers) x [0, n_firms) x [0, n_periods); the original ids are kept
/// in the *_ids tables (dense index -> original value, ascending).
struct NetworkData {
  std::vector<Edge> edges;
  int n_workers = 0;
  int n_firms = 0;
  int n_periods = 0;
  int n_covariates = 0;
  std::vector<std::int64_t> worker_ids;
  std::vector<std::int64_t> firm_ids;
  std::vector<std::int64_t> period_ids;

  std::size_t size() const { return edges.size(); }
};

/// Column mapping for the edge-list CSV. Empty covariate list means "every
/// header named x<digits>, in header order".
struct CsvSchema {
  std::string worker = "worker_id";
  std::string firm = "firm_id";
  std::string period = "period";
  std::string outcome = "y";
  std::vector<std::string> covariates;
};

NetworkData load_edge_list(std::istream& source, const CsvSchema& schema = {});
NetworkData load_edge_list_file(const std::string& path, const CsvSchema& schema = {});
/// Writes original ids and full-precision values, so loading the output
/// reproduces the same NetworkData.
void write_edge_list(std::ostream& out, const NetworkData& net);

/// Builds a NetworkData from already-dense records, validating invariants.
NetworkData make_network(std::vector<Edge> edges, int n_workers, int n_firms, int n_periods);

/// Component labels over nodes; workers are nodes [0, n_workers) and firms
/// are nodes n_workers + f. Components are numbered 0.. in order of their
/// smallest member node.
struct Components {
  std::vector<int> worker_label;
  std::vector<int> firm_label;
  int count = 0;
  std::vector<int> sizes;  // nodes per component
};

Components connected_components(const NetworkData& net);

/// Edges of one component, with worker/firm/period ids re-densified.
NetworkData restrict_to_component(const NetworkData& net, const Components& comps, int label);
NetworkData largest_component(const NetworkData& net);
/// Sub-network made of the given edges, in the given order.
NetworkData subnetwork(const NetworkData& net, const std::vector<std::size_t>& edge_indices);

enum class Normalization { None, DropLastFirmPerComponent };

enum class ColumnKind { Worker, Firm, Other };

struct ColumnRole {
  ColumnKind kind = ColumnKind::Other;
  int node = -1;  // worker or firm index
};

/// Outcome, heterogeneity design x1 (workers then firms), covariates x2 and a
/// shared least-squares factorization of x1. Copies share the factorization.
struct DesignMatrices {
  linalg::Vector y;
  linalg::SparseMatrix x1;
  linalg::Matrix x2;
  int rank1 = 0;
  std::string normalization;
  std::vector<int> dropped_firms;
  std::vector<ColumnRole> columns;
  // Per edge: the x1 column of its worker and of its firm (-1 if dropped).
  std::vector<int> edge_worker_col;
  std::vector<int> edge_firm_col;
  std::shared_ptr<const linalg::ColumnSpaceProjector> projector;

  Eigen::Index n() const { return x1.rows(); }
  Eigen::Index m() const { return x1.cols(); }
  Eigen::Index k() const { return x2.cols(); }
  int n2() const { return projector->n2(); }
  bool has_roles() const { return !edge_worker_col.empty(); }

  linalg::Matrix dense_x1() const { return linalg::Matrix(x1); }
  /// Same design, different outcome vector.
  DesignMatrices with_outcome(linalg::Vector new_y) const;

  /// Design from arbitrary dense matrices (no worker/firm roles).
  static DesignMatrices from_dense(linalg::Vector y, const linalg::Matrix& x1, linalg::Matrix x2);
};

/// Throws RankDeficient if the normalization was requested but x1 still
/// lacks full column rank.
DesignMatrices build_design(const NetworkData& net, Normalization normalization = Normalization::None);

enum class PatternKind { ConfigA, ConfigB, ConfigC, ConfigD, ConfigE, ConfigF, Tetrad };

std::string to_string(PatternKind kind);
std::optional<PatternKind> pattern_kind_from_string(const std::string& name);

struct SubnetworkPattern {
  PatternKind kind = PatternKind::ConfigA;
  std::vector<std::size_t> member_edges;
};

/// Exhaustive, deduplicated scan for one pattern kind.
///
/// Configurations A-F need n_periods == 2. Member edges are ordered so the
/// closed-form moment functions can read them directly:
///   A, B: (i@t, i@t+1)
///   C:    (i@j, i@j', i'@j, i'@j') where j is i's first-period firm
///   D, E: (i@t, i@t+1, i'@t, i'@t+1)
///   F:    (i@j, i@j', i'@j', i'@j'', i''@j'', i''@j) around the firm loop
/// Tetrad reads the network as undirected dyads (worker_id and firm_id are
/// both agent ids) and returns every 4-agent set with all six dyads present,
/// ordered (ij, ik, il, jk, jl, kl) for agents i < j < k < l.
/// A nonzero limit throws CapExceeded once more patterns than that are found.
std::vector<SubnetworkPattern> find_patterns(const NetworkData& net, PatternKind kind,
                                             std::size_t limit = 0);

}  // namespace fdnet
