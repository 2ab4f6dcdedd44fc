#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "raus/common.hpp"

namespace raus {

// Column-major categorical data; kMissing marks a missing cell.
struct DataMatrix {
  std::vector<std::vector<int>> columns;
  std::vector<int> cards;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t cols() const { return columns.size(); }
};

inline constexpr std::size_t kDefaultParentConfigCap = 4096;

// Cooper-Herskovits log marginal likelihood of `node` given `parents`,
// scored on rows complete in the family.
double k2_node_score(const DataMatrix& data, int node, std::span<const int> parents,
                     std::size_t max_parent_configs = kDefaultParentConfigCap);

struct IntraDag {
  std::vector<std::string> nodes;          // search order
  std::vector<std::vector<int>> parents;   // indices of earlier nodes
};

// Greedy K2 search; column i of `data` is the i-th node of `order`.
IntraDag k2_search(const DataMatrix& data, std::span<const std::string> order, int max_parents,
                   std::size_t max_parent_configs = kDefaultParentConfigCap);

double k2_total_score(const DataMatrix& data, const IntraDag& dag,
                      std::size_t max_parent_configs = kDefaultParentConfigCap);

struct InterEdge {
  int source = 0;       // node at slice t
  int destination = 0;  // node at slice t + 1
  double score = 0.0;   // normalized mutual information
  int from_slice = 0;
  int to_slice = 1;

  bool forward() const { return to_slice == from_slice + 1; }
  friend bool operator==(const InterEdge&, const InterEdge&) = default;
};

struct InterEdges {
  std::vector<InterEdge> edges;   // sorted by (destination, source)
  std::vector<int> skipped;       // constant destinations
};

struct RevealOptions {
  int max_inter_parents = 2;
  double accept_ratio = 0.9;
  double fallback_ratio = 0.1;
  // Column index of the target node; -1 when absent.
  int target = -1;
  bool target_may_parent_features = true;
};

// Mutual information in bits between the joint configuration of `sources`
// (taken from `previous`) and `destination` (taken from `next`), on rows
// complete in all involved columns. Also returns H(destination) on the same rows.
struct MutualInfo {
  double mi = 0.0;
  double h_destination = 0.0;
  std::size_t rows = 0;
};
MutualInfo mutual_information(const DataMatrix& previous, std::span<const int> sources,
                              const DataMatrix& next, int destination);

// REVEAL inter-slice search over aligned (slice t, slice t+1) rows.
// Candidates are enumerated and ties broken in column order.
InterEdges reveal_search(const DataMatrix& previous, const DataMatrix& next,
                         const RevealOptions& options = {});

struct TwoSliceStructure {
  std::vector<std::string> nodes;
  std::vector<int> cards;
  std::vector<std::vector<int>> intra_parents;
  std::vector<InterEdge> inter;
  int target = -1;

  std::size_t size() const { return nodes.size(); }
  std::vector<int> inter_parents(int node) const;
  int node_index(const std::string& name) const;
};

// Validates and combines the intra DAG with the inter edges. Throws
// InvalidStructure for cycles, non-forward inter edges, or unknown nodes.
TwoSliceStructure assemble_2tbn(const IntraDag& intra, const InterEdges& inter,
                                std::span<const int> cards, const std::string& target);

void validate(const TwoSliceStructure& structure);

}  // namespace raus
