#include "raus/structure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace raus {

namespace {

// Counts (parent configuration, child value) over rows complete in the
// family. Returns the number of parent configurations.
std::size_t family_counts(const DataMatrix& data, int node, std::span<const int> parents,
                          std::size_t cap, std::vector<std::int64_t>& counts) {
  std::size_t configs = 1;
  for (int p : parents) {
    configs *= static_cast<std::size_t>(data.cards[p]);
    if (configs > cap)
      throw Error(ErrorCode::kParentSpaceTooLarge,
                  "parent configuration count exceeds " + std::to_string(cap));
  }
  const int r = data.cards[node];
  counts.assign(configs * static_cast<std::size_t>(r), 0);
  const auto& child = data.columns[node];
  for (std::size_t i = 0; i < data.rows(); ++i) {
    int x = child[i];
    if (x == kMissing) continue;
    std::size_t j = 0;
    bool complete = true;
    for (int p : parents) {
      int v = data.columns[p][i];
      if (v == kMissing) {
        complete = false;
        break;
      }
      j = j * static_cast<std::size_t>(data.cards[p]) + static_cast<std::size_t>(v);
    }
    if (complete) ++counts[j * r + x];
  }
  return configs;
}

double entropy_of_counts(std::span<const std::int64_t> counts, double total) {
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) {
      double p = static_cast<double>(c) / total;
      h -= p * std::log2(p);
    }
  return h;
}

bool is_acyclic(const std::vector<std::vector<int>>& parents) {
  const std::size_t n = parents.size();
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::pair<int, std::size_t>> stack;
  for (std::size_t root = 0; root < n; ++root) {
    if (state[root]) continue;
    stack.push_back({static_cast<int>(root), 0});
    state[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < parents[v].size()) {
        int p = parents[v][next++];
        if (state[p] == 1) return false;
        if (state[p] == 0) {
          state[p] = 1;
          stack.push_back({p, 0});
        }
      } else {
        state[v] = 2;
        stack.pop_back();
      }
    }
  }
  return true;
}

}  // namespace

double k2_node_score(const DataMatrix& data, int node, std::span<const int> parents,
                     std::size_t max_parent_configs) {
  std::vector<std::int64_t> counts;
  const std::size_t configs = family_counts(data, node, parents, max_parent_configs, counts);
  const int r = data.cards[node];
  const double lg_r = std::lgamma(static_cast<double>(r));
  double score = 0.0;
  for (std::size_t j = 0; j < configs; ++j) {
    std::int64_t nij = 0;
    double inner = 0.0;
    for (int k = 0; k < r; ++k) {
      auto c = counts[j * r + k];
      nij += c;
      inner += std::lgamma(static_cast<double>(c) + 1.0);
    }
    if (nij == 0) continue;  // contributes ln((r-1)!/(r-1)!) = 0
    score += lg_r - std::lgamma(static_cast<double>(nij + r)) + inner;
  }
  return score;
}

IntraDag k2_search(const DataMatrix& data, std::span<const std::string> order, int max_parents,
                   std::size_t max_parent_configs) {
  if (order.size() != data.cols())
    throw Error(ErrorCode::kInvalidArgument, "order and data column count differ");
  IntraDag dag;
  dag.nodes.assign(order.begin(), order.end());
  dag.parents.resize(order.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) {
    std::vector<int> parents;
    double current = k2_node_score(data, i, parents, max_parent_configs);
    while (static_cast<int>(parents.size()) < max_parents) {
      int best = -1;
      double best_score = current;
      for (int j = 0; j < i; ++j) {
        if (std::find(parents.begin(), parents.end(), j) != parents.end()) continue;
        std::vector<int> trial = parents;
        trial.insert(std::upper_bound(trial.begin(), trial.end(), j), j);
        double s = k2_node_score(data, i, trial, max_parent_configs);
        if (s > best_score) {
          best_score = s;
          best = j;
        }
      }
      if (best < 0) break;
      parents.insert(std::upper_bound(parents.begin(), parents.end(), best), best);
      current = best_score;
    }
    dag.parents[i] = std::move(parents);
  }
  return dag;
}

double k2_total_score(const DataMatrix& data, const IntraDag& dag, std::size_t max_parent_configs) {
  double total = 0.0;
  for (std::size_t i = 0; i < dag.nodes.size(); ++i)
    total += k2_node_score(data, static_cast<int>(i), dag.parents[i], max_parent_configs);
  return total;
}

MutualInfo mutual_information(const DataMatrix& previous, std::span<const int> sources,
                              const DataMatrix& next, int destination) {
  if (previous.rows() != next.rows())
    throw Error(ErrorCode::kInvalidArgument, "slices are not aligned");
  std::size_t configs = 1;
  for (int s : sources) configs *= static_cast<std::size_t>(previous.cards[s]);
  const int r = next.cards[destination];
  std::vector<std::int64_t> joint(configs * static_cast<std::size_t>(r), 0);
  const auto& dest = next.columns[destination];
  std::size_t n = 0;
  for (std::size_t i = 0; i < next.rows(); ++i) {
    int y = dest[i];
    if (y == kMissing) continue;
    std::size_t j = 0;
    bool complete = true;
    for (int s : sources) {
      int v = previous.columns[s][i];
      if (v == kMissing) {
        complete = false;
        break;
      }
      j = j * static_cast<std::size_t>(previous.cards[s]) + static_cast<std::size_t>(v);
    }
    if (!complete) continue;
    ++joint[j * r + y];
    ++n;
  }
  MutualInfo out;
  out.rows = n;
  if (n == 0) return out;
  const double dn = static_cast<double>(n);
  std::vector<std::int64_t> marginal(r, 0);
  double h_cond = 0.0;
  for (std::size_t j = 0; j < configs; ++j) {
    std::span<const std::int64_t> row(joint.data() + j * r, static_cast<std::size_t>(r));
    std::int64_t nj = 0;
    for (int k = 0; k < r; ++k) {
      nj += row[k];
      marginal[k] += row[k];
    }
    if (nj > 0) h_cond += static_cast<double>(nj) / dn * entropy_of_counts(row, static_cast<double>(nj));
  }
  out.h_destination = entropy_of_counts(marginal, dn);
  out.mi = std::max(0.0, out.h_destination - h_cond);
  return out;
}

namespace {

// Advances `combo` (strictly increasing indices into [0, n)) to the next
// lexicographic combination of the same size.
bool next_combination(std::vector<int>& combo, int n) {
  const int k = static_cast<int>(combo.size());
  for (int i = k - 1; i >= 0; --i) {
    if (combo[i] < n - k + i) {
      ++combo[i];
      for (int j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace

InterEdges reveal_search(const DataMatrix& previous, const DataMatrix& next,
                         const RevealOptions& options) {
  if (previous.cols() != next.cols())
    throw Error(ErrorCode::kInvalidArgument, "slices have different node sets");
  const int n = static_cast<int>(next.cols());
  InterEdges result;
  for (int d = 0; d < n; ++d) {
    MutualInfo base = mutual_information(previous, {}, next, d);
    if (base.h_destination <= 0.0) {
      result.skipped.push_back(d);
      continue;
    }
    std::vector<int> candidates;
    for (int c = 0; c < n; ++c) {
      if (!options.target_may_parent_features && c == options.target && d != options.target) continue;
      candidates.push_back(c);
    }
    const int m = static_cast<int>(candidates.size());

    auto normalized = [&](const std::vector<int>& combo) {
      std::vector<int> sources;
      for (int i : combo) sources.push_back(candidates[i]);
      MutualInfo mi = mutual_information(previous, sources, next, d);
      return mi.h_destination > 0.0 ? mi.mi / mi.h_destination : 0.0;
    };

    std::vector<int> accepted;
    double accepted_score = 0.0;
    double best_single = -1.0;
    int best_single_index = -1;
    for (int k = 1; k <= std::min(options.max_inter_parents, m) && accepted.empty(); ++k) {
      std::vector<int> combo(k);
      std::iota(combo.begin(), combo.end(), 0);
      double best = -1.0;
      std::vector<int> best_combo;
      do {
        double score = normalized(combo);
        if (k == 1 && score > best_single) {
          best_single = score;
          best_single_index = combo[0];
        }
        if (score >= options.accept_ratio && score > best) {
          best = score;
          best_combo = combo;
        }
      } while (next_combination(combo, m));
      if (!best_combo.empty()) {
        accepted = best_combo;
        accepted_score = best;
      }
    }
    if (accepted.empty() && best_single_index >= 0 && best_single >= options.fallback_ratio) {
      accepted = {best_single_index};
      accepted_score = best_single;
    }
    for (int i : accepted) result.edges.push_back({candidates[i], d, accepted_score, 0, 1});
  }
  return result;
}

std::vector<int> TwoSliceStructure::inter_parents(int node) const {
  std::vector<int> out;
  for (const auto& e : inter)
    if (e.destination == node) out.push_back(e.source);
  return out;
}

int TwoSliceStructure::node_index(const std::string& name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i] == name) return static_cast<int>(i);
  return -1;
}

void validate(const TwoSliceStructure& s) {
  const int n = static_cast<int>(s.nodes.size());
  if (static_cast<int>(s.cards.size()) != n || static_cast<int>(s.intra_parents.size()) != n)
    throw Error(ErrorCode::kInvalidStructure, "node, cardinality and parent lists differ in size");
  if (s.target < 0 || s.target >= n) throw Error(ErrorCode::kInvalidStructure, "target node missing");
  for (int c : s.cards)
    if (c < 1) throw Error(ErrorCode::kInvalidStructure, "cardinality must be positive");
  for (int v = 0; v < n; ++v)
    for (int p : s.intra_parents[v])
      if (p < 0 || p >= n || p == v)
        throw Error(ErrorCode::kInvalidStructure, "invalid intra parent of " + s.nodes[v]);
  if (!is_acyclic(s.intra_parents)) throw Error(ErrorCode::kInvalidStructure, "intra-slice cycle");
  for (const auto& e : s.inter) {
    if (!e.forward())
      throw Error(ErrorCode::kInvalidStructure, "inter-slice edge is not strictly forward");
    if (e.source < 0 || e.source >= n || e.destination < 0 || e.destination >= n)
      throw Error(ErrorCode::kInvalidStructure, "inter-slice edge references unknown node");
  }
  // With an acyclic slice and only forward inter edges, every unrolling is
  // acyclic (topological order: slice-major, then intra order).
}

TwoSliceStructure assemble_2tbn(const IntraDag& intra, const InterEdges& inter,
                                std::span<const int> cards, const std::string& target) {
  TwoSliceStructure s;
  s.nodes = intra.nodes;
  s.cards.assign(cards.begin(), cards.end());
  s.intra_parents = intra.parents;
  s.inter = inter.edges;
  s.target = s.node_index(target);
  if (s.target < 0) throw Error(ErrorCode::kInvalidStructure, "target '" + target + "' not in node set");
  std::sort(s.inter.begin(), s.inter.end(), [](const InterEdge& a, const InterEdge& b) {
    return std::tie(a.destination, a.source) < std::tie(b.destination, b.source);
  });
  validate(s);
  return s;
}

}  // namespace raus
