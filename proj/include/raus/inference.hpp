#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "raus/model.hpp"

namespace raus {

inline constexpr std::size_t kDefaultCliqueCap = 10'000'000;
inline constexpr std::size_t kOracleStateCap = std::size_t{1} << 20;

// Clique tree over variables 0..n-1. Cliques and scopes hold sorted ids.
struct JunctionTree {
  std::vector<int> cards;
  std::vector<std::vector<int>> cliques;
  std::vector<std::size_t> states;
  std::vector<int> parent;                   // -1 at the root
  std::vector<std::vector<int>> separators;  // with the parent clique
  std::vector<int> order;                    // root first, parents before children
  std::vector<std::vector<int>> scopes;      // input factor scopes
  std::vector<int> home;                     // clique holding each scope
  std::vector<int> var_clique;               // smallest clique holding each variable

  std::size_t size() const { return cliques.size(); }
  std::size_t max_states() const;
};

// Moralizes the factor scopes, triangulates by min-fill (ties to the lowest
// id), keeps maximal elimination cliques and joins them by a maximum-weight
// spanning tree on separator size.
JunctionTree compile_junction_tree(std::span<const int> cards,
                                   std::span<const std::vector<int>> scopes,
                                   std::size_t max_clique_states = kDefaultCliqueCap);

// Families {v} + parents(v) of the unrolled net as scopes.
JunctionTree compile_junction_tree(const UnrolledNet& net,
                                   std::size_t max_clique_states = kDefaultCliqueCap);

bool satisfies_running_intersection(const JunctionTree& tree);

// Visits each entry i of a table over `vars` (last variable fastest) together
// with the index j of the matching entry in a table over `sub` (a subset).
template <class F>
void for_each_projection(std::span<const int> vars, std::span<const int> cards,
                         std::span<const int> sub, F&& f);

// Hugin message passing on a private copy of the tree's potentials.
class TreeCalibration {
 public:
  TreeCalibration() = default;
  explicit TreeCalibration(JunctionTree tree);

  const JunctionTree& tree() const { return tree_; }
  void reset();
  // Multiplies a table over tree().scopes[scope] into its home clique.
  void multiply_scope(std::size_t scope, std::span<const double> values);
  // Collect then distribute. Throws InconsistentEvidence on a zero partition.
  void calibrate();
  double log_partition() const { return log_z_; }
  std::span<const double> belief(std::size_t clique) const { return potentials_[clique]; }
  std::vector<double> project(std::size_t clique, std::span<const int> vars) const;
  std::vector<double> marginal(int var) const;

 private:
  JunctionTree tree_;
  std::vector<std::vector<double>> potentials_;
  std::vector<std::vector<double>> separator_potentials_;
  double log_z_ = 0.0;
};

// Inference on the part of an unrolled net that matters for a query: the
// evidence is instantiated into the CPT factors, and with pruning only
// ancestors of the evidence and query variables are kept.
class ReducedQuery {
 public:
  ReducedQuery(const UnrolledNet& net, std::span<const int> evidence,
               std::span<const int> queries = {}, bool prune = false,
               std::size_t max_clique_states = kDefaultCliqueCap);

  // log P(evidence). Throws InconsistentEvidence when it is zero.
  double run(const CptSet& cpts);
  std::vector<double> marginal(int var) const;
  // After run(): calls fn(cpt_index, posterior weight) for each
  // configuration of var's family with positive support.
  template <class F>
  void family_posterior(int var, F&& fn) const;

  std::size_t hidden_count() const { return hidden_.size(); }
  const JunctionTree& tree() const { return calibration_.tree(); }
  const TreeCalibration& calibration() const { return calibration_; }

 private:
  struct Family {
    int var = 0;
    std::vector<int> scope;            // local ids, sorted
    std::vector<std::size_t> strides;  // CPT offset per scope member
    std::size_t base = 0;              // CPT offset of the observed members
    int scope_index = -1;              // into tree().scopes, -1 when empty
  };

  const UnrolledNet* net_;
  std::vector<int> evidence_;
  std::vector<int> local_;
  std::vector<int> hidden_;
  std::vector<Family> families_;
  std::vector<int> family_of_;
  TreeCalibration calibration_;
  double log_constant_ = 0.0;
};

struct Marginals {
  std::vector<std::vector<double>> probabilities;
  double log_evidence = 0.0;
};

// Junction-tree marginals for every variable given evidence (kMissing =
// unobserved).
Marginals query_marginals(const UnrolledNet& net, const CptSet& cpts, std::span<const int> evidence,
                          std::size_t max_clique_states = kDefaultCliqueCap);

// Enumeration oracle over the unobserved variables.
Marginals brute_force_marginals(const UnrolledNet& net, const CptSet& cpts,
                                std::span<const int> evidence,
                                std::size_t max_states = kOracleStateCap);
std::vector<double> brute_force_joint(const UnrolledNet& net, const CptSet& cpts,
                                      std::span<const int> evidence, int query,
                                      std::size_t max_states = kOracleStateCap);

struct PredictOptions {
  TargetMode mode = TargetMode::kExact;
  bool past_labels = true;
  std::size_t max_clique_states = kDefaultCliqueCap;
};

// P(target event at t + L | cells observed at timesteps <= t).
class Predictor {
 public:
  Predictor(const TwoSliceStructure& structure, const CptSet& cpts, int horizon,
            PredictOptions options = {});

  // `sequence` holds horizon * width values laid out like SequenceData.
  double predict(std::span<const int> sequence, int t, int lookahead) const;
  int horizon() const { return horizon_; }

 private:
  double event_probability(std::span<const int> sequence, int t, int step,
                           std::span<const int> extra_zero_steps) const;

  const TwoSliceStructure* structure_;
  const CptSet* cpts_;
  int horizon_;
  PredictOptions options_;
  std::vector<UnrolledNet> nets_;  // nets_[k] has k + 1 slices
};

// ---------------------------------------------------------------------------

template <class F>
void for_each_projection(std::span<const int> vars, std::span<const int> cards,
                         std::span<const int> sub, F&& f) {
  const std::size_t n = vars.size();
  std::vector<std::size_t> strides(n, 0);
  std::size_t acc = 1;
  std::size_t pos = n;
  for (std::size_t k = sub.size(); k-- > 0;) {
    while (pos > 0 && vars[pos - 1] != sub[k]) --pos;
    if (pos == 0) throw Error(ErrorCode::kInvalidArgument, "projection onto a non-subset");
    --pos;
    strides[pos] = acc;
    acc *= static_cast<std::size_t>(cards[pos]);
  }
  std::size_t total = 1;
  for (int c : cards) total *= static_cast<std::size_t>(c);
  std::vector<int> digit(n, 0);
  std::size_t j = 0;
  for (std::size_t i = 0; i < total; ++i) {
    f(i, j);
    for (std::size_t d = n; d-- > 0;) {
      if (++digit[d] < cards[d]) {
        j += strides[d];
        break;
      }
      j -= strides[d] * static_cast<std::size_t>(cards[d] - 1);
      digit[d] = 0;
    }
  }
}

template <class F>
void ReducedQuery::family_posterior(int var, F&& fn) const {
  const Family& fam = families_[family_of_[var]];
  if (fam.scope_index < 0) {
    fn(fam.base, 1.0);
    return;
  }
  const JunctionTree& jt = calibration_.tree();
  std::vector<double> table = calibration_.project(jt.home[fam.scope_index], fam.scope);
  std::vector<int> digit(fam.scope.size(), 0);
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i] > 0.0) {
      std::size_t idx = fam.base;
      for (std::size_t k = 0; k < digit.size(); ++k) idx += digit[k] * fam.strides[k];
      fn(idx, table[i]);
    }
    for (std::size_t d = digit.size(); d-- > 0;) {
      if (++digit[d] < jt.cards[fam.scope[d]]) break;
      digit[d] = 0;
    }
  }
}

}  // namespace raus
