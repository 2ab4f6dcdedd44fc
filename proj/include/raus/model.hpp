#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "raus/dataset.hpp"
#include "raus/ranking.hpp"
#include "raus/structure.hpp"

namespace raus {

// Parent of a CPT: node index and slice lag (0 same slice, 1 previous slice).
struct ParentRef {
  int node = 0;
  int lag = 0;
  friend bool operator==(const ParentRef&, const ParentRef&) = default;
};

// Conditional probability table. Rows enumerate parent configurations in
// mixed radix (first parent most significant); table[row * cardinality + k].
struct Cpt {
  int node = 0;
  int cardinality = 0;
  std::vector<ParentRef> parents;
  std::vector<int> parent_cards;
  std::vector<double> table;

  std::size_t rows() const { return cardinality ? table.size() / cardinality : 0; }
  std::span<const double> row(std::size_t r) const {
    return {table.data() + r * cardinality, static_cast<std::size_t>(cardinality)};
  }
};

struct CptSet {
  std::vector<Cpt> prior;       // slice 0
  std::vector<Cpt> transition;  // slices t >= 1, tied
  double pseudocount = 1.0;
};

// Parent lists in CPT order: intra parents ascending, then (transition
// only) inter parents ascending.
std::vector<ParentRef> prior_parents(const TwoSliceStructure& s, int node);
std::vector<ParentRef> transition_parents(const TwoSliceStructure& s, int node);

// CPTs shaped for `s`, filled with uniform rows.
CptSet make_uniform_cpts(const TwoSliceStructure& s, double pseudocount = 1.0);

// Per-subject sequences over the structure's nodes (target last or wherever
// the structure puts it), kMissing for missing cells.
struct SequenceData {
  int width = 0;
  int horizon = 0;
  std::vector<int> values;  // [(s * horizon + t) * width + v]

  std::size_t subjects() const {
    return width && horizon ? values.size() / (static_cast<std::size_t>(width) * horizon) : 0;
  }
  int at(std::size_t s, int t, int v) const {
    return values[(s * horizon + static_cast<std::size_t>(t)) * width + v];
  }
  std::span<const int> subject(std::size_t s) const {
    const std::size_t n = static_cast<std::size_t>(width) * horizon;
    return {values.data() + s * n, n};
  }
  bool complete() const;
};

// Maps the structure's nodes onto panel variables by name; the target node
// reads the panel labels. `rows` may repeat subjects.
SequenceData make_sequences(const DiscretePanel& panel, const TwoSliceStructure& s,
                            std::span<const std::size_t> rows);
SequenceData make_sequences(const DiscretePanel& panel, const TwoSliceStructure& s);

// One-slice rows for a static network whose target node is the label at
// t + lookahead.
SequenceData make_static_rows(const DiscretePanel& panel, const TwoSliceStructure& s,
                              std::span<const RankRow> rows, int lookahead,
                              TargetMode mode = TargetMode::kExact);

// The 2-TBN unrolled over `slices` timesteps; variable id = t * width + v.
struct UnrolledNet {
  int slices = 0;
  int width = 0;
  std::vector<int> cards;
  std::vector<std::vector<int>> parents;  // CPT parent order

  static UnrolledNet unroll(const TwoSliceStructure& s, int slices);

  int id(int t, int v) const { return t * width + v; }
  int size() const { return static_cast<int>(cards.size()); }
  const Cpt& cpt(int var, const CptSet& cpts) const {
    return var < width ? cpts.prior[var] : cpts.transition[var % width];
  }
};

}  // namespace raus
