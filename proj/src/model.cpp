#include "raus/model.hpp"

#include <algorithm>

namespace raus {

std::vector<ParentRef> prior_parents(const TwoSliceStructure& s, int node) {
  std::vector<int> intra = s.intra_parents[node];
  std::sort(intra.begin(), intra.end());
  std::vector<ParentRef> out;
  for (int p : intra) out.push_back({p, 0});
  return out;
}

std::vector<ParentRef> transition_parents(const TwoSliceStructure& s, int node) {
  std::vector<ParentRef> out = prior_parents(s, node);
  std::vector<int> inter = s.inter_parents(node);
  std::sort(inter.begin(), inter.end());
  inter.erase(std::unique(inter.begin(), inter.end()), inter.end());
  for (int p : inter) out.push_back({p, 1});
  return out;
}

namespace {

Cpt uniform_cpt(const TwoSliceStructure& s, int node, std::vector<ParentRef> parents) {
  Cpt cpt;
  cpt.node = node;
  cpt.cardinality = s.cards[node];
  cpt.parents = std::move(parents);
  std::size_t rows = 1;
  for (const auto& p : cpt.parents) {
    cpt.parent_cards.push_back(s.cards[p.node]);
    rows *= static_cast<std::size_t>(s.cards[p.node]);
  }
  cpt.table.assign(rows * cpt.cardinality, 1.0 / cpt.cardinality);
  return cpt;
}

}  // namespace

CptSet make_uniform_cpts(const TwoSliceStructure& s, double pseudocount) {
  CptSet set;
  set.pseudocount = pseudocount;
  for (int v = 0; v < static_cast<int>(s.size()); ++v) {
    set.prior.push_back(uniform_cpt(s, v, prior_parents(s, v)));
    set.transition.push_back(uniform_cpt(s, v, transition_parents(s, v)));
  }
  return set;
}

bool SequenceData::complete() const {
  return std::none_of(values.begin(), values.end(), [](int x) { return x == kMissing; });
}

namespace {

// Panel column per structure node, -1 for the target (read from labels).
std::vector<int> node_columns(const DiscretePanel& panel, const TwoSliceStructure& s) {
  std::vector<int> cols;
  for (int v = 0; v < static_cast<int>(s.size()); ++v) {
    if (v == s.target) {
      cols.push_back(-1);
      continue;
    }
    auto idx = panel.variable_index(s.nodes[v]);
    if (!idx) throw Error(ErrorCode::kSchema, "structure node '" + s.nodes[v] + "' not in panel");
    cols.push_back(static_cast<int>(*idx));
  }
  return cols;
}

}  // namespace

SequenceData make_sequences(const DiscretePanel& panel, const TwoSliceStructure& s,
                            std::span<const std::size_t> rows) {
  const auto cols = node_columns(panel, s);
  SequenceData data;
  data.width = static_cast<int>(s.size());
  data.horizon = panel.horizon;
  data.values.reserve(rows.size() * panel.horizon * s.size());
  for (std::size_t subject : rows)
    for (int t = 0; t < panel.horizon; ++t)
      for (int c : cols) data.values.push_back(c < 0 ? panel.label(subject, t) : panel.cell(subject, c, t));
  return data;
}

SequenceData make_sequences(const DiscretePanel& panel, const TwoSliceStructure& s) {
  std::vector<std::size_t> rows(panel.subjects());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return make_sequences(panel, s, rows);
}

SequenceData make_static_rows(const DiscretePanel& panel, const TwoSliceStructure& s,
                              std::span<const RankRow> rows, int lookahead, TargetMode mode) {
  const auto cols = node_columns(panel, s);
  SequenceData data;
  data.width = static_cast<int>(s.size());
  data.horizon = 1;
  data.values.reserve(rows.size() * s.size());
  for (const RankRow& r : rows)
    for (int c : cols)
      data.values.push_back(c < 0 ? panel.target(r.subject, r.timestep, lookahead, mode)
                                  : panel.cell(r.subject, c, r.timestep));
  return data;
}

UnrolledNet UnrolledNet::unroll(const TwoSliceStructure& s, int slices) {
  validate(s);
  UnrolledNet net;
  net.slices = slices;
  net.width = static_cast<int>(s.size());
  for (int t = 0; t < slices; ++t) {
    for (int v = 0; v < net.width; ++v) {
      net.cards.push_back(s.cards[v]);
      std::vector<int> ps;
      for (const ParentRef& p : t == 0 ? prior_parents(s, v) : transition_parents(s, v))
        ps.push_back(net.id(t - p.lag, p.node));
      net.parents.push_back(std::move(ps));
    }
  }
  return net;
}

}  // namespace raus
