#include "raus/synthgen.hpp"

#include <cmath>
#include <algorithm>
#include <string>

namespace raus {

void validate(const GeneratorSpec& spec) {
  validate(spec.structure);
  if (spec.horizon < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be positive");
  if (!(spec.missing_rate >= 0.0 && spec.missing_rate < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "missing rate must lie in [0, 1)");
  const auto& s = spec.structure;
  auto check = [&](const std::vector<Cpt>& cpts, bool transition) {
    if (cpts.size() != s.size()) throw Error(ErrorCode::kInvalidArgument, "CPT count does not match the structure");
    for (int v = 0; v < static_cast<int>(s.size()); ++v) {
      const Cpt& c = cpts[v];
      if (c.parents != (transition ? transition_parents(s, v) : prior_parents(s, v)) ||
          c.cardinality != s.cards[v])
        throw Error(ErrorCode::kInvalidArgument, "CPT of " + s.nodes[v] + " does not match the structure");
      std::size_t rows = 1;
      for (int pc : c.parent_cards) rows *= static_cast<std::size_t>(pc);
      if (c.table.size() != rows * c.cardinality)
        throw Error(ErrorCode::kInvalidArgument, "CPT of " + s.nodes[v] + " has the wrong size");
      for (std::size_t r = 0; r < c.rows(); ++r) {
        double total = 0.0;
        for (double p : c.row(r)) {
          if (!(p >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative probability in " + s.nodes[v]);
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-9)
          throw Error(ErrorCode::kInvalidArgument, "CPT row of " + s.nodes[v] + " does not sum to 1");
      }
    }
  };
  check(spec.cpts.prior, false);
  check(spec.cpts.transition, true);
}

SequenceData sample_sequences(const GeneratorSpec& spec) {
  validate(spec);
  const UnrolledNet net = UnrolledNet::unroll(spec.structure, spec.horizon);
  // Ancestral order within a slice.
  const int width = net.width;
  std::vector<int> order;
  std::vector<char> placed(width, 0);
  while (static_cast<int>(order.size()) < width)
    for (int v = 0; v < width; ++v) {
      if (placed[v]) continue;
      bool ready = true;
      for (int p : spec.structure.intra_parents[v]) ready = ready && placed[p];
      if (ready) {
        placed[v] = 1;
        order.push_back(v);
      }
    }

  SequenceData data;
  data.width = width;
  data.horizon = spec.horizon;
  data.values.assign(spec.subjects * static_cast<std::size_t>(net.size()), kMissing);
  const std::uint64_t mask_stream = hash_label("mask");
  for (std::size_t s = 0; s < spec.subjects; ++s) {
    Rng rng(derive_seed(spec.seed, {s}));
    int* x = data.values.data() + s * net.size();
    for (int t = 0; t < spec.horizon; ++t)
      for (int v : order) {
        const int var = net.id(t, v);
        std::size_t row = 0;
        for (int p : net.parents[var]) row = row * net.cards[p] + x[p];
        x[var] = rng.categorical(net.cpt(var, spec.cpts).row(row));
      }
  }
  if (spec.missing_rate > 0.0) {
    const int target = spec.structure.target;
    for (std::size_t s = 0; s < spec.subjects; ++s) {
      Rng rng(derive_seed(spec.seed, {mask_stream, s}));
      int* x = data.values.data() + s * net.size();
      for (int var = 0; var < net.size(); ++var)
        if (var % width != target && rng.uniform() < spec.missing_rate) x[var] = kMissing;
    }
  }
  return data;
}

DiscretePanel to_panel(const SequenceData& data, const TwoSliceStructure& structure) {
  DiscretePanel panel;
  panel.horizon = data.horizon;
  std::vector<int> features;
  for (int v = 0; v < data.width; ++v) {
    if (v == structure.target) continue;
    features.push_back(v);
    panel.variables.push_back(structure.nodes[v]);
    panel.cardinalities.push_back(structure.cards[v]);
    std::vector<std::string> labels;
    for (int k = 0; k < structure.cards[v]; ++k) labels.push_back(std::to_string(k));
    panel.category_labels.push_back(std::move(labels));
  }
  const std::size_t n = data.subjects();
  const int digits = std::max<int>(5, static_cast<int>(std::to_string(n).size()));
  for (std::size_t s = 0; s < n; ++s) {
    std::string number = std::to_string(s + 1);
    panel.subject_ids.push_back("S" + std::string(digits - std::min<int>(digits, number.size()), '0') + number);
    for (int t = 0; t < data.horizon; ++t) {
      for (int v : features) panel.cells.push_back(data.at(s, t, v));
      panel.labels.push_back(data.at(s, t, structure.target) == kMissing ? 0 : data.at(s, t, structure.target));
    }
  }
  return panel;
}

DiscretePanel sample_panel(const GeneratorSpec& spec) {
  return to_panel(sample_sequences(spec), spec.structure);
}

namespace {

// Row putting `peak` on `favored` and spreading the rest evenly.
void set_row(Cpt& cpt, std::size_t row, int favored, double peak) {
  const int r = cpt.cardinality;
  for (int k = 0; k < r; ++k)
    cpt.table[row * r + k] = k == favored ? peak : (1.0 - peak) / (r - 1);
}

int parent_value(const Cpt& cpt, std::size_t row, std::size_t which) {
  std::size_t div = 1;
  for (std::size_t k = cpt.parent_cards.size(); k-- > which + 1;) div *= cpt.parent_cards[k];
  return static_cast<int>((row / div) % cpt.parent_cards[which]);
}

}  // namespace

GeneratorSpec default_generator(std::size_t subjects, int horizon, double missing_rate, std::uint64_t seed) {
  // Features x1..x8 then the target. Intra: x2<-x1, x4<-x3, x6<-x5,
  // event<-x2. Inter: self edges, except x8 which follows x7.
  TwoSliceStructure s;
  s.nodes = {"x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "event"};
  s.cards = {3, 2, 3, 2, 2, 3, 2, 2, 2};
  s.intra_parents = {{}, {0}, {}, {2}, {}, {4}, {}, {}, {1}};
  for (int v = 0; v < 9; ++v) s.inter.push_back({v == 7 ? 6 : v, v, 1.0, 0, 1});
  s.target = 8;
  validate(s);

  GeneratorSpec spec;
  spec.structure = s;
  spec.subjects = subjects;
  spec.horizon = horizon;
  spec.missing_rate = missing_rate;
  spec.seed = seed;
  spec.cpts = make_uniform_cpts(s, 1.0);

  // Priors: a mild preference for category 0 (peak 0.85, event prior 0.1).
  for (int v = 0; v < 9; ++v) {
    Cpt& c = spec.cpts.prior[v];
    for (std::size_t row = 0; row < c.rows(); ++row) {
      int favored = c.parents.empty() || v == s.target ? 0 : parent_value(c, row, 0) % c.cardinality;
      set_row(c, row, favored, v == 8 ? 0.9 : 0.85);
    }
  }
  // Transitions: copy the previous-slice parent with probability 0.9; an
  // intra parent sitting in its top category pushes the node to its top.
  // The event is 1 only while both its previous value and x2 are 1.
  for (int v = 0; v < 9; ++v) {
    Cpt& c = spec.cpts.transition[v];
    for (std::size_t row = 0; row < c.rows(); ++row) {
      int favored = 0;
      bool pushed = false;
      for (std::size_t k = 0; k < c.parents.size(); ++k) {
        const int value = parent_value(c, row, k);
        if (c.parents[k].lag == 0)
          pushed = pushed || value == c.parent_cards[k] - 1;
        else
          favored = value % c.cardinality;
      }
      if (v == s.target)
        set_row(c, row, pushed && favored == 1 ? 1 : 0, 0.9);
      else
        set_row(c, row, pushed ? c.cardinality - 1 : favored, 0.9);
    }
  }
  return spec;
}

TwoSliceStructure random_structure(Rng& rng, const RandomStructureOptions& options) {
  TwoSliceStructure s;
  const int n = options.nodes;
  for (int v = 0; v < n; ++v) {
    s.nodes.push_back(v == n - 1 ? "target" : "v" + std::to_string(v));
    s.cards.push_back(v == n - 1 ? 2 : 2 + static_cast<int>(rng.index(options.max_card - 1)));
    std::vector<int> parents;
    for (int p = 0; p < v; ++p)
      if (static_cast<int>(parents.size()) < options.max_parents && rng.bernoulli(options.edge_probability))
        parents.push_back(p);
    s.intra_parents.push_back(std::move(parents));
  }
  for (int v = 0; v < n; ++v) {
    int count = 0;
    for (int p = 0; p < n && count < options.max_inter_parents; ++p)
      if (rng.bernoulli(options.edge_probability / 2)) {
        s.inter.push_back({p, v, 0.0, 0, 1});
        ++count;
      }
  }
  s.target = n - 1;
  validate(s);
  return s;
}

CptSet random_cpts(Rng& rng, const TwoSliceStructure& structure, double min_peak, double pseudocount) {
  CptSet cpts = make_uniform_cpts(structure, pseudocount);
  auto fill = [&](Cpt& c) {
    const int r = c.cardinality;
    for (std::size_t row = 0; row < c.rows(); ++row) {
      double* p = c.table.data() + row * r;
      if (min_peak > 0.0) {
        const int favored = static_cast<int>(rng.index(r));
        const double peak = min_peak + (1.0 - min_peak) * rng.uniform() * 0.5;
        double rest = 0.0;
        std::vector<double> w(r);
        for (int k = 0; k < r; ++k) rest += w[k] = k == favored ? 0.0 : 0.05 + rng.uniform();
        for (int k = 0; k < r; ++k) p[k] = k == favored ? peak : (1.0 - peak) * w[k] / rest;
      } else {
        double total = 0.0;
        for (int k = 0; k < r; ++k) total += p[k] = 0.05 + rng.uniform();
        for (int k = 0; k < r; ++k) p[k] /= total;
      }
    }
  };
  for (auto& c : cpts.prior) fill(c);
  for (auto& c : cpts.transition) fill(c);
  return cpts;
}

}  // namespace raus
