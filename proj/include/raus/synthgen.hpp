#pragma once

#include <cstdint>
#include <vector>

#include "raus/model.hpp"
#include "raus/rng.hpp"

namespace raus {

struct GeneratorSpec {
  TwoSliceStructure structure;
  CptSet cpts;
  std::size_t subjects = 1000;
  int horizon = 7;
  double missing_rate = 0.0;  // MCAR per feature cell, never applied to labels
  std::uint64_t seed = 0;
};

void validate(const GeneratorSpec& spec);

// Ancestral sampling slice by slice; subject s uses its own substream.
SequenceData sample_sequences(const GeneratorSpec& spec);

// Features become panel variables in structure order and the target node
// becomes the label.
DiscretePanel sample_panel(const GeneratorSpec& spec);
DiscretePanel to_panel(const SequenceData& data, const TwoSliceStructure& structure);

// Eight features and a binary "event" target. Every CPT row has a peak of
// at least 0.85; each node has one inter-slice parent (mostly itself).
GeneratorSpec default_generator(std::size_t subjects, int horizon, double missing_rate, std::uint64_t seed);

struct RandomStructureOptions {
  int nodes = 5;
  int max_card = 2;
  int max_parents = 2;
  int max_inter_parents = 1;
  double edge_probability = 0.5;
};

// Random stationary structure whose intra edges follow node index order; the
// last node is the target.
TwoSliceStructure random_structure(Rng& rng, const RandomStructureOptions& options);

// Random CPT rows; with min_peak > 0 one entry per row gets at least that mass.
CptSet random_cpts(Rng& rng, const TwoSliceStructure& structure, double min_peak = 0.0,
                   double pseudocount = 1.0);

}  // namespace raus
