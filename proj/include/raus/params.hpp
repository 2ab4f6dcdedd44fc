#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raus/inference.hpp"
#include "raus/model.hpp"

namespace raus {

// Sufficient statistics shaped like a CptSet's tables.
struct CountSet {
  std::vector<std::vector<double>> prior;
  std::vector<std::vector<double>> transition;
};

// Counts of families fully observed in `data` (available-case tabulation).
CountSet tabulate(const TwoSliceStructure& structure, const SequenceData& data);

// Row = (count + alpha) / (row total + alpha * r); rows with no mass are uniform.
CptSet normalize_counts(const TwoSliceStructure& structure, const CountSet& counts, double pseudocount);

CptSet mle_fit(const TwoSliceStructure& structure, const SequenceData& data, double pseudocount = 1.0);

enum class EmStop { kConverged, kMaxIterations };
std::string to_string(EmStop stop);

struct EmOptions {
  double pseudocount = 1.0;
  double tolerance = 1e-4;  // relative change of the observed-data log-likelihood
  int max_iterations = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t max_clique_states = kDefaultCliqueCap;
};

struct EmTrace {
  int iterations = 0;
  // loglik[0] is the initial model; loglik[i] follows the i-th M-step.
  std::vector<double> loglik;
  // loglik plus the Dirichlet log prior; the quantity EM ascends when the
  // pseudocount is positive.
  std::vector<double> log_posterior;
  bool converged = false;
  double tolerance = 0.0;
  EmStop stop = EmStop::kMaxIterations;
};

struct EmResult {
  CptSet cpts;
  EmTrace trace;
};

EmResult em_fit(const TwoSliceStructure& structure, const SequenceData& data, const EmOptions& options = {});

// Sum over all table entries of pseudocount * log(theta).
double log_prior(const CptSet& cpts);

// Sum over subjects of log P(observed cells).
double observed_loglik(const TwoSliceStructure& structure, const CptSet& cpts, const SequenceData& data,
                       std::size_t max_clique_states = kDefaultCliqueCap);

}  // namespace raus
