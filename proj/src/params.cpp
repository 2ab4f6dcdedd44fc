#include "raus/params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "raus/parallel.hpp"
#include "raus/rng.hpp"

namespace raus {

namespace {

CountSet zero_counts(const CptSet& shape) {
  CountSet c;
  for (const auto& cpt : shape.prior) c.prior.emplace_back(cpt.table.size(), 0.0);
  for (const auto& cpt : shape.transition) c.transition.emplace_back(cpt.table.size(), 0.0);
  return c;
}

std::vector<double>& slot(CountSet& counts, const UnrolledNet& net, int var) {
  return var < net.width ? counts.prior[var] : counts.transition[var % net.width];
}

void add_into(CountSet& into, const CountSet& from) {
  for (std::size_t v = 0; v < into.prior.size(); ++v)
    for (std::size_t i = 0; i < into.prior[v].size(); ++i) into.prior[v][i] += from.prior[v][i];
  for (std::size_t v = 0; v < into.transition.size(); ++v)
    for (std::size_t i = 0; i < into.transition[v].size(); ++i) into.transition[v][i] += from.transition[v][i];
}

// CPT offset of var's family under a full assignment, or npos when any
// member is missing.
std::size_t family_index(const UnrolledNet& net, std::span<const int> x, int var) {
  std::size_t row = 0;
  for (int p : net.parents[var]) {
    if (x[p] == kMissing) return std::string::npos;
    row = row * net.cards[p] + x[p];
  }
  if (x[var] == kMissing) return std::string::npos;
  return row * net.cards[var] + x[var];
}

void check_shape(const TwoSliceStructure& structure, const SequenceData& data) {
  if (data.width != static_cast<int>(structure.size()))
    throw Error(ErrorCode::kInvalidArgument, "sequence width does not match the structure");
  if (data.horizon < 1) throw Error(ErrorCode::kInvalidArgument, "sequences need at least one timestep");
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    int x = data.values[i];
    if (x != kMissing && (x < 0 || x >= structure.cards[i % data.width]))
      throw Error(ErrorCode::kInvalidArgument, "value outside the category range of " +
                                                   structure.nodes[i % data.width]);
  }
}

double complete_loglik(const CountSet& counts, const CptSet& cpts) {
  double ll = 0.0;
  auto add = [&](const std::vector<double>& c, const Cpt& cpt) {
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c[i] > 0.0) {
        if (!(cpt.table[i] > 0.0))
          throw Error(ErrorCode::kInconsistentEvidence, "complete subject has zero probability");
        ll += c[i] * std::log(cpt.table[i]);
      }
  };
  for (std::size_t v = 0; v < counts.prior.size(); ++v) add(counts.prior[v], cpts.prior[v]);
  for (std::size_t v = 0; v < counts.transition.size(); ++v) add(counts.transition[v], cpts.transition[v]);
  return ll;
}

}  // namespace

CountSet tabulate(const TwoSliceStructure& structure, const SequenceData& data) {
  check_shape(structure, data);
  const UnrolledNet net = UnrolledNet::unroll(structure, data.horizon);
  CountSet counts = zero_counts(make_uniform_cpts(structure));
  for (std::size_t s = 0; s < data.subjects(); ++s) {
    auto x = data.subject(s);
    for (int var = 0; var < net.size(); ++var) {
      std::size_t idx = family_index(net, x, var);
      if (idx != std::string::npos) slot(counts, net, var)[idx] += 1.0;
    }
  }
  return counts;
}

CptSet normalize_counts(const TwoSliceStructure& structure, const CountSet& counts, double pseudocount) {
  if (pseudocount < 0.0) throw Error(ErrorCode::kInvalidArgument, "pseudocount must be non-negative");
  CptSet cpts = make_uniform_cpts(structure, pseudocount);
  auto fill = [&](Cpt& cpt, const std::vector<double>& c) {
    const std::size_t r = static_cast<std::size_t>(cpt.cardinality);
    for (std::size_t row = 0; row < cpt.rows(); ++row) {
      double total = 0.0;
      for (std::size_t k = 0; k < r; ++k) total += c[row * r + k];
      const double denom = total + pseudocount * static_cast<double>(r);
      for (std::size_t k = 0; k < r; ++k)
        cpt.table[row * r + k] = denom > 0.0 ? (c[row * r + k] + pseudocount) / denom : 1.0 / r;
    }
  };
  for (std::size_t v = 0; v < cpts.prior.size(); ++v) fill(cpts.prior[v], counts.prior[v]);
  for (std::size_t v = 0; v < cpts.transition.size(); ++v) fill(cpts.transition[v], counts.transition[v]);
  return cpts;
}

CptSet mle_fit(const TwoSliceStructure& structure, const SequenceData& data, double pseudocount) {
  return normalize_counts(structure, tabulate(structure, data), pseudocount);
}

std::string to_string(EmStop stop) {
  return stop == EmStop::kConverged ? "converged" : "max_iterations";
}

double log_prior(const CptSet& cpts) {
  if (cpts.pseudocount <= 0.0) return 0.0;
  double lp = 0.0;
  auto add = [&](const Cpt& cpt) {
    for (double p : cpt.table) lp += cpts.pseudocount * std::log(p);
  };
  for (const auto& c : cpts.prior) add(c);
  for (const auto& c : cpts.transition) add(c);
  return lp;
}

EmResult em_fit(const TwoSliceStructure& structure, const SequenceData& data, const EmOptions& options) {
  check_shape(structure, data);
  if (options.max_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "max_iterations must be positive");
  const UnrolledNet net = UnrolledNet::unroll(structure, data.horizon);
  const double alpha = options.pseudocount;

  // Start from available-case estimates with multiplicative noise of up to 1%.
  // Without a pseudocount the start is still smoothed so that configurations
  // reachable only through incomplete subjects keep positive mass.
  CptSet cpts = mle_fit(structure, data, alpha > 0.0 ? alpha : 1.0);
  cpts.pseudocount = alpha;
  Rng rng(derive_seed(options.seed, {hash_label("em-init")}));
  auto perturb = [&](Cpt& cpt) {
    const std::size_t r = static_cast<std::size_t>(cpt.cardinality);
    for (std::size_t row = 0; row < cpt.rows(); ++row) {
      double total = 0.0;
      for (std::size_t k = 0; k < r; ++k) total += cpt.table[row * r + k] *= 1.0 + 0.01 * (2.0 * rng.uniform() - 1.0);
      for (std::size_t k = 0; k < r; ++k) cpt.table[row * r + k] /= total;
    }
  };
  for (auto& c : cpts.prior) perturb(c);
  for (auto& c : cpts.transition) perturb(c);

  // Complete subjects contribute fixed counts; the rest get a cached query.
  SequenceData complete{data.width, data.horizon, {}};
  std::vector<std::size_t> partial;
  for (std::size_t s = 0; s < data.subjects(); ++s) {
    auto x = data.subject(s);
    bool full = std::none_of(x.begin(), x.end(), [](int v) { return v == kMissing; });
    if (full)
      complete.values.insert(complete.values.end(), x.begin(), x.end());
    else
      partial.push_back(s);
  }
  const CountSet fixed = tabulate(structure, complete);
  std::vector<ReducedQuery> queries;
  queries.reserve(partial.size());
  for (std::size_t s : partial) queries.emplace_back(net, data.subject(s), std::span<const int>{}, false,
                                                     options.max_clique_states);

  constexpr std::size_t kChunk = 32;
  const std::size_t chunks = (queries.size() + kChunk - 1) / kChunk;
  auto e_step = [&](const CptSet& model, CountSet& counts) {
    std::vector<CountSet> partial_counts(chunks, zero_counts(model));
    std::vector<double> partial_ll(chunks, 0.0);
    parallel_for(chunks, options.threads, [&](std::size_t c) {
      const std::size_t end = std::min(queries.size(), (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        ReducedQuery& q = queries[i];
        try {
          partial_ll[c] += q.run(model);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kInconsistentEvidence) throw;
          throw Error(ErrorCode::kInconsistentEvidence,
                      "subject #" + std::to_string(partial[i]) + " has zero probability under the model");
        }
        for (int var = 0; var < net.size(); ++var) {
          auto& target = slot(partial_counts[c], net, var);
          q.family_posterior(var, [&](std::size_t idx, double w) { target[idx] += w; });
        }
      }
    });
    counts = fixed;
    double ll = complete_loglik(fixed, model);
    for (std::size_t c = 0; c < chunks; ++c) {
      add_into(counts, partial_counts[c]);
      ll += partial_ll[c];
    }
    return ll;
  };

  EmResult result;
  EmTrace& trace = result.trace;
  trace.tolerance = options.tolerance;
  CountSet counts;
  double ll = e_step(cpts, counts);
  trace.loglik.push_back(ll);
  trace.log_posterior.push_back(ll + log_prior(cpts));
  for (int it = 1; it <= options.max_iterations; ++it) {
    cpts = normalize_counts(structure, counts, alpha);
    const double next = e_step(cpts, counts);
    trace.iterations = it;
    trace.loglik.push_back(next);
    trace.log_posterior.push_back(next + log_prior(cpts));
    const double change = std::abs(next - ll);
    ll = next;
    if (change <= options.tolerance * std::abs(ll)) {
      trace.converged = true;
      trace.stop = EmStop::kConverged;
      break;
    }
  }
  result.cpts = std::move(cpts);
  return result;
}

double observed_loglik(const TwoSliceStructure& structure, const CptSet& cpts, const SequenceData& data,
                       std::size_t max_clique_states) {
  check_shape(structure, data);
  const UnrolledNet net = UnrolledNet::unroll(structure, data.horizon);
  double ll = 0.0;
  for (std::size_t s = 0; s < data.subjects(); ++s) {
    ReducedQuery q(net, data.subject(s), {}, false, max_clique_states);
    try {
      ll += q.run(cpts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInconsistentEvidence) throw;
      throw Error(ErrorCode::kInconsistentEvidence,
                  "subject #" + std::to_string(s) + " has zero probability under the model");
    }
  }
  return ll;
}

}  // namespace raus
