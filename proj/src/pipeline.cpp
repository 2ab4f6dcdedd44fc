#include "raus/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "raus/inference.hpp"
#include "raus/parallel.hpp"
#include "raus/report.hpp"
#include "raus/rng.hpp"

namespace raus {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const char* to_string(BinningMode m) {
  switch (m) {
    case BinningMode::kAuto: return "auto";
    case BinningMode::kIqr: return "iqr";
    case BinningMode::kCategorical: return "categorical";
  }
  return "?";
}

BinningMode parse_binning(const std::string& s) {
  for (auto m : {BinningMode::kAuto, BinningMode::kIqr, BinningMode::kCategorical})
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::kConfig, "unknown binning mode '" + s + "'");
}

TargetMode parse_target_mode(const std::string& s) {
  if (s == "exact") return TargetMode::kExact;
  if (s == "cumulative") return TargetMode::kCumulative;
  throw Error(ErrorCode::kConfig, "unknown target mode '" + s + "'");
}

const char* target_mode_name(TargetMode m) { return m == TargetMode::kExact ? "exact" : "cumulative"; }

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::kConfig, message);
}

std::uint64_t stream(std::uint64_t seed, const char* label, RankMethod method, int lookahead) {
  return derive_seed(seed, {hash_label(label), hash_label(to_string(method)), static_cast<std::uint64_t>(lookahead)});
}

// Integer-coded variables with few distinct values keep their codes.
BinningPolicy binning_policy(const RawPanel& raw, BinningMode mode) {
  BinningPolicy policy = BinningPolicy::defaults(raw);
  if (mode == BinningMode::kIqr) return policy;
  if (mode == BinningMode::kCategorical) {
    policy.fallback = BinningPolicy::Default::kCategorical;
    return policy;
  }
  for (std::size_t v = 0; v < raw.variables.size(); ++v) {
    const std::string& name = raw.variables[v];
    if (policy.fixed.count(name)) continue;
    std::set<double> distinct;
    bool integer = true;
    for (std::size_t s = 0; s < raw.subjects.size() && integer; ++s)
      for (int t = 0; t < raw.horizon; ++t)
        if (const auto& x = raw.value(s, v, t)) {
          if (*x < 0 || std::floor(*x) != *x) {
            integer = false;
            break;
          }
          distinct.insert(*x);
        }
    if (integer && distinct.size() >= 2 && *distinct.rbegin() < 10)
      policy.fixed.emplace(name, categorical_spec(name, static_cast<int>(*distinct.rbegin()) + 1));
  }
  return policy;
}

TwoSliceStructure skeleton(const DiscretePanel& panel, const std::vector<std::string>& features,
                           const std::string& target) {
  TwoSliceStructure s;
  for (const auto& f : features) {
    auto idx = panel.variable_index(f);
    if (!idx) throw Error(ErrorCode::kSchema, "variable '" + f + "' is not in the panel");
    s.nodes.push_back(f);
    s.cards.push_back(panel.cardinalities[*idx]);
  }
  if (panel.variable_index(target))
    throw Error(ErrorCode::kSchema, "target node name '" + target + "' clashes with a panel variable");
  s.nodes.push_back(target);
  s.cards.push_back(2);
  s.intra_parents.assign(s.nodes.size(), {});
  s.target = static_cast<int>(s.nodes.size()) - 1;
  return s;
}

// Stacks slices [first, last) of every sequence as rows over `columns`.
DataMatrix stack_slices(const SequenceData& seq, std::span<const int> columns, std::span<const int> cards,
                        int first, int last) {
  DataMatrix d;
  d.cards.assign(cards.begin(), cards.end());
  d.columns.assign(columns.size(), {});
  for (std::size_t s = 0; s < seq.subjects(); ++s)
    for (int t = first; t < last; ++t)
      for (std::size_t c = 0; c < columns.size(); ++c) d.columns[c].push_back(seq.at(s, t, columns[c]));
  return d;
}

std::vector<std::size_t> balanced_subjects(const BalanceResult& balance) {
  std::vector<std::size_t> rows;
  for (const auto& subset : balance.subsets) rows.insert(rows.end(), subset.subjects.begin(), subset.subjects.end());
  if (rows.empty()) throw Error(ErrorCode::kEmptyStratum, "no prediction timestep has any case");
  return rows;
}

VariableRanking rank_for(const DiscretePanel& train, const BalanceResult& balance, int lookahead,
                         RankMethod method, const RunConfig& config) {
  const auto rows = rank_rows(balance);
  if (rows.empty()) throw Error(ErrorCode::kEmptyStratum, "no balanced rows to rank on");
  VariableRanking ranking = rank_variables(train, rows, lookahead, method, config.selection, config.target_mode);
  if (ranking.selected.empty()) throw Error(ErrorCode::kNoRankableVariables, "selection kept no variables");
  return ranking;
}

EmOptions em_options(const RunConfig& config, RankMethod method, int lookahead, int threads) {
  EmOptions o;
  o.pseudocount = config.pseudocount;
  o.tolerance = config.em_tolerance;
  o.max_iterations = config.em_max_iterations;
  o.seed = stream(config.seed, "em", method, lookahead);
  o.threads = threads;
  return o;
}

struct Scored {
  std::vector<int> timesteps;
  std::vector<ScoredSet> sets;
  std::vector<std::vector<std::string>> keys;
  std::vector<std::vector<std::size_t>> rows;
};

Scored score_model(const ModelFit& model, const DiscretePanel& test, int lookahead, bool static_model,
                   const RunConfig& config, int threads) {
  Scored out;
  const int last = static_model ? 0 : test.horizon - 1 - lookahead;
  const std::size_t n = test.subjects();
  SequenceData seq = make_sequences(test, model.structure);
  const int target = model.structure.target;
  std::vector<std::vector<double>> scores(last + 1, std::vector<double>(n));

  if (static_model) {
    const UnrolledNet net = UnrolledNet::unroll(model.structure, 1);
    parallel_for(n, threads, [&](std::size_t s) {
      auto x = seq.subject(s);
      std::vector<int> evidence(x.begin(), x.begin() + seq.width);
      evidence[target] = kMissing;
      scores[0][s] = query_marginals(net, model.cpts, evidence).probabilities[target][1];
    });
  } else {
    PredictOptions options;
    options.mode = config.target_mode;
    options.past_labels = config.past_labels;
    const Predictor predictor(model.structure, model.cpts, test.horizon, options);
    parallel_for(n, threads, [&](std::size_t s) {
      for (int t = 0; t <= last; ++t) scores[t][s] = predictor.predict(seq.subject(s), t, lookahead);
    });
  }
  for (int t = 0; t <= last; ++t) {
    ScoredSet set;
    std::vector<std::string> keys;
    std::vector<std::size_t> rows;
    for (std::size_t s = 0; s < n; ++s) {
      set.add(scores[t][s], test.target(s, t, lookahead, config.target_mode));
      keys.push_back(test.subject_ids[s] + "@" + std::to_string(t + lookahead));
      rows.push_back(s);
    }
    out.timesteps.push_back(t);
    out.sets.push_back(std::move(set));
    out.keys.push_back(std::move(keys));
    out.rows.push_back(std::move(rows));
  }
  return out;
}

std::optional<Interval> bootstrap_or_note(const MetricFn& fn, const ScoredSet& s, int replicates,
                                          std::uint64_t seed, int threads, std::string& note) {
  try {
    return bootstrap_ci(fn, s, replicates, seed, threads);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnstableBootstrap) throw;
    const double point = fn(s);
    if (!note.empty()) note += "; ";
    note += "bootstrap unstable, interval collapsed to the point estimate";
    return Interval{point, point, point, 0};
  }
}

json settings_json(const RunConfig& config, RankMethod method, int window, int lookahead, bool static_model) {
  return {{"method", to_string(method)},
          {"window", window},
          {"lookahead", lookahead},
          {"model", static_model ? "bn" : "dbn"},
          {"selection", config.selection.to_string()},
          {"alpha", config.alpha},
          {"max_parents", config.max_parents},
          {"max_inter_parents", config.max_inter_parents},
          {"accept_ratio", config.accept_ratio},
          {"fallback_ratio", config.fallback_ratio},
          {"pseudocount", config.pseudocount},
          {"em_tolerance", config.em_tolerance},
          {"em_max_iterations", config.em_max_iterations},
          {"bootstrap", config.bootstrap},
          {"seed", config.seed},
          {"target_mode", target_mode_name(config.target_mode)},
          {"past_labels", config.past_labels},
          {"precision_target", config.precision_target(window)}};
}

const std::vector<std::string> kDeviations{
    "bootstrap resamples subject-timestep rows",
    "operating thresholds searched at observed scores plus +inf; positive iff score >= threshold",
    "bootstrap interval widened to contain the point estimate when percentiles exclude it"};

void remove_quietly(const fs::path& p) {
  std::error_code ec;
  fs::remove_all(p, ec);
}

}  // namespace

double RunConfig::precision_target(int window) const {
  auto it = precision_targets.find(window);
  return it == precision_targets.end() ? default_precision_target : it->second;
}

void validate(const RunConfig& c) {
  require(!c.windows.empty(), "at least one window is required");
  require(c.step_hours > 0, "step_hours must be positive");
  std::set<int> seen;
  for (int w : c.windows) {
    require(w > 0 && w % c.step_hours == 0,
            "window " + std::to_string(w) + " is not a positive multiple of " + std::to_string(c.step_hours) + "h");
    require(seen.insert(w).second, "window " + std::to_string(w) + " listed twice");
  }
  require(!c.methods.empty(), "at least one ranking method is required");
  std::set<RankMethod> methods(c.methods.begin(), c.methods.end());
  require(methods.size() == c.methods.size(), "ranking method listed twice");
  require(c.alpha > 0.0 && c.alpha < 1.0, "alpha must lie in (0, 1)");
  require(c.max_parents >= 0, "max_parents must be non-negative");
  require(c.max_inter_parents >= 1, "max_inter_parents must be at least 1");
  require(c.accept_ratio > 0.0 && c.accept_ratio <= 1.0, "accept_ratio must lie in (0, 1]");
  require(c.fallback_ratio >= 0.0 && c.fallback_ratio <= c.accept_ratio,
          "fallback_ratio must lie in [0, accept_ratio]");
  require(c.pseudocount >= 0.0, "pseudocount must be non-negative");
  require(c.em_tolerance > 0.0, "em_tolerance must be positive");
  require(c.em_max_iterations >= 1, "em_max_iterations must be at least 1");
  require(c.bootstrap >= 1, "bootstrap must be at least 1");
  require(c.split_ratio > 0.0 && c.split_ratio < 1.0, "split_ratio must lie in (0, 1)");
  require(c.folds == 0 || c.folds >= 2, "folds must be 0 or at least 2");
  require(c.threads >= 0, "threads must be non-negative");
  require(c.baseline_l2 >= 0.0, "baseline_l2 must be non-negative");
  require(!(c.static_mode && c.promote_top_bn), "--static and --promote-top-bn are exclusive");
  for (const auto& [w, p] : c.precision_targets) require(p > 0.0 && p <= 1.0, "precision targets must lie in (0, 1]");
  require(c.default_precision_target > 0.0 && c.default_precision_target <= 1.0, "precision target must lie in (0, 1]");
  require(!c.target_name.empty(), "target name must not be empty");
}

RunConfig config_from_json(const std::string& text, RunConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config file: ") + e.what());
  }
  require(j.is_object(), "config file must hold a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "data") c.data = value.get<std::string>();
      else if (key == "out") c.out = value.get<std::string>();
      else if (key == "windows") c.windows = value.get<std::vector<int>>();
      else if (key == "step_hours") c.step_hours = value.get<int>();
      else if (key == "methods") {
        c.methods.clear();
        for (const auto& m : value) c.methods.push_back(parse_rank_method(m.get<std::string>()));
      } else if (key == "selection") c.selection = Selection::parse(value.get<std::string>());
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "max_parents") c.max_parents = value.get<int>();
      else if (key == "max_inter_parents") c.max_inter_parents = value.get<int>();
      else if (key == "accept_ratio") c.accept_ratio = value.get<double>();
      else if (key == "fallback_ratio") c.fallback_ratio = value.get<double>();
      else if (key == "pseudocount") c.pseudocount = value.get<double>();
      else if (key == "em_tolerance") c.em_tolerance = value.get<double>();
      else if (key == "em_max_iterations") c.em_max_iterations = value.get<int>();
      else if (key == "bootstrap") c.bootstrap = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "split_ratio") c.split_ratio = value.get<double>();
      else if (key == "folds") c.folds = value.get<int>();
      else if (key == "threads") c.threads = value.get<int>();
      else if (key == "binning") c.binning = parse_binning(value.get<std::string>());
      else if (key == "target_mode") c.target_mode = parse_target_mode(value.get<std::string>());
      else if (key == "past_labels") c.past_labels = value.get<bool>();
      else if (key == "target_may_parent_features") c.target_may_parent_features = value.get<bool>();
      else if (key == "static") c.static_mode = value.get<bool>();
      else if (key == "promote_top_bn") c.promote_top_bn = value.get<bool>();
      else if (key == "baseline") c.baseline = value.get<bool>();
      else if (key == "baseline_l2") c.baseline_l2 = value.get<double>();
      else if (key == "criterion") c.criterion = parse_selection_criterion(value.get<std::string>());
      else if (key == "precision_targets") {
        c.precision_targets.clear();
        for (const auto& [w, p] : value.items()) c.precision_targets[std::stoi(w)] = p.get<double>();
      } else if (key == "target_name") c.target_name = value.get<std::string>();
      else if (key == "label_column") c.label_column = value.get<std::string>();
      else throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.message());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kConfig, "config file: precision_targets keys must be window hours");
  }
  return c;
}

std::string config_to_json(const RunConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  json targets = json::object();
  for (const auto& [w, p] : c.precision_targets) targets[std::to_string(w)] = p;
  json j{{"data", c.data.filename().string()},
         {"windows", c.windows},
         {"step_hours", c.step_hours},
         {"methods", methods},
         {"selection", c.selection.to_string()},
         {"alpha", c.alpha},
         {"max_parents", c.max_parents},
         {"max_inter_parents", c.max_inter_parents},
         {"accept_ratio", c.accept_ratio},
         {"fallback_ratio", c.fallback_ratio},
         {"pseudocount", c.pseudocount},
         {"em_tolerance", c.em_tolerance},
         {"em_max_iterations", c.em_max_iterations},
         {"bootstrap", c.bootstrap},
         {"seed", c.seed},
         {"split_ratio", c.split_ratio},
         {"folds", c.folds},
         {"binning", to_string(c.binning)},
         {"target_mode", target_mode_name(c.target_mode)},
         {"past_labels", c.past_labels},
         {"target_may_parent_features", c.target_may_parent_features},
         {"static", c.static_mode},
         {"promote_top_bn", c.promote_top_bn},
         {"baseline", c.baseline},
         {"baseline_l2", c.baseline_l2},
         {"criterion", to_string(c.criterion)},
         {"precision_targets", targets},
         {"target_name", c.target_name},
         {"label_column", c.label_column}};
  return j.dump(2);
}

int lookahead_for(const RunConfig& config, int window, int horizon) {
  const int L = window / config.step_hours;
  require(L >= 1 && L < horizon, "window " + std::to_string(window) + "h needs lookahead " + std::to_string(L) +
                                     " but the panel has only " + std::to_string(horizon) + " timesteps");
  return L;
}

int effective_threads(int requested) {
  int n = requested > 0 ? requested : default_threads();
  if (const char* env = std::getenv("RAUS_THREADS")) {
    try {
      int cap = std::stoi(env);
      if (cap > 0) n = std::min(n, cap);
    } catch (const std::exception&) {
    }
  }
  return std::max(1, n);
}

PreparedData prepare_data(const RawPanel& raw, const RunConfig& config) {
  if (!raw.has_labels)
    throw Error(ErrorCode::kSchema, "panel has no '" + config.label_column + "' column; label it first");
  std::vector<int> strata(raw.subjects.size(), 0);
  for (std::size_t s = 0; s < raw.subjects.size(); ++s)
    for (const auto& l : raw.subjects[s].labels)
      if (l && *l == 1) strata[s] = 1;
  std::vector<std::size_t> train_rows, test_rows;
  stratified_partition(strata, config.split_ratio, derive_seed(config.seed, {hash_label("split")}), train_rows,
                       test_rows);
  const RawPanel raw_train = subset_raw(raw, train_rows);
  const RawPanel raw_test = subset_raw(raw, test_rows);

  PreparedData out;
  DiscretizeResult binned = discretize(raw_train, binning_policy(raw_train, config.binning));
  out.specs = binned.specs;
  out.degenerate = binned.degenerate;
  out.significance = significance_filter(binned.panel, config.alpha);
  if (out.significance.retained.empty())
    throw Error(ErrorCode::kNoRankableVariables, "no variable passed the significance filter at alpha " +
                                                     format_number(config.alpha));
  const auto& keep = out.significance.retained;
  out.train = binned.panel.select_variables(keep);
  out.test = apply_bins(raw_test, out.specs).select_variables(keep);
  out.full = apply_bins(raw, out.specs).select_variables(keep);
  return out;
}

ModelFit learn_model(const DiscretePanel& train, const BalanceResult& balance, int lookahead, RankMethod method,
                     const RunConfig& config, int threads) {
  ModelFit fit;
  fit.ranking = rank_for(train, balance, lookahead, method, config);
  const auto& features = fit.ranking.selected;
  TwoSliceStructure base = skeleton(train, features, config.target_name);
  const std::vector<std::size_t> subjects = balanced_subjects(balance);
  const SequenceData seq = make_sequences(train, base, subjects);
  const int width = static_cast<int>(base.size());

  // K2 in ranking order with the target last.
  std::vector<int> all(width);
  std::iota(all.begin(), all.end(), 0);
  fit.intra = k2_search(stack_slices(seq, all, base.cards, 0, seq.horizon), base.nodes, config.max_parents);

  // REVEAL in panel column order so every method sees the same candidates.
  std::vector<int> columns(features.size());
  std::iota(columns.begin(), columns.end(), 0);
  std::sort(columns.begin(), columns.end(), [&](int a, int b) {
    return *train.variable_index(features[a]) < *train.variable_index(features[b]);
  });
  columns.push_back(base.target);
  std::vector<int> cards;
  for (int c : columns) {
    fit.reveal_order.push_back(base.nodes[c]);
    cards.push_back(base.cards[c]);
  }
  RevealOptions reveal;
  reveal.max_inter_parents = config.max_inter_parents;
  reveal.accept_ratio = config.accept_ratio;
  reveal.fallback_ratio = config.fallback_ratio;
  reveal.target = static_cast<int>(columns.size()) - 1;
  reveal.target_may_parent_features = config.target_may_parent_features;
  fit.inter = reveal_search(stack_slices(seq, columns, cards, 0, seq.horizon - 1),
                            stack_slices(seq, columns, cards, 1, seq.horizon), reveal);

  InterEdges remapped = fit.inter;
  for (auto& e : remapped.edges) {
    e.source = columns[e.source];
    e.destination = columns[e.destination];
  }
  fit.structure = assemble_2tbn(fit.intra, remapped, base.cards, config.target_name);
  EmResult em = em_fit(fit.structure, seq, em_options(config, method, lookahead, threads));
  fit.cpts = std::move(em.cpts);
  fit.trace = std::move(em.trace);
  return fit;
}

ModelFit learn_static_model(const DiscretePanel& train, const BalanceResult& balance, int lookahead,
                            RankMethod method, const RunConfig& config, int threads) {
  ModelFit fit;
  fit.ranking = rank_for(train, balance, lookahead, method, config);
  TwoSliceStructure base = skeleton(train, fit.ranking.selected, config.target_name);
  const auto rows = rank_rows(balance);
  const SequenceData seq = make_static_rows(train, base, rows, lookahead, config.target_mode);
  std::vector<int> all(base.size());
  std::iota(all.begin(), all.end(), 0);
  fit.intra = k2_search(stack_slices(seq, all, base.cards, 0, 1), base.nodes, config.max_parents);
  fit.structure = assemble_2tbn(fit.intra, {}, base.cards, config.target_name);
  EmResult em = em_fit(fit.structure, seq, em_options(config, method, lookahead, threads));
  fit.cpts = std::move(em.cpts);
  fit.trace = std::move(em.trace);
  return fit;
}

Evaluation evaluate_model(const ModelFit& model, const DiscretePanel& test, int lookahead, int window,
                          bool static_model, const RunConfig& config, std::uint64_t seed, int threads) {
  Scored scored = score_model(model, test, lookahead, static_model, config, threads);
  Evaluation ev;
  ev.report.method = model.ranking.method;
  ev.report.window = window;
  for (std::size_t i = 0; i < scored.sets.size(); ++i) {
    const ScoredSet& s = scored.sets[i];
    const int t = scored.timesteps[i];
    TimestepMetrics m;
    m.timestep = t;
    m.rows = s.size();
    m.positives = s.positives();
    if (m.positives > 0 && m.positives < m.rows) {
      const auto ts = static_cast<std::uint64_t>(t);
      m.auc = bootstrap_or_note(roc_auc, s, config.bootstrap, derive_seed(seed, {ts, 1}), threads, m.note);
      m.ap = bootstrap_or_note(average_precision, s, config.bootstrap, derive_seed(seed, {ts, 2}), threads, m.note);
    } else {
      m.note = "single class at this timestep; metrics undefined";
    }
    ev.report.timesteps.push_back(m);
    ev.report.operating_points.push_back(threshold_for_precision(s, config.precision_target(window)));
  }
  ev.timesteps = std::move(scored.timesteps);
  ev.scored = std::move(scored.sets);
  ev.keys = std::move(scored.keys);
  ev.rows = std::move(scored.rows);
  return ev;
}

CvResult cross_validate(const PreparedData& data, const RunConfig& config, int threads) {
  CvResult out;
  const DiscretePanel& train = data.train;
  std::vector<int> strata(train.subjects());
  for (std::size_t s = 0; s < train.subjects(); ++s) strata[s] = train.ever_event(s);
  out.folds = stratified_folds(strata, config.folds, derive_seed(config.seed, {hash_label("cv")}));

  struct Job {
    int fold;
    int window;
    RankMethod method;
  };
  std::vector<Job> jobs;
  for (int f = 0; f < config.folds; ++f)
    for (int w : config.windows)
      for (RankMethod m : config.methods) jobs.push_back({f, w, m});
  out.results.resize(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    CvFold& r = out.results[j];
    r.method = job.method;
    r.window = job.window;
    r.fold = job.fold;
    const auto& held = out.folds[job.fold];
    r.validation_subjects = held.size();
    try {
      std::vector<std::size_t> rest;
      for (std::size_t s = 0; s < train.subjects(); ++s)
        if (!std::binary_search(held.begin(), held.end(), s)) rest.push_back(s);
      const DiscretePanel fit_panel = train.subset(rest);
      const DiscretePanel validation = train.subset(held);
      const int L = lookahead_for(config, job.window, train.horizon);
      const auto balance = undersample_balance(
          fit_panel, L, derive_seed(config.seed, {hash_label("cv-balance"), static_cast<std::uint64_t>(job.fold),
                                                  static_cast<std::uint64_t>(L)}),
          config.target_mode);
      const ModelFit model = config.static_mode
                                 ? learn_static_model(fit_panel, balance, L, job.method, config)
                                 : learn_model(fit_panel, balance, L, job.method, config);
      const Scored scored = score_model(model, validation, L, config.static_mode, config, 1);
      const ScoredSet& last = scored.sets.back();
      if (last.positives() > 0 && last.negatives() > 0) {
        r.auc = roc_auc(last);
        r.ap = average_precision(last);
      } else {
        r.note = "single class in the validation fold";
      }
    } catch (const Error& e) {
      r.note = e.what();
    }
  });
  return out;
}

namespace {

struct Job {
  int window = 24;
  int lookahead = 1;
  RankMethod method = RankMethod::kCv;
  bool static_model = false;
  std::string leaf;
};

struct JobResult {
  EvalReport report;
  std::optional<ModelFit> model;
  std::optional<Evaluation> evaluation;
};

void write_leaf_models(const fs::path& dir, const ModelFit& model) {
  write_text(dir / "rankings.csv", ranking_to_csv(model.ranking));
  write_text(dir / "structure.json", structure_to_json(model.structure));
  write_text(dir / "structure.dot", emit_dot(model.structure, model.ranking));
  write_text(dir / "cpts.json", cpts_to_json(model.structure, model.cpts));
}

void write_leaf_curves(const fs::path& dir, const std::vector<int>& timesteps, const std::vector<ScoredSet>& sets,
                       std::span<const OperatingPoint> points) {
  std::vector<std::vector<CurvePoint>> roc, pr;
  for (const auto& s : sets) {
    roc.push_back(roc_curve(s));
    pr.push_back(pr_curve(s));
  }
  write_text(dir / "roc_points.csv", curves_to_csv(timesteps, roc, "fpr", "tpr"));
  write_text(dir / "pr_points.csv", curves_to_csv(timesteps, pr, "recall", "precision"));
  write_text(dir / "operating_points.csv", operating_points_to_csv(timesteps, points));
}

JobResult run_job(const Job& job, const PreparedData& data, const BalanceResult& balance, const RunConfig& config,
                  const fs::path& staging, int threads) {
  JobResult r;
  r.report.method = job.method;
  r.report.window = job.window;
  try {
    ModelFit model = job.static_model ? learn_static_model(data.train, balance, job.lookahead, job.method, config, threads)
                                      : learn_model(data.train, balance, job.lookahead, job.method, config, threads);
    const std::uint64_t seed = stream(config.seed, job.static_model ? "bootstrap-bn" : "bootstrap", job.method,
                                      job.lookahead);
    Evaluation ev = evaluate_model(model, data.test, job.lookahead, job.window, job.static_model, config, seed,
                                   threads);
    const fs::path dir = staging / job.leaf;
    write_leaf_models(dir, model);
    write_leaf_curves(dir, ev.timesteps, ev.scored, ev.report.operating_points);
    r.report = ev.report;
    r.model = std::move(model);
    r.evaluation = std::move(ev);
  } catch (const Error& e) {
    r.report.failed = true;
    r.report.error = e.what();
  }
  return r;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Keys restricted to target timesteps that every window can reach.
WindowOutcomes outcomes_for(const Evaluation& ev, int window, int min_target) {
  WindowOutcomes w;
  w.window = window;
  for (std::size_t i = 0; i < ev.scored.size(); ++i) {
    const ScoredSet& s = ev.scored[i];
    const double thr = ev.report.operating_points[i].threshold;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const std::string& key = ev.keys[i][k];
      const int target_t = std::stoi(key.substr(key.rfind('@') + 1));
      if (target_t < min_target) continue;
      const bool predicted = s.scores[k] >= thr;
      if (s.labels[k] && predicted) w.tp.push_back(key);
      else if (s.labels[k]) w.fn.push_back(key);
      else if (predicted) w.fp.push_back(key);
    }
  }
  return w;
}

std::string percent_field(const std::optional<double>& p) { return p ? format_number(*p) : ""; }

void write_summary(const fs::path& path, const RunConfig& config, const PreparedData& data,
                   const std::vector<EvalReport>& reports, const std::vector<std::string>& leaves,
                   const std::vector<std::size_t>& order, const json& extra) {
  json models = json::array();
  json failed = json::array();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const EvalReport& r = reports[order[k]];
    if (r.failed) {
      failed.push_back({{"method", to_string(r.method)}, {"window", r.window}, {"path", leaves[order[k]]},
                        {"error", r.error}});
      continue;
    }
    const double value = selection_value(r, config.criterion);
    models.push_back({{"rank", r.rank},
                      {"method", to_string(r.method)},
                      {"window", r.window},
                      {"path", leaves[order[k]]},
                      {"value", std::isnan(value) ? json(nullptr) : json(value)}});
  }
  json j;
  j["criterion"] = to_string(config.criterion);
  j["models"] = models;
  j["failed"] = failed;
  j["data"] = {{"train_subjects", data.train.subjects()},
               {"test_subjects", data.test.subjects()},
               {"horizon", data.train.horizon},
               {"retained", data.significance.retained},
               {"degenerate", data.degenerate}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  j["config"] = json::parse(config_to_json(config));
  write_text(path, j.dump(2) + "\n");
}

}  // namespace

RunResult run_pipeline(const RunConfig& config) {
  validate(config);
  require(!config.data.empty(), "--data is required");
  require(!config.out.empty(), "--out is required");
  CsvOptions csv;
  csv.label_column = config.label_column;
  const RawPanel raw = load_panel(config.data, csv);
  std::vector<int> lookaheads;
  for (int w : config.windows) lookaheads.push_back(lookahead_for(config, w, raw.horizon));

  preflight_output_dir(config.out);
  const fs::path staging = config.out / ".staging";
  remove_quietly(staging);
  fs::create_directories(staging);
  try {
    const int threads = effective_threads(config.threads);
    const PreparedData data = prepare_data(raw, config);

    std::vector<BalanceResult> balances;
    for (int L : lookaheads)
      balances.push_back(undersample_balance(data.train, L, derive_seed(config.seed, {hash_label("balance"),
                                                                                      static_cast<std::uint64_t>(L)}),
                                             config.target_mode));

    std::vector<Job> jobs;
    const bool first_static = config.static_mode || config.promote_top_bn;
    for (std::size_t w = 0; w < config.windows.size(); ++w)
      for (RankMethod m : config.methods) {
        const std::string name = config.promote_top_bn ? std::string("bn_") + to_string(m) : to_string(m);
        jobs.push_back({config.windows[w], lookaheads[w], m, first_static,
                        std::to_string(config.windows[w]) + "/" + name});
      }

    auto run_jobs = [&](const std::vector<Job>& batch) {
      std::vector<JobResult> results(batch.size());
      const int inner = std::max(1, threads / static_cast<int>(std::max<std::size_t>(1, batch.size())));
      parallel_for(batch.size(), threads, [&](std::size_t j) {
        const std::size_t w = std::find(config.windows.begin(), config.windows.end(), batch[j].window) -
                              config.windows.begin();
        results[j] = run_job(batch[j], data, balances[w], config, staging, inner);
      });
      return results;
    };
    std::vector<JobResult> results = run_jobs(jobs);

    json extra = json::object();
    if (config.promote_top_bn) {
      // Best static model per window carries its ordering into a DBN.
      std::vector<Job> promoted;
      json picks = json::array();
      for (std::size_t w = 0; w < config.windows.size(); ++w) {
        std::vector<EvalReport> window_reports;
        std::vector<std::size_t> index;
        for (std::size_t j = 0; j < jobs.size(); ++j)
          if (jobs[j].window == config.windows[w]) {
            window_reports.push_back(results[j].report);
            index.push_back(j);
          }
        const auto order = select_models(window_reports, config.criterion);
        const JobResult& best = results[index[order.front()]];
        if (best.report.failed) continue;
        promoted.push_back({config.windows[w], lookaheads[w], best.report.method, false,
                            std::to_string(config.windows[w]) + "/" + to_string(best.report.method)});
        picks.push_back({{"window", config.windows[w]}, {"method", to_string(best.report.method)}});
      }
      auto more = run_jobs(promoted);
      jobs.insert(jobs.end(), promoted.begin(), promoted.end());
      for (auto& r : more) results.push_back(std::move(r));
      extra["promoted"] = picks;
    }

    RunResult run;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      run.reports.push_back(results[j].report);
      run.leaves.push_back(jobs[j].leaf);
    }
    run.order = select_models(run.reports, config.criterion);
    for (std::size_t k = 0; k < run.order.size(); ++k) {
      run.reports[run.order[k]].rank = static_cast<int>(k) + 1;
      results[run.order[k]].report.rank = static_cast<int>(k) + 1;
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const json settings = settings_json(config, jobs[j].method, jobs[j].window, jobs[j].lookahead,
                                          jobs[j].static_model);
      write_text(staging / jobs[j].leaf / "metrics.json",
                 metrics_to_json(run.reports[j], settings.dump(), kDeviations));
    }

    // Case agreement and early true positives per method across windows.
    std::ostringstream agreement, etp, shift;
    agreement << "model,method,metric,region,count,percent\n";
    etp << "model,method,from_window,to_window,missed,caught,percent\n";
    shift << "model,method,window,feature,kind,rows,effect,p_value,note\n";
    const int min_target = *std::max_element(lookaheads.begin(), lookaheads.end());
    for (bool static_model : {true, false})
      for (RankMethod m : config.methods) {
        std::vector<WindowOutcomes> outcomes;
        for (std::size_t j = 0; j < jobs.size(); ++j)
          if (jobs[j].method == m && jobs[j].static_model == static_model && results[j].evaluation)
            outcomes.push_back(outcomes_for(*results[j].evaluation, jobs[j].window, static_model ? 0 : min_target));
        if (outcomes.size() < 2) continue;
        std::sort(outcomes.begin(), outcomes.end(),
                  [](const WindowOutcomes& a, const WindowOutcomes& b) { return a.window < b.window; });
        const CaseAgreement ca = case_agreement(outcomes);
        const char* kind = static_model ? "bn" : "dbn";
        for (const auto& row : ca.regions)
          agreement << kind << ',' << to_string(m) << ',' << row.metric << ',' << row.region << ',' << row.count << ','
                    << format_number(row.percent) << '\n';
        for (const auto& e : ca.etp)
          etp << kind << ',' << to_string(m) << ',' << e.from_window << ',' << e.to_window << ',' << e.missed << ','
              << e.caught << ',' << percent_field(e.percent) << '\n';
      }

    // Feature distributions of caught (TP) versus missed (FN) events.
    const DiscretePanel& test = data.test;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (!results[j].evaluation) continue;
      const Evaluation& ev = *results[j].evaluation;
      std::vector<std::pair<std::size_t, int>> rows;  // (subject, timestep)
      std::vector<std::uint8_t> caught;
      for (std::size_t i = 0; i < ev.scored.size(); ++i)
        for (std::size_t k = 0; k < ev.scored[i].size(); ++k) {
          if (!ev.scored[i].labels[k]) continue;
          rows.emplace_back(ev.rows[i][k], ev.timesteps[i]);
          caught.push_back(ev.scored[i].scores[k] >= ev.report.operating_points[i].threshold);
        }
      const char* kind = jobs[j].static_model ? "bn" : "dbn";
      auto emit = [&](const std::string& feature, const char* feature_kind, const std::vector<int>& cats, int card) {
        shift << kind << ',' << to_string(jobs[j].method) << ',' << jobs[j].window << ',' << feature << ','
              << feature_kind << ',' << rows.size() << ',';
        if (rows.empty()) {
          shift << ",,no events\n";
          return;
        }
        DistributionShift d = compare_distributions(cats, card, caught);
        if (d.degenerate) shift << ",,degenerate\n";
        else shift << format_number(d.effect) << ',' << format_number(d.p_value) << ",\n";
      };
      for (std::size_t v = 0; v < test.num_variables(); ++v) {
        std::vector<int> cats;
        for (auto [s, t] : rows) cats.push_back(test.cell(s, v, t));
        emit(test.variables[v], "temporal", cats, test.cardinalities[v]);
      }
      for (std::size_t k = 0; k < test.static_names.size(); ++k) {
        std::vector<std::string> levels;
        for (std::size_t s = 0; s < test.subjects(); ++s) levels.push_back(test.statics[s * test.static_names.size() + k]);
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        std::vector<int> cats;
        for (auto [s, t] : rows) {
          const std::string& v = test.statics[s * test.static_names.size() + k];
          cats.push_back(v.empty() ? kMissing
                                   : static_cast<int>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin()));
        }
        emit(test.static_names[k], "static", cats, static_cast<int>(levels.size()));
      }
    }
    write_text(staging / "case_agreement.csv", agreement.str());
    write_text(staging / "early_true_positives.csv", etp.str());
    write_text(staging / "distribution_shift.csv", shift.str());

    // Logistic regression baseline per window.
    if (config.baseline) {
      json baselines = json::array();
      for (std::size_t w = 0; w < config.windows.size(); ++w) {
        const fs::path dir = staging / "baselines" / std::to_string(config.windows[w]);
        LogisticOptions lr;
        lr.l2 = config.baseline_l2;
        EvalReport report;
        report.window = config.windows[w];
        std::vector<std::string> deviations = kDeviations;
        try {
          const BaselineResult b = logistic_baseline(data.train, data.test, lookaheads[w], lr, config.target_mode);
          deviations.push_back("missing cells imputed by the " + b.imputation);
          for (const auto& note : b.notes) deviations.push_back(note);
          const std::uint64_t seed = derive_seed(config.seed, {hash_label("baseline"),
                                                               static_cast<std::uint64_t>(lookaheads[w])});
          for (std::size_t i = 0; i < b.scored.size(); ++i) {
            const ScoredSet& s = b.scored[i];
            TimestepMetrics m;
            m.timestep = b.timesteps[i];
            m.rows = s.size();
            m.positives = s.positives();
            if (m.positives > 0 && m.positives < m.rows) {
              const auto ts = static_cast<std::uint64_t>(m.timestep);
              m.auc = bootstrap_or_note(roc_auc, s, config.bootstrap, derive_seed(seed, {ts, 1}), threads, m.note);
              m.ap = bootstrap_or_note(average_precision, s, config.bootstrap, derive_seed(seed, {ts, 2}), threads,
                                       m.note);
            } else {
              m.note = "single class at this timestep; metrics undefined";
            }
            report.timesteps.push_back(m);
            report.operating_points.push_back(threshold_for_precision(s, config.precision_target(report.window)));
          }
          write_leaf_curves(dir, b.timesteps, b.scored, report.operating_points);
        } catch (const Error& e) {
          report.failed = true;
          report.error = e.what();
        }
        json settings{{"model", "logistic_regression"}, {"l2", config.baseline_l2}, {"window", report.window},
                      {"lookahead", lookaheads[w]}};
        std::string text = metrics_to_json(report, settings.dump(), deviations);
        // The method field is meaningless for the baseline.
        json parsed = json::parse(text);
        parsed.erase("method");
        parsed.erase("rank");
        write_text(dir / "metrics.json", parsed.dump(2) + "\n");
        const double value = selection_value(report, config.criterion);
        baselines.push_back({{"window", report.window},
                             {"path", "baselines/" + std::to_string(report.window)},
                             {"value", std::isnan(value) ? json(nullptr) : json(value)},
                             {"failed", report.failed}});
      }
      extra["baselines"] = baselines;
    }

    write_text(staging / "event_flow.csv", event_flow_to_csv(event_flow(data.full)));
    {
      std::ostringstream sig;
      sig << "variable,p_value,retained\n";
      for (const auto& [v, p] : data.significance.p_values) {
        const auto& kept = data.significance.retained;
        sig << v << ',' << format_number(p) << ',' << (std::find(kept.begin(), kept.end(), v) != kept.end() ? "yes" : "no")
            << '\n';
      }
      for (const auto& v : data.degenerate) sig << v << ",,degenerate\n";
      write_text(staging / "significance.csv", sig.str());
    }
    write_text(staging / "bins.json", bins_to_json(data.specs));

    if (config.folds >= 2) {
      const CvResult cv = cross_validate(data, config, threads);
      json folds = json::array();
      for (const auto& f : cv.folds) {
        std::vector<std::string> ids;
        for (auto s : f) ids.push_back(data.train.subject_ids[s]);
        folds.push_back(sorted(ids));
      }
      json results = json::array();
      std::map<std::pair<int, int>, std::vector<double>> auc, ap;
      for (const auto& r : cv.results) {
        results.push_back({{"method", to_string(r.method)},
                           {"window", r.window},
                           {"fold", r.fold},
                           {"validation_subjects", r.validation_subjects},
                           {"auc", r.auc ? json(*r.auc) : json(nullptr)},
                           {"ap", r.ap ? json(*r.ap) : json(nullptr)},
                           {"note", r.note}});
        const auto key = std::make_pair(r.window, static_cast<int>(r.method));
        if (r.auc) auc[key].push_back(*r.auc);
        if (r.ap) ap[key].push_back(*r.ap);
      }
      auto stats = [](const std::vector<double>& v) -> json {
        if (v.empty()) return nullptr;
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        return {{"mean", mean}, {"sd", sd}, {"folds", v.size()}};
      };
      json summary = json::array();
      for (int w : config.windows)
        for (RankMethod m : config.methods) {
          const auto key = std::make_pair(w, static_cast<int>(m));
          summary.push_back({{"method", to_string(m)}, {"window", w}, {"auc", stats(auc[key])}, {"ap", stats(ap[key])}});
        }
      json j{{"k", config.folds}, {"folds", folds}, {"results", results}, {"summary", summary}};
      write_text(staging / "cv.json", j.dump(2) + "\n");
    }

    write_summary(staging / "summary.json", config, data, run.reports, run.leaves, run.order, extra);

    // Publish: replace matching entries in the output folder.
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(staging)) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& e : entries) {
      const fs::path target = config.out / e.filename();
      remove_quietly(target);
      fs::rename(e, target);
    }
    remove_quietly(staging);
    return run;
  } catch (...) {
    remove_quietly(staging);
    throw;
  }
}

void reemit_report(const fs::path& out, SelectionCriterion criterion) {
  if (!fs::is_directory(out)) throw Error(ErrorCode::kIo, out.string() + " is not a folder");
  std::vector<fs::path> leaves;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (e.path().filename() != "metrics.json") continue;
    const fs::path rel = fs::relative(e.path().parent_path(), out);
    if (rel.begin() != rel.end() && *rel.begin() == "baselines") continue;
    leaves.push_back(rel);
  }
  std::sort(leaves.begin(), leaves.end());
  if (leaves.empty()) throw Error(ErrorCode::kIo, "no model folders under " + out.string());

  std::vector<EvalReport> reports;
  std::vector<std::string> names;
  for (const auto& leaf : leaves) {
    const fs::path dir = out / leaf;
    reports.push_back(metrics_from_json(read_text(dir / "metrics.json")));
    names.push_back(leaf.generic_string());
    if (fs::exists(dir / "structure.json") && fs::exists(dir / "rankings.csv")) {
      const TwoSliceStructure s = structure_from_json(read_text(dir / "structure.json"));
      const VariableRanking r = ranking_from_csv(read_text(dir / "rankings.csv"));
      write_text(dir / "structure.dot", emit_dot(s, r));
    }
  }
  const auto order = select_models(reports, criterion);
  json models = json::array();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const EvalReport& r = reports[order[k]];
    if (r.failed) continue;
    const double value = selection_value(r, criterion);
    models.push_back({{"rank", static_cast<int>(k) + 1},
                      {"method", to_string(r.method)},
                      {"window", r.window},
                      {"path", names[order[k]]},
                      {"value", std::isnan(value) ? json(nullptr) : json(value)}});
  }
  json summary = json::object();
  if (fs::exists(out / "summary.json")) {
    try {
      summary = json::parse(read_text(out / "summary.json"));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("summary.json: ") + e.what());
    }
  }
  summary["criterion"] = to_string(criterion);
  summary["models"] = models;
  write_text(out / "summary.json", summary.dump(2) + "\n");
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
      return 2;
    case ErrorCode::kParse:
    case ErrorCode::kSchema:
    case ErrorCode::kDegenerateVariable:
    case ErrorCode::kStratumTooSmall:
    case ErrorCode::kEmptyStratum:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kNoRankableVariables:
    case ErrorCode::kIo:
      return 3;
    default:
      return 1;
  }
}

}  // namespace raus
