#include "raus/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "raus/parallel.hpp"
#include "raus/rng.hpp"

namespace raus {

namespace {

void check_scored(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size())
    throw Error(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isnan(s.scores[i])) throw Error(ErrorCode::kInvalidArgument, "NaN score");
    if (s.labels[i] != 0 && s.labels[i] != 1) throw Error(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
  }
}

// Distinct scores in descending order with the positives and negatives at
// each score.
struct Cut {
  double score;
  std::int64_t pos = 0;
  std::int64_t neg = 0;
};

std::vector<Cut> descending_cuts(const ScoredSet& s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
  std::vector<Cut> cuts;
  for (std::size_t i : order) {
    if (cuts.empty() || cuts.back().score != s.scores[i]) cuts.push_back({s.scores[i]});
    (s.labels[i] ? cuts.back().pos : cuts.back().neg) += 1;
  }
  return cuts;
}

double ratio(std::int64_t num, std::int64_t den) {
  return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

bool two_classes(const ScoredSet& s) {
  bool pos = false, neg = false;
  for (int y : s.labels) (y ? pos : neg) = true;
  return pos && neg;
}

}  // namespace

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

double roc_auc(const ScoredSet& s) {
  check_scored(s);
  const auto p = static_cast<std::int64_t>(s.positives());
  const auto n = static_cast<std::int64_t>(s.size()) - p;
  if (p == 0 || n == 0) throw Error(ErrorCode::kUndefinedMetric, "AUC needs both classes");
  // Twice the concordance count: each tied pair counts 1, each ordered pair 2.
  std::int64_t twice = 0, neg_below = 0;
  auto cuts = descending_cuts(s);
  for (auto it = cuts.rbegin(); it != cuts.rend(); ++it) {
    twice += 2 * it->pos * neg_below + it->pos * it->neg;
    neg_below += it->neg;
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

double average_precision(const ScoredSet& s) {
  check_scored(s);
  const auto p = static_cast<std::int64_t>(s.positives());
  if (p == 0) throw Error(ErrorCode::kUndefinedMetric, "AP needs at least one positive");
  double ap = 0.0;
  std::int64_t tp = 0, fp = 0;
  for (const Cut& c : descending_cuts(s)) {
    tp += c.pos;
    fp += c.neg;
    if (c.pos > 0)
      ap += (static_cast<double>(c.pos) / static_cast<double>(p)) *
            (static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  return ap;
}

double ConfusionMatrix::precision() const { return ratio(tp, tp + fp); }
double ConfusionMatrix::recall() const { return ratio(tp, tp + fn); }
double ConfusionMatrix::tnr() const { return ratio(tn, tn + fp); }
double ConfusionMatrix::npv() const { return ratio(tn, tn + fn); }
double ConfusionMatrix::fnr() const { return ratio(fn, fn + tp); }

ConfusionMatrix confusion_at_threshold(const ScoredSet& s, double thr) {
  check_scored(s);
  ConfusionMatrix m;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool predicted = s.scores[i] >= thr;
    if (s.labels[i])
      (predicted ? m.tp : m.fn) += 1;
    else
      (predicted ? m.fp : m.tn) += 1;
  }
  return m;
}

OperatingPoint threshold_for_precision(const ScoredSet& s, double target) {
  check_scored(s);
  if (!(target > 0.0 && target <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "target precision must lie in (0, 1]");
  const auto p = static_cast<std::int64_t>(s.positives());
  const auto n = static_cast<std::int64_t>(s.size()) - p;

  OperatingPoint best;
  best.target = target;
  best.matrix = {0, 0, n, p};
  bool have_reachable = false, have_any = false;
  std::int64_t tp = 0, fp = 0;
  // Cuts are visited from the highest threshold down, so on equal
  // (recall, precision) the earlier, higher threshold is kept.
  for (const Cut& c : descending_cuts(s)) {
    tp += c.pos;
    fp += c.neg;
    ConfusionMatrix m{tp, fp, n - fp, p - tp};
    const double prec = m.precision(), rec = m.recall();
    const double best_prec = best.matrix.precision(), best_rec = best.matrix.recall();
    if (prec >= target) {
      if (!have_reachable || rec > best_rec || (rec == best_rec && prec > best_prec)) {
        best.threshold = c.score;
        best.matrix = m;
        have_reachable = true;
      }
    } else if (!have_reachable) {
      if (!have_any || prec > best_prec || (prec == best_prec && rec > best_rec)) {
        best.threshold = c.score;
        best.matrix = m;
      }
    }
    have_any = true;
  }
  best.reachable = have_reachable;
  return best;
}

std::vector<CurvePoint> roc_curve(const ScoredSet& s) {
  check_scored(s);
  const auto p = static_cast<std::int64_t>(s.positives());
  const auto n = static_cast<std::int64_t>(s.size()) - p;
  std::vector<CurvePoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::int64_t tp = 0, fp = 0;
  for (const Cut& c : descending_cuts(s)) {
    tp += c.pos;
    fp += c.neg;
    out.push_back({c.score, ratio(fp, n), ratio(tp, p)});
  }
  return out;
}

std::vector<CurvePoint> pr_curve(const ScoredSet& s) {
  check_scored(s);
  const auto p = static_cast<std::int64_t>(s.positives());
  std::vector<CurvePoint> out;
  std::int64_t tp = 0, fp = 0;
  for (const Cut& c : descending_cuts(s)) {
    tp += c.pos;
    fp += c.neg;
    out.push_back({c.score, ratio(tp, p), ratio(tp, tp + fp)});
  }
  return out;
}

Interval bootstrap_ci(const MetricFn& metric, const ScoredSet& s, int replicates, std::uint64_t seed,
                      int threads, double level) {
  check_scored(s);
  if (replicates < 1) throw Error(ErrorCode::kInvalidArgument, "bootstrap needs at least one replicate");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::kInvalidArgument, "confidence level must lie in (0, 1)");
  Interval out;
  out.point = metric(s);

  const std::size_t b_count = static_cast<std::size_t>(replicates);
  std::vector<double> values(b_count);
  std::vector<std::size_t> degenerate(b_count, 0);
  parallel_for(b_count, threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, {b}));
    ScoredSet r;
    r.scores.resize(s.size());
    r.labels.resize(s.size());
    // More than B redraws in one replicate already exceeds the global limit.
    while (degenerate[b] <= b_count) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t k = rng.index(s.size());
        r.scores[i] = s.scores[k];
        r.labels[i] = s.labels[k];
      }
      if (two_classes(r)) {
        values[b] = metric(r);
        return;
      }
      ++degenerate[b];
    }
  });
  out.degenerate = std::accumulate(degenerate.begin(), degenerate.end(), std::size_t{0});
  if (out.degenerate > b_count)
    throw Error(ErrorCode::kUnstableBootstrap, std::to_string(out.degenerate) + " single-class resamples for " +
                                                   std::to_string(replicates) + " replicates");
  std::sort(values.begin(), values.end());
  const double tail = (1.0 - level) / 2.0;
  out.lo = std::min(quantile_linear(values, tail), out.point);
  out.hi = std::max(quantile_linear(values, 1.0 - tail), out.point);
  return out;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> strata, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "cross-validation needs at least 2 folds");
  if (strata.size() < static_cast<std::size_t>(k))
    throw Error(ErrorCode::kInvalidArgument, "fewer subjects than folds");
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (int stratum : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < strata.size(); ++i)
      if (strata[i] == stratum) members.push_back(i);
    Rng rng(derive_seed(seed, {hash_label("folds"), static_cast<std::uint64_t>(stratum)}));
    rng.shuffle(members);
    for (std::size_t m : members) folds[next++ % k].push_back(m);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

const char* to_string(SelectionCriterion c) {
  switch (c) {
    case SelectionCriterion::kFinalAp: return "final_ap";
    case SelectionCriterion::kMeanAp: return "mean_ap";
    case SelectionCriterion::kFinalAuc: return "final_auc";
  }
  return "?";
}

SelectionCriterion parse_selection_criterion(const std::string& name) {
  for (auto c : {SelectionCriterion::kFinalAp, SelectionCriterion::kMeanAp, SelectionCriterion::kFinalAuc})
    if (name == to_string(c)) return c;
  throw Error(ErrorCode::kConfig, "unknown selection criterion '" + name + "'");
}

double selection_value(const EvalReport& report, SelectionCriterion criterion) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (report.failed) return nan;
  const bool use_auc = criterion == SelectionCriterion::kFinalAuc;
  double sum = 0.0, last = nan;
  int count = 0;
  for (const auto& ts : report.timesteps) {
    const auto& metric = use_auc ? ts.auc : ts.ap;
    if (!metric) continue;
    last = metric->point;
    sum += metric->point;
    ++count;
  }
  if (criterion == SelectionCriterion::kMeanAp) return count ? sum / count : nan;
  return last;
}

std::vector<std::size_t> select_models(std::span<const EvalReport> reports, SelectionCriterion criterion) {
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return static_cast<int>(reports[a].method) < static_cast<int>(reports[b].method);
  });
  std::vector<double> value(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) value[i] = selection_value(reports[i], criterion);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool na = std::isnan(value[a]), nb = std::isnan(value[b]);
    if (na != nb) return nb;
    return !na && value[a] > value[b];
  });
  return order;
}

CaseAgreement case_agreement(std::span<const WindowOutcomes> windows) {
  const std::size_t m = windows.size();
  if (m == 0 || m > 16) throw Error(ErrorCode::kInvalidArgument, "case agreement needs 1 to 16 windows");
  CaseAgreement out;

  // Regions with >= 2 members, larger first, members in window order.
  std::vector<unsigned> masks;
  for (unsigned mask = 1; mask < (1u << m); ++mask)
    if (std::popcount(mask) >= 2) masks.push_back(mask);
  auto lex = [&](unsigned mask) {
    std::vector<std::size_t> members;
    for (std::size_t w = 0; w < m; ++w)
      if (mask >> w & 1u) members.push_back(w);
    return members;
  };
  std::stable_sort(masks.begin(), masks.end(), [&](unsigned a, unsigned b) {
    if (std::popcount(a) != std::popcount(b)) return std::popcount(a) > std::popcount(b);
    return lex(a) < lex(b);
  });

  using Sets = std::vector<std::string> WindowOutcomes::*;
  const std::pair<const char*, Sets> classes[] = {
      {"TP", &WindowOutcomes::tp}, {"FN", &WindowOutcomes::fn}, {"FP", &WindowOutcomes::fp}};
  for (const auto& [name, member] : classes) {
    std::map<std::string, unsigned> membership;
    for (std::size_t w = 0; w < m; ++w)
      for (const auto& key : windows[w].*member) membership[key] |= 1u << w;
    std::map<unsigned, std::size_t> counts;
    for (const auto& [key, mask] : membership) ++counts[std::popcount(mask) >= 2 ? mask : 0u];
    const double total = static_cast<double>(membership.size());
    auto emit = [&](const std::string& region, std::size_t count) {
      out.regions.push_back({name, region, count, total > 0 ? 100.0 * count / total : 0.0});
    };
    for (unsigned mask : masks) {
      std::string label;
      for (std::size_t w : lex(mask)) label += (label.empty() ? "" : "&") + std::to_string(windows[w].window);
      emit(label, counts[mask]);
    }
    emit("None", counts[0u]);
  }

  std::vector<std::size_t> by_window(m);
  std::iota(by_window.begin(), by_window.end(), 0);
  std::stable_sort(by_window.begin(), by_window.end(),
                   [&](std::size_t a, std::size_t b) { return windows[a].window > windows[b].window; });
  for (std::size_t a : by_window)
    for (std::size_t b : by_window) {
      if (windows[b].window >= windows[a].window) continue;
      std::set<std::string> caught(windows[b].tp.begin(), windows[b].tp.end());
      std::set<std::string> missed(windows[a].fn.begin(), windows[a].fn.end());
      EarlyTruePositive e{windows[a].window, windows[b].window, missed.size(), 0, std::nullopt};
      for (const auto& key : missed) e.caught += caught.count(key);
      if (e.missed) e.percent = 100.0 * static_cast<double>(e.caught) / static_cast<double>(e.missed);
      out.etp.push_back(e);
    }
  return out;
}

DistributionShift compare_distributions(std::span<const int> categories, int cardinality,
                                        std::span<const std::uint8_t> in_group) {
  if (categories.size() != in_group.size())
    throw Error(ErrorCode::kInvalidArgument, "categories and group mask differ in length");
  std::vector<int> group(in_group.begin(), in_group.end());
  for (int& g : group) g = g ? 1 : 0;
  ContingencyTable table = ContingencyTable::from_pairs(categories, cardinality, group, 2);
  ContingencyTable compact = table.compact();
  DistributionShift out;
  if (compact.rows < 2 || compact.cols < 2) {
    out.degenerate = true;
    return out;
  }
  out.effect = cramers_v(table);
  out.p_value = chi_squared(table).p_value;
  return out;
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

namespace {

std::string format_tolerance(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

LogisticModel fit_logistic(std::span<const double> x, std::size_t columns, std::span<const int> y,
                           const LogisticOptions& options) {
  const std::size_t n = y.size();
  if (x.size() != n * columns) throw Error(ErrorCode::kInvalidArgument, "design matrix shape mismatch");
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "logistic regression on no rows");
  if (options.l2 < 0.0) throw Error(ErrorCode::kInvalidArgument, "l2 strength must be non-negative");
  const Eigen::Index d = static_cast<Eigen::Index>(columns) + 1;
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), d);
  Eigen::VectorXd target(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    for (std::size_t c = 0; c < columns; ++c) design(r, static_cast<Eigen::Index>(c) + 1) = x[i * columns + c];
    target(r) = y[i];
  }
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d, options.l2);
  penalty(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& w) {
    Eigen::VectorXd z = design * w;
    double f = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) f += softplus(z(i)) - target(i) * z(i);
    return f + 0.5 * (penalty.array() * w.array().square()).sum();
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double f = objective(w);
  LogisticModel model;
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    Eigen::VectorXd z = design * w;
    Eigen::VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Eigen::VectorXd grad = design.transpose() * (p - target) + penalty.cwiseProduct(w);
    if (grad.norm() < options.gradient_tolerance) {
      model.iterations = iter;
      model.weights.assign(w.data(), w.data() + d);
      return model;
    }
    if (iter == options.max_iterations) break;
    Eigen::VectorXd curvature = p.array() * (1.0 - p.array());
    Eigen::MatrixXd hessian = design.transpose() * curvature.asDiagonal() * design;
    hessian.diagonal() += penalty;
    Eigen::VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) break;
    // Backtracking on the objective.
    double t = 1.0;
    const double slope = grad.dot(step);
    Eigen::VectorXd candidate = w - step;
    double fc = objective(candidate);
    // Near the optimum the decrease drowns in rounding; keep the Newton step.
    if (slope <= 1e-12 * (1.0 + std::abs(f))) {
      w = candidate;
      f = fc;
      continue;
    }
    while (fc > f - 1e-4 * t * slope && t > 1e-10) {
      t *= 0.5;
      candidate = w - t * step;
      fc = objective(candidate);
    }
    if (!(fc <= f)) break;
    w = candidate;
    f = fc;
  }
  throw Error(ErrorCode::kConvergenceFailure, "logistic regression did not reach gradient norm " +
                                                  format_tolerance(options.gradient_tolerance) + " in " +
                                                  std::to_string(options.max_iterations) + " iterations");
}

double predict_logistic(const LogisticModel& model, std::span<const double> row) {
  if (row.size() + 1 != model.weights.size()) throw Error(ErrorCode::kInvalidArgument, "feature count mismatch");
  double z = model.weights[0];
  for (std::size_t c = 0; c < row.size(); ++c) z += model.weights[c + 1] * row[c];
  return 1.0 / (1.0 + std::exp(-z));
}

BaselineResult logistic_baseline(const DiscretePanel& train, const DiscretePanel& test, int lookahead,
                                 const LogisticOptions& options, TargetMode mode) {
  if (train.variables != test.variables || train.horizon != test.horizon)
    throw Error(ErrorCode::kInvalidArgument, "train and test panels differ in layout");
  if (lookahead < 1 || lookahead >= train.horizon)
    throw Error(ErrorCode::kInvalidArgument, "lookahead must lie in [1, horizon)");
  const std::size_t nv = train.num_variables();
  std::vector<std::size_t> offset(nv + 1, 0);
  for (std::size_t v = 0; v < nv; ++v) offset[v + 1] = offset[v] + std::max(0, train.cardinalities[v] - 1);
  const std::size_t columns = offset[nv];

  BaselineResult out;
  out.test_rows.resize(test.subjects());
  std::iota(out.test_rows.begin(), out.test_rows.end(), 0);

  for (int t = 0; t + lookahead <= train.horizon - 1; ++t) {
    std::vector<int> mode_of(nv, 0);
    for (std::size_t v = 0; v < nv; ++v) {
      std::vector<std::size_t> counts(train.cardinalities[v], 0);
      for (std::size_t s = 0; s < train.subjects(); ++s)
        if (int c = train.cell(s, v, t); c != kMissing) ++counts[c];
      mode_of[v] = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    auto encode = [&](const DiscretePanel& p, std::size_t s, std::vector<double>& x) {
      for (std::size_t v = 0; v < nv; ++v) {
        int c = p.cell(s, v, t);
        if (c == kMissing) c = mode_of[v];
        if (c > 0) x[offset[v] + c - 1] = 1.0;
      }
    };
    std::vector<double> x(train.subjects() * columns, 0.0);
    std::vector<int> y(train.subjects());
    for (std::size_t s = 0; s < train.subjects(); ++s) {
      std::vector<double> row(columns, 0.0);
      encode(train, s, row);
      std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(s * columns));
      y[s] = train.target(s, t, lookahead, mode);
    }
    const auto cases = std::count(y.begin(), y.end(), 1);
    if (cases == 0 || cases == static_cast<std::ptrdiff_t>(y.size())) {
      out.notes.push_back("timestep " + std::to_string(t) + " skipped: single-class training rows");
      continue;
    }
    LogisticModel model = fit_logistic(x, columns, y, options);
    ScoredSet scored;
    for (std::size_t s = 0; s < test.subjects(); ++s) {
      std::vector<double> row(columns, 0.0);
      encode(test, s, row);
      scored.add(predict_logistic(model, row), test.target(s, t, lookahead, mode));
    }
    out.timesteps.push_back(t);
    out.scored.push_back(std::move(scored));
  }
  return out;
}

EventFlow event_flow(const DiscretePanel& panel) {
  EventFlow flow;
  const int T = panel.horizon;
  flow.events.assign(T, 0);
  flow.non_events.assign(T, 0);
  flow.transitions.assign(T > 0 ? T - 1 : 0, {0, 0, 0, 0});
  for (std::size_t s = 0; s < panel.subjects(); ++s)
    for (int t = 0; t < T; ++t) {
      const int y = panel.label(s, t);
      (y == 1 ? flow.events : flow.non_events)[t] += 1;
      if (t + 1 < T) flow.transitions[t][2 * (y == 1) + (panel.label(s, t + 1) == 1)] += 1;
    }
  return flow;
}

}  // namespace raus
