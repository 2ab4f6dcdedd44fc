#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raus/dataset.hpp"
#include "raus/ranking.hpp"

namespace raus {

// Scores and binary labels for one (model, window, prediction timestep).
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
  std::size_t negatives() const { return size() - positives(); }
  void add(double score, int label) {
    scores.push_back(score);
    labels.push_back(label);
  }
};

// Tie-aware: P(s+ > s-) + P(s+ = s-) / 2. Throws UndefinedMetric for one class.
double roc_auc(const ScoredSet& s);

// Stepwise sum over descending score cut points; tied scores form one cut.
double average_precision(const ScoredSet& s);

struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  // Ratios with an empty denominator are reported as 0.
  double precision() const;
  double recall() const;
  double tnr() const;
  double npv() const;
  double fnr() const;
};

// Positive iff score >= thr.
ConfusionMatrix confusion_at_threshold(const ScoredSet& s, double thr);

struct OperatingPoint {
  double target = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  ConfusionMatrix matrix;
  bool reachable = false;
};

// Searches observed scores plus +inf. When no threshold reaches `target`
// the one with the highest precision below it is returned.
OperatingPoint threshold_for_precision(const ScoredSet& s, double target);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;  // FPR for ROC, recall for PR
  double y = 0.0;  // TPR for ROC, precision for PR
};

std::vector<CurvePoint> roc_curve(const ScoredSet& s);
std::vector<CurvePoint> pr_curve(const ScoredSet& s);

struct Interval {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t degenerate = 0;  // single-class resamples redrawn
};

using MetricFn = std::function<double(const ScoredSet&)>;

// Percentile CI (2.5, 97.5) over B row resamples. Replicate b draws from its
// own substream, so the result does not depend on `threads`.
Interval bootstrap_ci(const MetricFn& metric, const ScoredSet& s, int replicates, std::uint64_t seed,
                      int threads = 1, double level = 0.95);

// Subject-level stratified folds; fold f holds the validation rows.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> strata, int k,
                                                       std::uint64_t seed);

struct TimestepMetrics {
  int timestep = 0;
  std::size_t rows = 0;
  std::size_t positives = 0;
  std::optional<Interval> auc;  // empty when the timestep has a single class
  std::optional<Interval> ap;
  std::string note;
};

struct EvalReport {
  RankMethod method = RankMethod::kCv;
  int window = 24;  // hours
  std::vector<TimestepMetrics> timesteps;
  std::vector<OperatingPoint> operating_points;  // one per timestep
  int rank = 0;
  bool failed = false;
  std::string error;
};

enum class SelectionCriterion { kFinalAp, kMeanAp, kFinalAuc };

const char* to_string(SelectionCriterion c);
SelectionCriterion parse_selection_criterion(const std::string& name);

// Value used for model selection; NaN when the report has no usable metric.
double selection_value(const EvalReport& report, SelectionCriterion criterion);

// Indices of `reports` best first. Stable descending sort; equal values keep
// method order CV, CHI2, IG; failed reports go last.
std::vector<std::size_t> select_models(std::span<const EvalReport> reports, SelectionCriterion criterion);

// Row key sets for one window at its operating point.
struct WindowOutcomes {
  int window = 24;
  std::vector<std::string> tp, fn, fp;
};

struct AgreementRow {
  std::string metric;  // "TP", "FN", "FP"
  std::string region;  // e.g. "24&48&72", "24&72", "None"
  std::size_t count = 0;
  double percent = 0.0;
};

struct EarlyTruePositive {
  int from_window = 0;  // longer window whose false negatives are examined
  int to_window = 0;    // shorter window
  std::size_t missed = 0;
  std::size_t caught = 0;
  std::optional<double> percent;  // undefined when `missed` is 0
};

struct CaseAgreement {
  std::vector<AgreementRow> regions;
  std::vector<EarlyTruePositive> etp;
};

// Venn regions with two or more windows are named by their members; keys
// present in exactly one window fall into "None".
CaseAgreement case_agreement(std::span<const WindowOutcomes> windows);

struct DistributionShift {
  double effect = 0.0;  // Cramer's V of category x group
  double p_value = 1.0;
  bool degenerate = false;
};

// `in_group` marks each observation; missing categories are dropped.
DistributionShift compare_distributions(std::span<const int> categories, int cardinality,
                                        std::span<const std::uint8_t> in_group);

struct LogisticOptions {
  double l2 = 1.0;
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
};

struct LogisticModel {
  std::vector<double> weights;  // weights[0] is the intercept
  int iterations = 0;
};

// Penalized MLE by damped Newton; the intercept is not penalized. `x` is
// row-major with `columns` features and no intercept column.
LogisticModel fit_logistic(std::span<const double> x, std::size_t columns, std::span<const int> y,
                           const LogisticOptions& options = {});
double predict_logistic(const LogisticModel& model, std::span<const double> row);

struct BaselineResult {
  std::vector<int> timesteps;
  std::vector<ScoredSet> scored;       // one per timestep
  std::vector<std::size_t> test_rows;  // test subjects in scoring order
  std::vector<std::string> notes;  // skipped timesteps
  std::string imputation = "per-(variable, timestep) training mode";
};

// One model per prediction timestep t in [0, T - 1 - L] on one-hot encoded
// features at t (reference coding, category 0 dropped).
BaselineResult logistic_baseline(const DiscretePanel& train, const DiscretePanel& test, int lookahead,
                                 const LogisticOptions& options = {},
                                 TargetMode mode = TargetMode::kExact);

struct EventFlow {
  std::vector<std::size_t> events, non_events;
  // transitions[t] = {0->0, 0->1, 1->0, 1->1} between t and t + 1
  std::vector<std::array<std::size_t, 4>> transitions;
};

EventFlow event_flow(const DiscretePanel& panel);

}  // namespace raus
