#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "raus/dataset.hpp"
#include "raus/eval.hpp"
#include "raus/model.hpp"
#include "raus/params.hpp"
#include "raus/ranking.hpp"
#include "raus/structure.hpp"

namespace raus {

enum class BinningMode { kAuto, kIqr, kCategorical };

struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path out;
  std::vector<int> windows{24, 48, 72};  // hours
  int step_hours = 24;
  std::vector<RankMethod> methods{RankMethod::kCv, RankMethod::kChi2, RankMethod::kIg};
  Selection selection = Selection::all();
  double alpha = 0.01;  // significance filter
  int max_parents = 3;
  int max_inter_parents = 2;
  double accept_ratio = 0.9;
  double fallback_ratio = 0.1;
  double pseudocount = 1.0;
  double em_tolerance = 1e-4;
  int em_max_iterations = 100;
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  double split_ratio = 0.7;
  int folds = 0;    // 0 disables cross-validation
  int threads = 0;  // 0 = RAUS_THREADS or hardware concurrency
  BinningMode binning = BinningMode::kAuto;
  TargetMode target_mode = TargetMode::kExact;
  bool past_labels = true;
  bool target_may_parent_features = true;
  bool static_mode = false;
  bool promote_top_bn = false;
  bool baseline = true;
  double baseline_l2 = 1.0;
  SelectionCriterion criterion = SelectionCriterion::kFinalAp;
  std::map<int, double> precision_targets{{24, 0.40}, {48, 0.33}, {72, 0.20}};
  double default_precision_target = 0.40;
  std::string target_name = "event";
  std::string label_column = "label";

  double precision_target(int window) const;
};

// Throws Config on out-of-range settings that do not need the data.
void validate(const RunConfig& config);

// Keys mirror the long CLI flag names with '_' for '-'. Unknown keys are a
// Config error.
RunConfig config_from_json(const std::string& text, RunConfig base = {});
std::string config_to_json(const RunConfig& config);

// Lookahead in timesteps; Config error unless 1 <= L < horizon.
int lookahead_for(const RunConfig& config, int window, int horizon);

// Threads actually used: the request (or the default) capped by RAUS_THREADS.
int effective_threads(int requested);

struct PreparedData {
  DiscretePanel train;
  DiscretePanel test;
  std::vector<BinningSpec> specs;
  std::vector<std::string> degenerate;
  SignificanceResult significance;
  DiscretePanel full;  // all subjects binned with the training edges
};

// Load, split by subject (stratified on ever-event), fit bins on the
// training part and apply them to both, then filter by significance.
PreparedData prepare_data(const RawPanel& raw, const RunConfig& config);

struct ModelFit {
  VariableRanking ranking;
  IntraDag intra;
  InterEdges inter;  // indices into `reveal_order`
  std::vector<std::string> reveal_order;
  TwoSliceStructure structure;
  CptSet cpts;
  EmTrace trace;
};

// Ranking -> K2 in ranking order (target last) -> REVEAL in panel column
// order -> EM. Training sequences are the balanced subsets concatenated.
ModelFit learn_model(const DiscretePanel& train, const BalanceResult& balance, int lookahead,
                     RankMethod method, const RunConfig& config, int threads = 1);

// Static BN over one slice; features at t predict the label at t + L.
ModelFit learn_static_model(const DiscretePanel& train, const BalanceResult& balance, int lookahead,
                            RankMethod method, const RunConfig& config, int threads = 1);

struct Evaluation {
  EvalReport report;
  std::vector<int> timesteps;
  std::vector<ScoredSet> scored;
  std::vector<std::vector<std::string>> keys;  // "subject@target-timestep" per row
  std::vector<std::vector<std::size_t>> rows;  // test subject per row
};

// Scores every test subject at t in [0, T - 1 - L] (t = 0 only for static
// models) and bootstraps AUC and AP per timestep.
Evaluation evaluate_model(const ModelFit& model, const DiscretePanel& test, int lookahead, int window,
                          bool static_model, const RunConfig& config, std::uint64_t seed, int threads = 1);

struct CvFold {
  RankMethod method = RankMethod::kCv;
  int window = 24;
  int fold = 0;
  std::size_t validation_subjects = 0;
  std::optional<double> auc, ap;  // final timestep
  std::string note;
};

struct CvResult {
  std::vector<std::vector<std::size_t>> folds;  // training-panel rows
  std::vector<CvFold> results;
};

CvResult cross_validate(const PreparedData& data, const RunConfig& config, int threads = 1);

struct RunResult {
  std::vector<EvalReport> reports;
  std::vector<std::string> leaves;  // relative folder per report
  std::vector<std::size_t> order;   // select_models output
};

// Runs everything and writes the artifact tree under config.out. On an
// error nothing is left behind in config.out except what existed before.
RunResult run_pipeline(const RunConfig& config);

// Re-emits structure.dot files and summary.json from an artifact tree.
void reemit_report(const std::filesystem::path& out, SelectionCriterion criterion);

// 2 for configuration errors, 3 for data and IO errors, 1 otherwise.
int exit_code_for(ErrorCode code);

}  // namespace raus
