#include "raus/cli.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "raus/dataset.hpp"
#include "raus/pipeline.hpp"
#include "raus/report.hpp"
#include "raus/synthgen.hpp"

namespace raus {

namespace {

// Flags are applied on top of the config file only when given.
class Overrides {
 public:
  template <typename T, typename Apply>
  void add(CLI::App& app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app.add_option(name, *value, help);
    setters_.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
    last_ = opt;
  }

  void flag(CLI::App& app, const std::string& name, const std::string& help, std::function<void(RunConfig&)> apply) {
    CLI::Option* opt = app.add_flag(name, help);
    setters_.push_back([opt, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c);
    });
    last_ = opt;
  }

  CLI::Option* last() const { return last_; }

  void apply(RunConfig& c) const {
    for (const auto& s : setters_) s(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> setters_;
  CLI::Option* last_ = nullptr;
};

std::vector<RankMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<RankMethod> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_rank_method(n));
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, e.message());
    }
  }
  return out;
}

std::map<int, double> parse_targets(const std::vector<std::string>& items) {
  std::map<int, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    try {
      if (eq == std::string::npos) throw std::invalid_argument(item);
      std::size_t used = 0;
      const int window = std::stoi(item.substr(0, eq), &used);
      if (used != eq) throw std::invalid_argument(item);
      out[window] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, "precision target '" + item + "' is not WINDOW=PRECISION");
    }
  }
  return out;
}

int fail(std::ostream& err, const Error& e) {
  err << "raus: error: " << e.what() << '\n';
  return exit_code_for(e.code());
}

void print_run(std::ostream& out, const RunConfig& config, const RunResult& run) {
  out << "wrote " << run.reports.size() << " model folders under " << config.out.string() << '\n';
  for (std::size_t k = 0; k < run.order.size(); ++k) {
    const EvalReport& r = run.reports[run.order[k]];
    out << std::setw(3) << k + 1 << "  " << run.leaves[run.order[k]];
    if (r.failed) {
      out << "  failed: " << r.error << '\n';
      continue;
    }
    out << "  " << to_string(config.criterion) << '=' << format_number(selection_value(r, config.criterion)) << '\n';
  }
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rank, learn and evaluate dynamic Bayesian networks for clinical event prediction", "raus"};
  app.require_subcommand(1);

  // run
  CLI::App* run = app.add_subcommand("run", "Full pipeline: rank, learn, evaluate, emit artifacts");
  std::string config_path;
  run->add_option("--config", config_path, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  Overrides ov;
  ov.add<std::string>(*run, "--data", "Panel CSV", [](RunConfig& c, const std::string& v) { c.data = v; });
  ov.add<std::string>(*run, "--out", "Output folder", [](RunConfig& c, const std::string& v) { c.out = v; });
  ov.add<std::vector<int>>(*run, "--windows", "Prediction windows in hours, e.g. 24,48,72",
                           [](RunConfig& c, const std::vector<int>& v) { c.windows = v; });
  ov.last()->delimiter(',');
  ov.add<int>(*run, "--step-hours", "Hours per timestep", [](RunConfig& c, int v) { c.step_hours = v; });
  ov.add<std::vector<std::string>>(*run, "--methods", "Ranking methods among cv,chi2,ig",
                                   [](RunConfig& c, const std::vector<std::string>& v) { c.methods = parse_methods(v); });
  ov.last()->delimiter(',');
  ov.add<std::string>(*run, "--selection", "all, best_k:K or percentile:P", [](RunConfig& c, const std::string& v) {
    try {
      c.selection = Selection::parse(v);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, e.message());
    }
  });
  ov.add<double>(*run, "--alpha", "Significance filter level", [](RunConfig& c, double v) { c.alpha = v; });
  ov.add<int>(*run, "--max-parents", "K2 parent cap", [](RunConfig& c, int v) { c.max_parents = v; });
  ov.add<int>(*run, "--max-inter-parents", "REVEAL parent cap", [](RunConfig& c, int v) { c.max_inter_parents = v; });
  ov.add<double>(*run, "--accept-ratio", "REVEAL acceptance ratio", [](RunConfig& c, double v) { c.accept_ratio = v; });
  ov.add<double>(*run, "--fallback-ratio", "REVEAL fallback ratio", [](RunConfig& c, double v) { c.fallback_ratio = v; });
  ov.add<double>(*run, "--pseudocount", "Dirichlet pseudocount", [](RunConfig& c, double v) { c.pseudocount = v; });
  ov.add<double>(*run, "--em-tol", "EM relative tolerance", [](RunConfig& c, double v) { c.em_tolerance = v; });
  ov.add<int>(*run, "--em-max-iter", "EM iteration cap", [](RunConfig& c, int v) { c.em_max_iterations = v; });
  ov.add<int>(*run, "--bootstrap", "Bootstrap replicates", [](RunConfig& c, int v) { c.bootstrap = v; });
  ov.add<std::uint64_t>(*run, "--seed", "Base seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
  ov.add<double>(*run, "--split-ratio", "Training share of subjects", [](RunConfig& c, double v) { c.split_ratio = v; });
  ov.add<int>(*run, "--folds", "Cross-validation folds on the training part (0 = off)",
              [](RunConfig& c, int v) { c.folds = v; });
  ov.add<int>(*run, "--threads", "Worker threads (0 = RAUS_THREADS or all cores)",
              [](RunConfig& c, int v) { c.threads = v; });
  ov.add<std::string>(*run, "--binning", "auto, iqr or categorical", [](RunConfig& c, const std::string& v) {
    c = config_from_json("{\"binning\":\"" + v + "\"}", c);
  });
  ov.add<std::string>(*run, "--target-mode", "exact or cumulative", [](RunConfig& c, const std::string& v) {
    c = config_from_json("{\"target_mode\":\"" + v + "\"}", c);
  });
  ov.add<std::string>(*run, "--criterion", "final_ap, mean_ap or final_auc", [](RunConfig& c, const std::string& v) {
    c.criterion = parse_selection_criterion(v);
  });
  ov.add<std::vector<std::string>>(*run, "--precision-target", "WINDOW=PRECISION, repeatable",
                                   [](RunConfig& c, const std::vector<std::string>& v) {
                                     for (const auto& [w, p] : parse_targets(v)) c.precision_targets[w] = p;
                                   });
  ov.last()->delimiter(',');
  ov.add<std::string>(*run, "--target-name", "Name of the outcome node",
                      [](RunConfig& c, const std::string& v) { c.target_name = v; });
  ov.add<std::string>(*run, "--label-column", "Label column in the panel",
                      [](RunConfig& c, const std::string& v) { c.label_column = v; });
  ov.add<double>(*run, "--baseline-l2", "Ridge penalty of the logistic baseline",
                 [](RunConfig& c, double v) { c.baseline_l2 = v; });
  ov.flag(*run, "--no-past-labels", "Do not condition on earlier labels", [](RunConfig& c) { c.past_labels = false; });
  ov.flag(*run, "--no-target-parents", "Forbid the outcome from parenting features in the next slice",
          [](RunConfig& c) { c.target_may_parent_features = false; });
  ov.flag(*run, "--no-baseline", "Skip the logistic regression baseline", [](RunConfig& c) { c.baseline = false; });
  ov.flag(*run, "--static", "Static BN on slice 0 instead of a DBN", [](RunConfig& c) { c.static_mode = true; });
  ov.flag(*run, "--promote-top-bn", "Learn a DBN from the best static BN per window",
          [](RunConfig& c) { c.promote_top_bn = true; });

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Sample a labeled panel from the built-in ground-truth model");
  std::size_t subjects = 2000;
  int horizon = 7;
  double missing = 0.0;
  std::uint64_t synth_seed = 0;
  std::string synth_out, truth_out;
  synth->add_option("--subjects", subjects, "Number of subjects")->capture_default_str();
  synth->add_option("--horizon", horizon, "Timesteps per subject")->capture_default_str();
  synth->add_option("--missing", missing, "MCAR rate for feature cells")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Panel CSV to write")->required();
  synth->add_option("--truth", truth_out, "Ground-truth JSON (default: truth.json next to --out)");

  // label
  CLI::App* label = app.add_subcommand("label", "Add KDIGO acute kidney injury labels to a raw panel");
  std::string label_in, label_out, scr_column = "scr", egfr_column = "egfr";
  KdigoRule rule;
  label->add_option("--data", label_in, "Raw panel CSV")->required()->check(CLI::ExistingFile);
  label->add_option("--out", label_out, "Labeled CSV to write")->required();
  label->add_option("--scr-column", scr_column, "Serum creatinine column (dropped from the output)")
      ->capture_default_str();
  label->add_option("--egfr-column", egfr_column, "eGFR column gating the relative rule")->capture_default_str();
  label->add_option("--ratio", rule.ratio, "Relative rise over baseline")->capture_default_str();
  label->add_option("--ratio-window", rule.ratio_window_steps, "Timesteps for the relative rule")
      ->capture_default_str();
  label->add_option("--absolute-rise", rule.absolute_rise, "Absolute rise in mg/dL")->capture_default_str();
  label->add_option("--absolute-window", rule.absolute_window_steps, "Timesteps for the absolute rule")
      ->capture_default_str();

  // report
  CLI::App* report = app.add_subcommand("report", "Re-emit DOT files and the ranked summary from stored artifacts");
  std::string report_dir, report_criterion = "final_ap";
  report->add_option("--out", report_dir, "Artifact folder of an earlier run")->required();
  report->add_option("--criterion", report_criterion, "final_ap, mean_ap or final_auc")->capture_default_str();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      RunConfig config;
      if (!config_path.empty()) config = config_from_json(read_text(config_path));
      ov.apply(config);
      const RunResult result = run_pipeline(config);
      print_run(out, config, result);
      return 0;
    }
    if (synth->parsed()) {
      if (horizon < 2) throw Error(ErrorCode::kConfig, "--horizon must be at least 2");
      if (subjects < 1) throw Error(ErrorCode::kConfig, "--subjects must be at least 1");
      if (!(missing >= 0.0 && missing < 1.0)) throw Error(ErrorCode::kConfig, "--missing must lie in [0, 1)");
      const GeneratorSpec spec = default_generator(subjects, horizon, missing, synth_seed);
      const DiscretePanel panel = sample_panel(spec);
      std::ostringstream csv;
      write_panel_csv(csv, panel);
      const std::filesystem::path panel_path(synth_out);
      write_text(panel_path, csv.str());
      const std::filesystem::path truth_path =
          truth_out.empty() ? panel_path.parent_path() / "truth.json" : std::filesystem::path(truth_out);
      write_text(truth_path, truth_to_json(spec.structure, spec.cpts));
      out << "wrote " << panel.subjects() << " subjects x " << panel.horizon << " timesteps to " << synth_out << '\n';
      return 0;
    }
    if (label->parsed()) {
      const RawPanel raw = load_panel(label_in, CsvOptions{});
      LabelReport rep;
      const RawPanel labeled = label_raw_panel(raw, scr_column, egfr_column, rule, &rep);
      std::ostringstream csv;
      write_raw_panel_csv(csv, labeled);
      write_text(label_out, csv.str());
      out << "labeled " << labeled.subjects.size() << " subjects";
      if (!rep.excluded_subjects.empty()) out << ", excluded " << rep.excluded_subjects.size() << " without baseline";
      out << '\n';
      return 0;
    }
    if (report->parsed()) {
      reemit_report(report_dir, parse_selection_criterion(report_criterion));
      out << "re-emitted report under " << report_dir << '\n';
      return 0;
    }
  } catch (const Error& e) {
    return fail(err, e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "raus: error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "raus: internal error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace raus
