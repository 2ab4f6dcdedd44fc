#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "raus/cli.hpp"
#include "raus/pipeline.hpp"
#include "raus/report.hpp"
#include "raus/synthgen.hpp"

using namespace raus;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("raus_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_synthetic(const fs::path& dir, std::size_t subjects, std::uint64_t seed,
                         void (*edit)(DiscretePanel&) = nullptr) {
  DiscretePanel panel = sample_panel(default_generator(subjects, 7, 0.1, seed));
  if (edit) edit(panel);
  std::ostringstream csv;
  write_panel_csv(csv, panel);
  const fs::path path = dir / "panel.csv";
  write_text(path, csv.str());
  return path;
}

struct CliRun {
  int status = -1;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "raus");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.status = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_text(e.path());
  return files;
}

}  // namespace

TEST_CASE("config JSON parsing and validation") {
  const RunConfig c = config_from_json(R"({"windows":[24],"methods":["ig"],"bootstrap":5,"seed":9})");
  CHECK(c.windows == std::vector<int>{24});
  CHECK(c.methods == std::vector<RankMethod>{RankMethod::kIg});
  CHECK(c.bootstrap == 5);
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(config_from_json(R"({"bogus":1})"), Error);
  CHECK_THROWS_AS(config_from_json("[1,2]"), Error);
  CHECK_THROWS_AS(config_from_json(R"({"methods":["rf"]})"), Error);
  RunConfig bad;
  bad.windows = {24, 24};
  CHECK_THROWS_AS(validate(bad), Error);
  bad = {};
  bad.windows = {30};
  CHECK_THROWS_AS(validate(bad), Error);
  bad = {};
  bad.static_mode = bad.promote_top_bn = true;
  CHECK_THROWS_AS(validate(bad), Error);
  const RunConfig round = config_from_json(config_to_json(c));
  CHECK(config_to_json(round) == config_to_json(c));
}

TEST_CASE("window bounds follow the horizon") {
  RunConfig c;
  CHECK(lookahead_for(c, 96, 7) == 4);
  CHECK(lookahead_for(c, 144, 7) == 6);
  try {
    lookahead_for(c, 168, 7);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(exit_code_for(e.code()) == 2);
  }
}

TEST_CASE("exit codes separate config, data and internal failures") {
  const fs::path dir = scratch("exit");
  const fs::path data = write_synthetic(dir, 120, 1);
  CHECK(cli({}).status == 2);
  CHECK(cli({"run", "--data", data.string(), "--out", (dir / "o").string(), "--windows", "168"}).status == 2);
  CHECK(cli({"run", "--data", data.string(), "--out", (dir / "o").string(), "--methods", "cv,rf"}).status == 2);
  CHECK(cli({"run", "--data", data.string(), "--out", (dir / "o").string(), "--alpha", "2"}).status == 2);
  CHECK(cli({"run", "--data", (dir / "missing.csv").string(), "--out", (dir / "o").string()}).status == 3);
  write_text(dir / "junk.csv", "id,time\n1,2\n");
  CHECK(cli({"run", "--data", (dir / "junk.csv").string(), "--out", (dir / "o").string()}).status == 3);
  CHECK(exit_code_for(ErrorCode::kTreewidthTooLarge) == 1);
  CHECK(cli({"run", "--help"}).status == 0);
}

TEST_CASE("failed runs leave no partial artifacts") {
  const fs::path dir = scratch("cleanup");
  write_text(dir / "unlabeled.csv", "subject_id,timestep,x\nA,0,1\nA,1,2\nB,0,1\nB,1,3\n");
  const fs::path out = dir / "out";
  const CliRun r = cli({"run", "--data", (dir / "unlabeled.csv").string(), "--windows", "24", "--out", out.string()});
  CHECK(r.status == 3);
  CHECK(r.err.find("label") != std::string::npos);
  REQUIRE(fs::exists(out));
  CHECK(fs::is_empty(out));
}

TEST_CASE("full run writes nine leaves, ranked summary and top-level tables") {
  const fs::path dir = scratch("full");
  const fs::path data = write_synthetic(dir, 300, 2);
  const fs::path out = dir / "out";
  const CliRun r = cli({"run", "--data", data.string(), "--windows", "24,48,72", "--methods", "cv,chi2,ig", "--seed",
                        "7", "--bootstrap", "30", "--out", out.string()});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  for (const char* w : {"24", "48", "72"})
    for (const char* m : {"cv", "chi2", "ig"})
      for (const char* f : {"rankings.csv", "structure.json", "structure.dot", "cpts.json", "metrics.json",
                            "roc_points.csv", "pr_points.csv", "operating_points.csv"})
        CHECK_MESSAGE(fs::exists(out / w / m / f), (out / w / m / f).string());
  for (const char* f : {"summary.json", "bins.json", "event_flow.csv", "significance.csv", "case_agreement.csv",
                        "early_true_positives.csv", "distribution_shift.csv", "baselines/24/metrics.json"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  CHECK(!fs::exists(out / ".staging"));
  CHECK(!fs::exists(out / "cv.json"));

  // Summary order equals select_models over the stored reports.
  const json summary = json::parse(read_text(out / "summary.json"));
  REQUIRE(summary["models"].size() == 9);
  std::vector<EvalReport> reports;
  std::vector<std::string> paths;
  for (const auto& m : summary["models"]) {
    paths.push_back(m["path"].get<std::string>());
    reports.push_back(metrics_from_json(read_text(out / paths.back() / "metrics.json")));
  }
  const auto order = select_models(reports, SelectionCriterion::kFinalAp);
  for (std::size_t k = 0; k < order.size(); ++k) {
    CHECK(order[k] == k);
    CHECK(summary["models"][k]["rank"] == static_cast<int>(k) + 1);
  }
  CHECK(summary["config"]["data"] == "panel.csv");

  // Re-emitting with the same criterion reproduces the stored report.
  const auto before = tree(out);
  REQUIRE(cli({"report", "--out", out.string()}).status == 0);
  CHECK(tree(out) == before);
}

TEST_CASE("artifact trees are identical across runs and thread counts") {
  const fs::path dir = scratch("determinism");
  const fs::path data = write_synthetic(dir, 250, 3);
  auto run = [&](const std::string& name, const std::string& threads) {
    const CliRun r = cli({"run", "--data", data.string(), "--bootstrap", "25", "--seed", "11", "--folds", "2",
                          "--threads", threads, "--out", (dir / name).string()});
    REQUIRE_MESSAGE(r.status == 0, r.err);
    return tree(dir / name);
  };
  const auto a = run("a", "1");
  const auto b = run("b", "1");
  const auto c = run("c", "4");
  CHECK(a.count("cv.json") == 1);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("flags override the config file") {
  const fs::path dir = scratch("override");
  const fs::path data = write_synthetic(dir, 150, 4);
  write_text(dir / "run.json", R"({"windows":[24,48],"methods":["cv"],"bootstrap":10,"seed":1})");
  const CliRun r = cli({"run", "--config", (dir / "run.json").string(), "--data", data.string(), "--seed", "5",
                        "--out", (dir / "out").string()});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const json summary = json::parse(read_text(dir / "out" / "summary.json"));
  CHECK(summary["config"]["seed"] == 5);
  CHECK(summary["config"]["bootstrap"] == 10);
  CHECK(summary["models"].size() == 2);
}

TEST_CASE("a failing window is isolated from the others") {
  const fs::path dir = scratch("isolation");
  // No events at the last timestep: the 144h window has no cases to learn from.
  const fs::path data = write_synthetic(dir, 200, 5, [](DiscretePanel& p) {
    for (std::size_t s = 0; s < p.subjects(); ++s) p.labels[s * p.horizon + p.horizon - 1] = 0;
  });
  const CliRun r = cli({"run", "--data", data.string(), "--windows", "24,144", "--methods", "cv", "--bootstrap", "10",
                        "--no-baseline", "--out", (dir / "out").string()});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const json summary = json::parse(read_text(dir / "out" / "summary.json"));
  CHECK(summary["models"].size() == 1);
  REQUIRE(summary["failed"].size() == 1);
  CHECK(summary["failed"][0]["window"] == 144);
  CHECK(metrics_from_json(read_text(dir / "out" / "144" / "cv" / "metrics.json")).failed);
}

TEST_CASE("static and promoted modes use their own leaves") {
  const fs::path dir = scratch("static");
  const fs::path data = write_synthetic(dir, 200, 6);
  REQUIRE(cli({"run", "--data", data.string(), "--static", "--windows", "24", "--bootstrap", "10", "--no-baseline",
               "--out", (dir / "s").string()})
              .status == 0);
  const json st = json::parse(read_text(dir / "s" / "24" / "cv" / "structure.json"));
  CHECK(st["inter"].empty());
  CHECK(metrics_from_json(read_text(dir / "s" / "24" / "cv" / "metrics.json")).timesteps.size() == 1);

  REQUIRE(cli({"run", "--data", data.string(), "--promote-top-bn", "--windows", "24", "--bootstrap", "10",
               "--no-baseline", "--out", (dir / "p").string()})
              .status == 0);
  const json summary = json::parse(read_text(dir / "p" / "summary.json"));
  CHECK(summary["models"].size() == 4);
  const std::string promoted = summary["promoted"][0]["method"];
  CHECK(fs::exists(dir / "p" / "24" / ("bn_" + promoted)));
  CHECK(fs::exists(dir / "p" / "24" / promoted / "structure.json"));
}

TEST_CASE("synth and label subcommands") {
  const fs::path dir = scratch("subcommands");
  REQUIRE(cli({"synth", "--subjects", "40", "--seed", "2", "--out", (dir / "p.csv").string()}).status == 0);
  CHECK(fs::exists(dir / "truth.json"));
  const json truth = json::parse(read_text(dir / "truth.json"));
  CHECK(truth.contains("structure"));
  const RawPanel raw = load_panel(dir / "p.csv");
  CHECK(raw.subjects.size() == 40);
  CHECK(raw.has_labels);

  write_text(dir / "raw.csv",
             "subject_id,timestep,scr,egfr\nA,0,1.0,80\nA,1,1.5,70\nA,2,1.51,60\nB,0,1.0,90\nB,1,1.3,90\nB,2,1.0,90\n");
  REQUIRE(cli({"label", "--data", (dir / "raw.csv").string(), "--out", (dir / "l.csv").string()}).status == 0);
  CHECK(read_text(dir / "l.csv") ==
        "subject_id,timestep,egfr,label\nA,0,80,0\nA,1,70,1\nA,2,60,1\nB,0,90,0\nB,1,90,1\nB,2,90,0\n");
}
