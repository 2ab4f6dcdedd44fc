#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "raus/dataset.hpp"
#include "raus/eval.hpp"
#include "raus/model.hpp"
#include "raus/ranking.hpp"
#include "raus/structure.hpp"

namespace raus {

enum class NodeRole { kHighlight, kFeature, kOutcome };

struct NodePlacement {
  std::string node;
  double angle = 0.0;  // degrees in [0, 360)
  double radius = 0.0;
  NodeRole role = NodeRole::kFeature;
};

// Features are placed counterclockwise in importance order starting at 90
// degrees, spaced evenly with the outcome taking the last slot.
struct GraphLayout {
  std::vector<NodePlacement> nodes;  // importance order, outcome last
  double radius = 3.0;

  const NodePlacement& at(const std::string& node) const;
};

// Throws Layout when a structure node other than the target is absent from
// the ranking.
GraphLayout make_layout(const TwoSliceStructure& structure, const VariableRanking& ranking,
                        double radius = 3.0);

// Byte-stable DOT: fixed neato positions, solid intra edges, dashed red
// inter edges, most important feature filled yellow.
std::string emit_dot(const TwoSliceStructure& structure, const VariableRanking& ranking);

// Shortest round-trip decimal form; "inf"/"-inf"/"nan" for non-finite.
std::string format_number(double x);

std::string structure_to_json(const TwoSliceStructure& s);
TwoSliceStructure structure_from_json(const std::string& text);

std::string cpts_to_json(const TwoSliceStructure& s, const CptSet& cpts);
CptSet cpts_from_json(const std::string& text);

std::string ranking_to_csv(const VariableRanking& ranking);
VariableRanking ranking_from_csv(const std::string& text);

std::string bins_to_json(std::span<const BinningSpec> specs);

std::string curves_to_csv(std::span<const int> timesteps, std::span<const std::vector<CurvePoint>> curves,
                          const char* x_name, const char* y_name);
std::string operating_points_to_csv(std::span<const int> timesteps, std::span<const OperatingPoint> points);

std::string event_flow_to_csv(const EventFlow& flow);

// Interval fields are written as {point, lo, hi}; absent metrics as null.
std::string metrics_to_json(const EvalReport& report, const std::string& settings_json,
                            std::span<const std::string> deviations);
EvalReport metrics_from_json(const std::string& text);

// Writes `text` to `path` with '\n' line endings, creating parent folders.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Creates the folder if needed and checks a file can be written there.
void preflight_output_dir(const std::filesystem::path& dir);

// Truth file for synthetic panels: structure plus CPTs.
std::string truth_to_json(const TwoSliceStructure& s, const CptSet& cpts);

}  // namespace raus
