#include "raus/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace raus {

using json = nlohmann::ordered_json;

namespace {

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// Fixed 4-decimal coordinate without a negative zero.
std::string coordinate(double v) {
  v = std::round(v * 1e4) / 1e4;
  if (v == 0.0) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_or(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

json interval_json(const std::optional<Interval>& i) {
  if (!i) return nullptr;
  return {{"point", i->point}, {"lo", i->lo}, {"hi", i->hi}, {"degenerate", i->degenerate}};
}

std::optional<Interval> interval_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return Interval{j.at("point").get<double>(), j.at("lo").get<double>(), j.at("hi").get<double>(),
                  j.value("degenerate", std::size_t{0})};
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string(what) + ": " + e.what());
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const NodePlacement& GraphLayout::at(const std::string& node) const {
  for (const auto& p : nodes)
    if (p.node == node) return p;
  throw Error(ErrorCode::kLayout, "node '" + node + "' is not in the layout");
}

GraphLayout make_layout(const TwoSliceStructure& structure, const VariableRanking& ranking, double radius) {
  if (structure.target < 0) throw Error(ErrorCode::kLayout, "structure has no target");
  std::vector<std::string> features;
  for (const auto& score : ranking.scores)
    if (structure.node_index(score.variable) >= 0 && score.variable != structure.nodes[structure.target])
      features.push_back(score.variable);
  for (std::size_t v = 0; v < structure.size(); ++v) {
    if (static_cast<int>(v) == structure.target) continue;
    if (std::find(features.begin(), features.end(), structure.nodes[v]) == features.end())
      throw Error(ErrorCode::kLayout, "node '" + structure.nodes[v] + "' is missing from the ranking");
  }
  GraphLayout layout;
  layout.radius = radius;
  const double step = 360.0 / static_cast<double>(features.size() + 1);
  auto angle = [&](std::size_t slot) { return std::fmod(90.0 + step * static_cast<double>(slot), 360.0); };
  for (std::size_t i = 0; i < features.size(); ++i)
    layout.nodes.push_back({features[i], angle(i), radius, i == 0 ? NodeRole::kHighlight : NodeRole::kFeature});
  layout.nodes.push_back({structure.nodes[structure.target], angle(features.size()), radius, NodeRole::kOutcome});
  return layout;
}

std::string emit_dot(const TwoSliceStructure& structure, const VariableRanking& ranking) {
  const GraphLayout layout = make_layout(structure, ranking);
  std::ostringstream out;
  out << "digraph dbn {\n";
  out << "  layout=neato;\n";
  out << "  node [shape=ellipse, style=filled, fillcolor=white];\n";
  for (const auto& p : layout.nodes) {
    const double rad = p.angle * std::numbers::pi / 180.0;
    out << "  " << quoted(p.node) << " [pos=\"" << coordinate(p.radius * std::cos(rad)) << ","
        << coordinate(p.radius * std::sin(rad)) << "!\"";
    if (p.role == NodeRole::kHighlight) out << ", fillcolor=yellow";
    if (p.role == NodeRole::kOutcome) out << ", fillcolor=lightblue, shape=doublecircle";
    out << "];\n";
  }
  for (std::size_t v = 0; v < structure.size(); ++v)
    for (int p : structure.intra_parents[v])
      out << "  " << quoted(structure.nodes[p]) << " -> " << quoted(structure.nodes[v]) << ";\n";
  for (const auto& e : structure.inter)
    out << "  " << quoted(structure.nodes[e.source]) << " -> " << quoted(structure.nodes[e.destination])
        << " [style=dashed, color=red];\n";
  out << "}\n";
  return out.str();
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string structure_to_json(const TwoSliceStructure& s) {
  json j;
  j["nodes"] = s.nodes;
  j["cards"] = s.cards;
  j["target"] = s.target >= 0 ? json(s.nodes[s.target]) : json(nullptr);
  json intra = json::array();
  for (std::size_t v = 0; v < s.size(); ++v)
    for (int p : s.intra_parents[v]) intra.push_back({{"parent", s.nodes[p]}, {"child", s.nodes[v]}});
  j["intra"] = intra;
  json inter = json::array();
  for (const auto& e : s.inter)
    inter.push_back({{"source", s.nodes[e.source]}, {"destination", s.nodes[e.destination]}, {"score", e.score}});
  j["inter"] = inter;
  return j.dump(2) + "\n";
}

TwoSliceStructure structure_from_json(const std::string& text) {
  const json j = parse_json(text, "structure");
  try {
    TwoSliceStructure s;
    s.nodes = j.at("nodes").get<std::vector<std::string>>();
    s.cards = j.at("cards").get<std::vector<int>>();
    s.intra_parents.assign(s.nodes.size(), {});
    auto index = [&](const json& name) {
      int i = s.node_index(name.get<std::string>());
      if (i < 0) throw Error(ErrorCode::kSchema, "unknown node " + name.dump());
      return i;
    };
    for (const auto& e : j.at("intra")) s.intra_parents[index(e.at("child"))].push_back(index(e.at("parent")));
    for (auto& p : s.intra_parents) std::sort(p.begin(), p.end());
    for (const auto& e : j.at("inter"))
      s.inter.push_back({index(e.at("source")), index(e.at("destination")), e.value("score", 0.0), 0, 1});
    if (!j.at("target").is_null()) s.target = index(j.at("target"));
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("structure: ") + e.what());
  }
}

std::string cpts_to_json(const TwoSliceStructure& s, const CptSet& cpts) {
  auto tables = [&](const std::vector<Cpt>& set) {
    json arr = json::array();
    for (const Cpt& c : set) {
      json parents = json::array();
      for (const auto& p : c.parents) parents.push_back({{"node", s.nodes[p.node]}, {"lag", p.lag}});
      json rows = json::array();
      for (std::size_t r = 0; r < c.rows(); ++r) {
        auto row = c.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      arr.push_back({{"node", s.nodes[c.node]}, {"cardinality", c.cardinality}, {"parents", parents}, {"rows", rows}});
    }
    return arr;
  };
  json j;
  j["pseudocount"] = cpts.pseudocount;
  j["prior"] = tables(cpts.prior);
  j["transition"] = tables(cpts.transition);
  return j.dump(2) + "\n";
}

CptSet cpts_from_json(const std::string& text) {
  const json j = parse_json(text, "cpts");
  try {
    // Node names are resolved by position: tables are stored in node order.
    std::vector<std::string> names;
    for (const auto& c : j.at("prior")) names.push_back(c.at("node").get<std::string>());
    auto index = [&](const std::string& name) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) throw Error(ErrorCode::kSchema, "unknown CPT node " + name);
      return static_cast<int>(it - names.begin());
    };
    auto tables = [&](const json& arr) {
      std::vector<Cpt> out;
      for (const auto& c : arr) {
        Cpt cpt;
        cpt.node = index(c.at("node").get<std::string>());
        cpt.cardinality = c.at("cardinality").get<int>();
        for (const auto& p : c.at("parents")) cpt.parents.push_back({index(p.at("node").get<std::string>()), p.at("lag").get<int>()});
        for (const auto& row : c.at("rows"))
          for (double x : row.get<std::vector<double>>()) cpt.table.push_back(x);
        out.push_back(std::move(cpt));
      }
      for (Cpt& cpt : out)
        for (const auto& p : cpt.parents) cpt.parent_cards.push_back(out[p.node].cardinality);
      return out;
    };
    CptSet cpts;
    cpts.pseudocount = j.value("pseudocount", 1.0);
    cpts.prior = tables(j.at("prior"));
    cpts.transition = tables(j.at("transition"));
    return cpts;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("cpts: ") + e.what());
  }
}

std::string ranking_to_csv(const VariableRanking& ranking) {
  std::ostringstream out;
  out << "rank,variable,method,statistic,p_value,selected\n";
  for (const auto& s : ranking.scores) {
    const bool selected =
        std::find(ranking.selected.begin(), ranking.selected.end(), s.variable) != ranking.selected.end();
    out << s.rank << ',' << s.variable << ',' << to_string(s.method) << ',' << format_number(s.statistic) << ','
        << (s.p_value ? format_number(*s.p_value) : "") << ',' << (selected ? "yes" : "no") << '\n';
  }
  for (const auto& v : ranking.excluded) out << ',' << v << ',' << to_string(ranking.method) << ",,,excluded\n";
  return out.str();
}

VariableRanking ranking_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "rank,variable,method,statistic,p_value,selected")
    throw Error(ErrorCode::kSchema, "unexpected rankings.csv header");
  VariableRanking r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 6) throw Error(ErrorCode::kParse, "rankings.csv row has " + std::to_string(f.size()) + " fields");
    r.method = parse_rank_method(f[2]);
    if (f[5] == "excluded") {
      r.excluded.push_back(f[1]);
      continue;
    }
    RankScore s;
    s.variable = f[1];
    s.method = r.method;
    s.rank = std::stoi(f[0]);
    s.statistic = std::stod(f[3]);
    if (!f[4].empty()) s.p_value = std::stod(f[4]);
    r.scores.push_back(s);
    if (f[5] == "yes") r.selected.push_back(s.variable);
  }
  return r;
}

std::string bins_to_json(std::span<const BinningSpec> specs) {
  json arr = json::array();
  for (const auto& s : specs) {
    json edges = json::array();
    for (double e : s.edges) edges.push_back(std::isfinite(e) ? json(e) : json(format_number(e)));
    arr.push_back({{"variable", s.variable}, {"kind", to_string(s.kind)}, {"edges", edges}, {"labels", s.labels}});
  }
  return arr.dump(2) + "\n";
}

std::string curves_to_csv(std::span<const int> timesteps, std::span<const std::vector<CurvePoint>> curves,
                          const char* x_name, const char* y_name) {
  std::ostringstream out;
  out << "timestep,threshold," << x_name << ',' << y_name << '\n';
  for (std::size_t i = 0; i < curves.size(); ++i)
    for (const auto& p : curves[i])
      out << timesteps[i] << ',' << format_number(p.threshold) << ',' << format_number(p.x) << ','
          << format_number(p.y) << '\n';
  return out.str();
}

std::string operating_points_to_csv(std::span<const int> timesteps, std::span<const OperatingPoint> points) {
  std::ostringstream out;
  out << "timestep,target_precision,threshold,reachable,tp,fp,tn,fn,precision,recall,tnr,npv,fnr\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto& m = p.matrix;
    out << timesteps[i] << ',' << format_number(p.target) << ',' << format_number(p.threshold) << ','
        << (p.reachable ? "yes" : "no") << ',' << m.tp << ',' << m.fp << ',' << m.tn << ',' << m.fn << ','
        << format_number(m.precision()) << ',' << format_number(m.recall()) << ',' << format_number(m.tnr()) << ','
        << format_number(m.npv()) << ',' << format_number(m.fnr()) << '\n';
  }
  return out.str();
}

std::string event_flow_to_csv(const EventFlow& flow) {
  std::ostringstream out;
  out << "timestep,events,non_events,stay_no_event,onset,recovery,stay_event\n";
  for (std::size_t t = 0; t < flow.events.size(); ++t) {
    out << t << ',' << flow.events[t] << ',' << flow.non_events[t];
    if (t < flow.transitions.size())
      for (auto c : flow.transitions[t]) out << ',' << c;
    else
      out << ",,,,";
    out << '\n';
  }
  return out.str();
}

std::string metrics_to_json(const EvalReport& report, const std::string& settings_json,
                            std::span<const std::string> deviations) {
  json j;
  j["method"] = to_string(report.method);
  j["window"] = report.window;
  j["rank"] = report.rank;
  j["failed"] = report.failed;
  if (report.failed) j["error"] = report.error;
  json steps = json::array();
  for (const auto& ts : report.timesteps) {
    json s{{"timestep", ts.timestep}, {"rows", ts.rows}, {"positives", ts.positives},
           {"auc", interval_json(ts.auc)}, {"ap", interval_json(ts.ap)}};
    if (!ts.note.empty()) s["note"] = ts.note;
    steps.push_back(s);
  }
  j["timesteps"] = steps;
  json ops = json::array();
  for (std::size_t i = 0; i < report.operating_points.size(); ++i) {
    const auto& p = report.operating_points[i];
    ops.push_back({{"timestep", i < report.timesteps.size() ? report.timesteps[i].timestep : static_cast<int>(i)},
                   {"target_precision", p.target},
                   {"threshold", number(p.threshold)},
                   {"reachable", p.reachable},
                   {"tp", p.matrix.tp},
                   {"fp", p.matrix.fp},
                   {"tn", p.matrix.tn},
                   {"fn", p.matrix.fn}});
  }
  j["operating_points"] = ops;
  j["settings"] = settings_json.empty() ? json::object() : json::parse(settings_json);
  j["deviations"] = std::vector<std::string>(deviations.begin(), deviations.end());
  return j.dump(2) + "\n";
}

EvalReport metrics_from_json(const std::string& text) {
  const json j = parse_json(text, "metrics");
  try {
    EvalReport r;
    r.method = parse_rank_method(j.at("method").get<std::string>());
    r.window = j.at("window").get<int>();
    r.rank = j.value("rank", 0);
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string());
    for (const auto& s : j.at("timesteps")) {
      TimestepMetrics ts;
      ts.timestep = s.at("timestep").get<int>();
      ts.rows = s.at("rows").get<std::size_t>();
      ts.positives = s.at("positives").get<std::size_t>();
      ts.auc = interval_from(s.at("auc"));
      ts.ap = interval_from(s.at("ap"));
      ts.note = s.value("note", std::string());
      r.timesteps.push_back(ts);
    }
    for (const auto& p : j.at("operating_points")) {
      OperatingPoint op;
      op.target = p.at("target_precision").get<double>();
      op.threshold = number_or(p.at("threshold"), std::numeric_limits<double>::infinity());
      op.reachable = p.at("reachable").get<bool>();
      op.matrix = {p.at("tp").get<std::int64_t>(), p.at("fp").get<std::int64_t>(), p.at("tn").get<std::int64_t>(),
                   p.at("fn").get<std::int64_t>()};
      r.operating_points.push_back(op);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("metrics: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void preflight_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output folder " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe, std::ios::binary);
    if (!out || !(out << "ok")) throw Error(ErrorCode::kIo, "output folder " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

std::string truth_to_json(const TwoSliceStructure& s, const CptSet& cpts) {
  json j;
  j["structure"] = json::parse(structure_to_json(s));
  j["cpts"] = json::parse(cpts_to_json(s, cpts));
  return j.dump(2) + "\n";
}

}  // namespace raus
