#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "trajgeom/numeric.hpp"
#include "trajgeom/pipeline.hpp"

namespace trajgeom::pipeline {

namespace {

using nlohmann::json;

std::string cell(const json& v) {
  if (v.is_null()) {
    return "";
  }
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_boolean()) {
    return v.get<bool>() ? "1" : "0";
  }
  if (v.is_number_integer() || v.is_number_unsigned()) {
    return v.dump();
  }
  if (v.is_number_float()) {
    return numeric::format_double(v.get<double>());
  }
  return v.dump();
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::array();
  if (doc.is_object() && doc.contains(key) && doc.at(key).is_array()) {
    return doc.at(key);
  }
  return empty;
}

Table layer_curves(const AnalysisReport& r) {
  Table t{"layer_curves", {"condition", "context_length", "measure", "layer", "n", "mean", "sem"}, {}};
  for (const auto& row : section(r.geometry, "layer_curves")) {
    const auto& mean = row.at("mean");
    const auto& sem = row.at("sem");
    for (std::size_t l = 0; l < mean.size(); ++l) {
      t.rows.push_back({cell(row.at("condition")), cell(row.at("context_length")),
                        cell(row.at("measure")), std::to_string(l), cell(row.at("n")),
                        cell(mean[l]), cell(sem[l])});
    }
  }
  return t;
}

Table band_aggregates(const AnalysisReport& r) {
  Table t{"band_aggregates", {"condition", "context_length", "measure", "n", "mean", "sd"}, {}};
  for (const auto& row : section(r.geometry, "band_aggregates")) {
    t.rows.push_back({cell(row.at("condition")), cell(row.at("context_length")),
                      cell(row.at("measure")), cell(row.at("n")), cell(row.at("mean")),
                      cell(row.at("sd"))});
  }
  return t;
}

Table sequences(const AnalysisReport& r) {
  Table t{"sequences",
          {"id", "condition", "context_length", "k", "task", "window_start", "window_end",
           "curvature", "straightening", "menger_curvature", "menger_straightening",
           "effective_dimensionality", "elongation"},
          {}};
  for (const auto& row : section(r.geometry, "sequences")) {
    std::vector<std::string> cells{cell(row.at("id")),           cell(row.at("condition")),
                                   cell(row.at("context_length")), cell(row.at("k")),
                                   cell(row.at("task")),         cell(row.at("window")[0]),
                                   cell(row.at("window")[1])};
    for (std::size_t c = 7; c < t.columns.size(); ++c) {
      cells.push_back(cell(row.at("band").at(t.columns[c])));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Table exclusions(const AnalysisReport& r) {
  Table t{"exclusions", {"id", "section", "label", "shot", "reason"}, {}};
  for (const auto& row : section(r.geometry, "exclusions")) {
    t.rows.push_back({cell(row.at("id")), "geometry", "", "", cell(row.at("reason"))});
  }
  for (const auto& row : section(r.geometry, "phase_exclusions")) {
    t.rows.push_back({cell(row.at("id")), "phase", cell(row.at("label")), cell(row.at("shot")),
                      cell(row.at("reason"))});
  }
  for (const auto& row : section(r.behavior, "exclusions")) {
    t.rows.push_back({cell(row.at("id")), "behavior", "", "", cell(row.at("reason"))});
  }
  return t;
}

Table phases(const AnalysisReport& r) {
  Table t{"phases", {"task", "condition", "k", "label", "shot", "test", "n", "mean", "sd"}, {}};
  for (const auto& row : section(r.geometry, "phase_aggregates")) {
    t.rows.push_back({cell(row.at("task")), cell(row.at("condition")), cell(row.at("k")),
                      cell(row.at("label")), cell(row.at("shot")), cell(row.at("test")),
                      cell(row.at("n")), cell(row.at("mean")), cell(row.at("sd"))});
  }
  return t;
}

Table context_trend(const AnalysisReport& r) {
  Table t{"context_trend",
          {"condition", "context_length", "n", "band_straightening", "logit_difference",
           "neighbor_mean"},
          {}};
  for (const auto& row : section(r.geometry, "context_trend")) {
    t.rows.push_back({cell(row.at("condition")), cell(row.at("context_length")),
                      cell(row.at("n")), cell(row.at("band_straightening")),
                      cell(row.at("logit_difference")), cell(row.at("neighbor_mean"))});
  }
  return t;
}

Table node_maps(const AnalysisReport& r) {
  Table t{"node_maps",
          {"condition", "context_length", "layer", "node", "count", "pc1", "pc2", "explained1",
           "explained2"},
          {}};
  for (const auto& row : section(r.geometry, "node_maps")) {
    const auto& nodes = row.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      t.rows.push_back({cell(row.at("condition")), cell(row.at("context_length")),
                        cell(row.at("layer")), cell(nodes[i]), cell(row.at("counts")[i]),
                        cell(row.at("coords")[i][0]), cell(row.at("coords")[i][1]),
                        cell(row.at("explained")[0]), cell(row.at("explained")[1])});
    }
    for (const auto& missing : row.at("missing")) {
      t.rows.push_back({cell(row.at("condition")), cell(row.at("context_length")),
                        cell(row.at("layer")), cell(missing), "0", "", "",
                        cell(row.at("explained")[0]), cell(row.at("explained")[1])});
    }
  }
  return t;
}

Table behavior_steps(const AnalysisReport& r) {
  Table t{"behavior_steps",
          {"id", "condition", "context_length", "step", "position", "node", "neighbor_mean",
           "non_neighbor_mean", "difference", "success"},
          {}};
  for (const auto& row : section(r.behavior, "steps")) {
    std::vector<std::string> cells;
    for (const auto& c : t.columns) {
      cells.push_back(cell(row.at(c)));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Table behavior_summary(const AnalysisReport& r) {
  Table t{"behavior_summary",
          {"condition", "context_length", "n_sequences", "n_steps", "neighbor_mean",
           "non_neighbor_mean", "logit_difference", "success_rate"},
          {}};
  for (const auto& row : section(r.behavior, "summary")) {
    std::vector<std::string> cells;
    for (const auto& c : t.columns) {
      cells.push_back(cell(row.at(c)));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Table accuracy(const AnalysisReport& r) {
  Table t{"accuracy", {"id", "task", "k", "generated", "expected", "correct"}, {}};
  for (const auto& row : section(r.behavior, "accuracy")) {
    std::vector<std::string> cells;
    for (const auto& c : t.columns) {
      cells.push_back(cell(row.at(c)));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Table stats_table(const AnalysisReport& r) {
  Table t{"stats",
          {"name", "test", "column", "group_a", "group_b", "statistic", "df", "df2", "p_value",
           "effect_size", "n"},
          {}};
  for (const auto& row : section(r.stats, "tests")) {
    std::string n;
    for (const auto& x : row.at("n")) {
      n += (n.empty() ? "" : ";") + cell(x);
    }
    std::vector<std::string> cells;
    for (std::size_t c = 0; c + 1 < t.columns.size(); ++c) {
      cells.push_back(cell(row.at(t.columns[c])));
    }
    cells.push_back(n);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

// Minimal SVG rendering.

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

constexpr std::array<const char*, 8> kPalette = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                                 "#66a61e", "#e6ab02", "#a6761d", "#666666"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string svg_plot(const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series, bool lines,
                     bool diagonal = false) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        continue;
      }
      if (!any) {
        x0 = x1 = x;
        y0 = y1 = y;
        any = true;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (diagonal) {
    x0 = y0 = std::min(x0, y0);
    x1 = y1 = std::max(x1, y1);
  }
  if (x1 == x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
    << "transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">" << xml_escape(ylabel)
    << "</text>\n";
  o << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" font-size=\"10\">" << fmt(x0)
    << "</text>\n";
  o << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\" "
    << "font-size=\"10\">" << fmt(x1) << "</text>\n";
  o << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"10\">"
    << fmt(y0) << "</text>\n";
  o << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\" "
    << "font-size=\"10\">" << fmt(y1) << "</text>\n";
  if (!any) {
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" fill=\"#888\">no data</text>\n";
  }
  if (diagonal && any) {
    o << "<line x1=\"" << fmt(px(x0)) << "\" y1=\"" << fmt(py(y0)) << "\" x2=\"" << fmt(px(x1))
      << "\" y2=\"" << fmt(py(y1)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % kPalette.size()];
    if (lines && s.points.size() > 1) {
      o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : s.points) {
        if (std::isfinite(x) && std::isfinite(y)) {
          o << fmt(px(x)) << ',' << fmt(py(y)) << ' ';
        }
      }
      o << "\"/>\n";
    }
    for (const auto& [x, y] : s.points) {
      if (std::isfinite(x) && std::isfinite(y)) {
        o << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\""
          << (lines ? 2.0 : 2.5) << "\" fill=\"" << colour << "\" fill-opacity=\"0.7\"/>\n";
      }
    }
    const double ly = T + 14.0 * static_cast<double>(i);
    o << "<rect x=\"" << W - R + 12 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
      << colour << "\"/>\n";
    o << "<text x=\"" << W - R + 26 << "\" y=\"" << ly + 9 << "\" font-size=\"11\">"
      << xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string group_label(const json& row) {
  std::string s = cell(row.at("condition"));
  if (!row.at("context_length").is_null()) {
    s += " L=" + cell(row.at("context_length"));
  }
  return s;
}

std::map<std::string, std::string> svg_figures(const AnalysisReport& r) {
  std::map<std::string, std::string> out;

  std::vector<Series> curves;
  for (const auto& row : section(r.geometry, "layer_curves")) {
    if (row.at("measure") != "straightening") {
      continue;
    }
    Series s{group_label(row), {}};
    const auto& mean = row.at("mean");
    for (std::size_t l = 0; l < mean.size(); ++l) {
      s.points.emplace_back(static_cast<double>(l),
                            mean[l].is_number() ? mean[l].get<double>() : NAN);
    }
    curves.push_back(std::move(s));
  }
  out["layer_curves"] = svg_plot("Straightening across layers", "layer",
                                 "straightening (rad)", curves, true);

  std::map<std::string, Series> scatter;
  for (const auto& row : section(r.behavior, "steps")) {
    const std::string label = group_label(row);
    auto& s = scatter[label];
    s.label = label;
    s.points.emplace_back(row.at("neighbor_mean").get<double>(),
                          row.at("non_neighbor_mean").get<double>());
  }
  std::vector<Series> scatter_v;
  for (auto& [_, s] : scatter) {
    scatter_v.push_back(std::move(s));
  }
  out["logit_scatter"] = svg_plot("Neighbour vs non-neighbour logits", "neighbour mean logit",
                                   "non-neighbour mean logit", scatter_v, false, true);

  std::map<std::string, Series> trend;
  for (const auto& row : section(r.geometry, "context_trend")) {
    const std::string cond = cell(row.at("condition"));
    auto& s = trend[cond];
    s.label = cond;
    s.points.emplace_back(std::log2(row.at("context_length").get<double>()),
                          row.at("band_straightening").get<double>());
  }
  std::vector<Series> trend_v;
  for (auto& [_, s] : trend) {
    trend_v.push_back(std::move(s));
  }
  out["context_trend"] = svg_plot("Band straightening vs context length", "log2 context length",
                                  "band straightening (rad)", trend_v, true);

  std::vector<Series> maps;
  for (const auto& row : section(r.geometry, "node_maps")) {
    Series s{group_label(row) + " layer " + cell(row.at("layer")), {}};
    for (const auto& c : row.at("coords")) {
      s.points.emplace_back(c[0].get<double>(), c[1].get<double>());
    }
    maps.push_back(std::move(s));
  }
  out["node_maps"] = svg_plot("Node-mean PCA", "PC1", "PC2", maps, false);
  return out;
}

json read_optional(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return json::object();
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << text;
}

}  // namespace

std::vector<Table> report_tables(const AnalysisReport& r) {
  return {layer_curves(r),  band_aggregates(r),  sequences(r),     exclusions(r),
          phases(r),        context_trend(r),    node_maps(r),     behavior_steps(r),
          behavior_summary(r), accuracy(r),      stats_table(r)};
}

std::string to_csv(const Table& t) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
      return s;
    }
    std::string q = "\"";
    for (char c : s) {
      q += c;
      if (c == '"') {
        q += '"';
      }
    }
    return q + "\"";
  };
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += (i ? "," : "") + quote(cells[i]);
    }
    out += '\n';
  };
  line(t.columns);
  for (const auto& row : t.rows) {
    line(row);
  }
  return out;
}

std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& in_dir,
                                              const std::string& run_id,
                                              const std::string& format,
                                              const std::filesystem::path& out) {
  if (format != "csv" && format != "json" && format != "svg") {
    throw UsageError("unknown report format '" + format + "' (expected csv, json or svg)");
  }
  AnalysisReport r;
  r.geometry = read_optional(in_dir / (run_id + ".geometry.json"));
  r.behavior = read_optional(in_dir / (run_id + ".behavior.json"));
  r.stats = read_optional(in_dir / (run_id + ".stats.json"));
  std::filesystem::create_directories(out);
  std::vector<std::filesystem::path> written;
  if (format == "csv") {
    for (const auto& t : report_tables(r)) {
      written.push_back(out / (run_id + "." + t.name + ".csv"));
      write_text(written.back(), to_csv(t));
    }
  } else if (format == "json") {
    json tables = json::object();
    for (const auto& t : report_tables(r)) {
      tables[t.name] = {{"columns", t.columns}, {"rows", t.rows}};
    }
    written.push_back(out / (run_id + ".report.json"));
    write_text(written.back(), json{{"run_id", run_id}, {"tables", tables}}.dump(2) + "\n");
  } else {
    for (const auto& [name, svg] : svg_figures(r)) {
      written.push_back(out / (run_id + "." + name + ".svg"));
      write_text(written.back(), svg);
    }
  }
  return written;
}

}  // namespace trajgeom::pipeline
