#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "trajgeom/behavior.hpp"
#include "trajgeom/gridworld.hpp"
#include "trajgeom/numeric.hpp"
#include "trajgeom/pipeline.hpp"
#include "trajgeom/stats.hpp"

namespace trajgeom::pipeline {

namespace {

using geometry::Measure;
using nlohmann::json;
using store::Condition;
using store::SpanLabel;
using store::TokenRange;

constexpr std::size_t kMinWindow = 3;

/// Measures compared between conditions (raw curvatures are implied by the
/// straightening columns and the shared baseline).
constexpr std::array<Measure, 4> kContrastMeasures = {
    Measure::kStraightening,
    Measure::kMengerStraightening,
    Measure::kEffectiveDimensionality,
    Measure::kElongation,
};

struct PhaseResult {
  SpanLabel label = SpanLabel::kQuestion;
  std::size_t shot = 0;
  bool test = false;
  TokenRange span;
  TokenRange window;
  std::array<double, geometry::kAllMeasures.size()> band{};
};

struct SeqResult {
  std::string id;
  Condition condition = Condition::kNatural;
  std::optional<std::size_t> context_length;
  std::optional<std::size_t> k;
  std::string task;
  bool ok = false;
  std::string reason;
  TokenRange window;
  geometry::CurvatureProfile profile;
  std::array<double, geometry::kAllMeasures.size()> band{};
  std::vector<PhaseResult> phases;
  std::vector<json> phase_exclusions;
  std::optional<behavior::NeighborEval> neighbor;
  std::string neighbor_skip;
  std::optional<behavior::AccuracyRecord> accuracy;
};

/// Group key: condition plus context length when the suite varies it.
struct GroupKey {
  Condition condition;
  std::optional<std::size_t> length;

  auto operator<=>(const GroupKey&) const = default;
};

json key_json(const GroupKey& g) {
  return {{"condition", std::string(store::to_string(g.condition))},
          {"context_length", g.length ? json(*g.length) : json(nullptr)}};
}

std::string key_name(const GroupKey& g) {
  std::string s(store::to_string(g.condition));
  if (g.length) {
    s += "@" + std::to_string(*g.length);
  }
  return s;
}

std::optional<std::size_t> optional_size(const json& payload, const char* key) {
  if (payload.contains(key) && payload.at(key).is_number_unsigned()) {
    return payload.at(key).get<std::size_t>();
  }
  return std::nullopt;
}

/// Windows shorter than three tokens take the two preceding tokens.
std::optional<TokenRange> widen(TokenRange r) {
  if (r.size() >= kMinWindow) {
    return r;
  }
  TokenRange w{r.start >= grid::kPrefixTokens ? r.start - grid::kPrefixTokens : 0, r.end};
  if (w.size() < kMinWindow) {
    return std::nullopt;
  }
  return w;
}

json band_json(const std::array<double, geometry::kAllMeasures.size()>& band) {
  json out = json::object();
  for (std::size_t i = 0; i < geometry::kAllMeasures.size(); ++i) {
    out[std::string(geometry::to_string(geometry::kAllMeasures[i]))] = band[i];
  }
  return out;
}

std::array<double, geometry::kAllMeasures.size()> band_values(
    const geometry::CurvatureProfile& p, geometry::LayerBand band) {
  std::array<double, geometry::kAllMeasures.size()> out{};
  for (std::size_t i = 0; i < geometry::kAllMeasures.size(); ++i) {
    out[i] = geometry::band_mean(p, band, geometry::kAllMeasures[i]);
  }
  return out;
}

std::size_t measure_index(Measure m) {
  const auto it = std::find(geometry::kAllMeasures.begin(), geometry::kAllMeasures.end(), m);
  return static_cast<std::size_t>(it - geometry::kAllMeasures.begin());
}

/// Ground truth needed for neighbour scoring.
struct GridTruth {
  grid::Adjacency adjacency;
  behavior::NodeColumns columns;
  std::vector<std::int64_t> node_token_ids;  ///< grid suites only
};

TokenRange main_window(const store::SequenceRecord& rec, std::size_t n_tokens,
                       const std::string& mode) {
  if (mode == "full") {
    return {0, n_tokens};
  }
  if (const auto test = rec.first_span(SpanLabel::kTestWindow)) {
    std::size_t start = test->start >= grid::kPrefixTokens ? test->start - grid::kPrefixTokens : 0;
    if (const auto prefix = rec.first_span(SpanLabel::kPrefix);
        prefix && prefix->end == test->start) {
      start = prefix->start;
    }
    return {start, test->end};
  }
  std::optional<TokenRange> last_shot;
  for (const auto& s : rec.spans) {
    if (s.label == SpanLabel::kShotBoundary && (!last_shot || s.start >= last_shot->start)) {
      last_shot = s.range();
    }
  }
  if (last_shot) {
    return *last_shot;
  }
  return {0, n_tokens};
}

SeqResult analyze_sequence(const store::TrajectoryBundle& bundle, std::size_t index,
                           const RunConfig& config, const std::optional<GridTruth>& truth) {
  const auto& rec = bundle.record(index);
  const auto& tens = bundle.tensors(index);
  SeqResult r;
  r.id = rec.id;
  r.condition = rec.condition;
  r.context_length = optional_size(rec.payload, "context_length");
  r.k = optional_size(rec.payload, "k");
  if (rec.payload.contains("task") && rec.payload.at("task").is_string()) {
    r.task = rec.payload.at("task").get<std::string>();
  }

  const std::size_t n_tokens = tens.activations.n_tokens();
  r.window = main_window(rec, n_tokens, config.window);
  try {
    r.profile = geometry::layer_profile(store::slice_window(bundle, rec.id, r.window));
    r.band = band_values(r.profile, config.band);
    r.ok = true;
  } catch (const Error& e) {
    r.reason = std::string("geometry: ") + e.what();
    return r;
  }

  // Phase windows, each tagged with the shot that contains it.
  std::vector<TokenRange> shots;
  for (const auto& s : rec.spans) {
    if (s.label == SpanLabel::kShotBoundary) {
      shots.push_back(s.range());
    }
  }
  std::sort(shots.begin(), shots.end(),
            [](const TokenRange& a, const TokenRange& b) { return a.start < b.start; });
  for (const auto& s : rec.spans) {
    if (s.label != SpanLabel::kQuestion && s.label != SpanLabel::kTransition &&
        s.label != SpanLabel::kChoice && s.label != SpanLabel::kAnswer) {
      continue;
    }
    PhaseResult ph;
    ph.label = s.label;
    ph.span = s.range();
    for (std::size_t i = 0; i < shots.size(); ++i) {
      if (shots[i].start <= s.start) {
        ph.shot = i;
      }
    }
    ph.test = !shots.empty() && ph.shot + 1 == shots.size();
    const auto w = widen(ph.span);
    json excl = {{"id", rec.id},
                 {"label", std::string(store::to_string(ph.label))},
                 {"shot", ph.shot}};
    if (!w) {
      excl["reason"] = "phase window shorter than 3 tokens";
      r.phase_exclusions.push_back(excl);
      continue;
    }
    ph.window = *w;
    try {
      ph.band = band_values(
          geometry::layer_profile(store::slice_window(bundle, rec.id, ph.window)),
          config.band);
      r.phases.push_back(ph);
    } catch (const Error& e) {
      excl["reason"] = std::string("geometry: ") + e.what();
      r.phase_exclusions.push_back(excl);
    }
  }

  if (truth) {
    try {
      const auto test = rec.first_span(SpanLabel::kTestWindow);
      if (!test) {
        throw DomainError("no test-window span");
      }
      const auto nodes = rec.payload.at("nodes").get<std::vector<grid::NodeId>>();
      const auto word_test = rec.payload.at("test");
      const std::size_t a = word_test.at(0).get<std::size_t>();
      const std::size_t b = word_test.at(1).get<std::size_t>();
      if (b > nodes.size() || a >= b) {
        throw DomainError("payload test range outside the walk");
      }
      const std::vector<grid::NodeId> test_nodes(nodes.begin() + static_cast<std::ptrdiff_t>(a),
                                                 nodes.begin() + static_cast<std::ptrdiff_t>(b));
      auto ev = behavior::neighbor_eval(tens.logits, truth->adjacency, truth->columns,
                                        test_nodes, test->range());
      ev.sequence_id = rec.id;
      ev.condition = rec.condition;
      r.neighbor = std::move(ev);
    } catch (const std::exception& e) {
      r.neighbor_skip = e.what();
    }
  }

  if (rec.payload.contains("expected_answer") && rec.payload.contains("generated_answer") &&
      rec.payload.at("generated_answer").is_string()) {
    r.accuracy = behavior::score_answer(rec.id,
                                        rec.payload.at("generated_answer").get<std::string>(),
                                        rec.payload.at("expected_answer").get<std::string>());
  }
  return r;
}

std::vector<SeqResult> run_pool(const store::TrajectoryBundle& bundle, const RunConfig& config,
                                const std::optional<GridTruth>& truth) {
  std::vector<SeqResult> results(bundle.size());
  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, bundle.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < bundle.size(); i = next++) {
      results[i] = analyze_sequence(bundle, i, config, truth);
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  pool.clear();
  std::sort(results.begin(), results.end(),
            [](const SeqResult& a, const SeqResult& b) { return a.id < b.id; });
  return results;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  s.n = xs.size();
  if (!xs.empty()) {
    s.mean = numeric::mean(xs);
  }
  if (xs.size() >= 2) {
    s.sd = std::sqrt(numeric::variance(xs));
  }
  return s;
}

json stat_row(const std::string& name, const std::string& column, const std::string& a,
              const std::string& b, const stats::StatResult& r) {
  return {{"name", name},
          {"test", r.test},
          {"column", column},
          {"group_a", a},
          {"group_b", b},
          {"statistic", r.statistic},
          {"df", r.df},
          {"df2", r.df2 ? json(*r.df2) : json(nullptr)},
          {"p_value", r.p_value},
          {"effect_size", r.effect_size ? json(*r.effect_size) : json(nullptr)},
          {"n", r.sample_sizes}};
}

class StatsCollector {
 public:
  template <typename F>
  void run(const std::string& name, const std::string& column, const std::string& a,
           const std::string& b, F&& f) {
    try {
      rows_.push_back(stat_row(name, column, a, b, f()));
    } catch (const Error& e) {
      skipped_.push_back({{"name", name}, {"column", column}, {"reason", e.what()}});
    }
  }
  void skip(const std::string& name, const std::string& column, const std::string& reason) {
    skipped_.push_back({{"name", name}, {"column", column}, {"reason", reason}});
  }
  json tests() const { return rows_; }
  json skipped() const { return skipped_; }

 private:
  json rows_ = json::array();
  json skipped_ = json::array();
};

std::optional<GridTruth> grid_truth(const store::BundleManifest& m, json& warnings) {
  if (!m.suite.is_object() || !m.suite.contains("kind")) {
    return std::nullopt;
  }
  const std::string kind = m.suite.at("kind").get<std::string>();
  if (kind != "grid" && kind != "latent") {
    return std::nullopt;
  }
  try {
    GridTruth t;
    if (m.tracked_token_ids.empty()) {
      throw behavior::MissingTokenError("bundle has no tracked logits", {});
    }
    if (m.tracked_token_labels.size() != m.tracked_token_ids.size()) {
      throw behavior::MissingTokenError("bundle has no tracked token labels", {});
    }
    if (kind == "grid") {
      const auto spec = grid::grid_spec_from_json(m.suite.at("spec"));
      t.adjacency = spec.adjacency;
      t.columns = behavior::grid_columns(spec, m.tracked_token_labels);
      for (const auto& cols : t.columns.columns) {
        t.node_token_ids.push_back(m.tracked_token_ids[cols.front()]);
      }
    } else {
      const auto spec = grid::latent_spec_from_json(m.suite.at("spec"));
      t.adjacency = spec.adjacency;
      t.columns = behavior::latent_columns(spec, m.tracked_token_labels);
    }
    return t;
  } catch (const std::exception& e) {
    warnings.push_back(std::string("behavioral section skipped: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace

AnalysisReport analyze(const store::TrajectoryBundle& bundle, const RunConfig& config) {
  const auto& m = bundle.manifest();
  if (config.band.hi >= m.n_layers_stored) {
    throw ValidationError("layer band [" + std::to_string(config.band.lo) + "," +
                          std::to_string(config.band.hi) + "] outside the " +
                          std::to_string(m.n_layers_stored) + " stored layers");
  }
  const std::string kind = m.suite.is_object() && m.suite.contains("kind")
                               ? m.suite.at("kind").get<std::string>()
                               : std::string();
  json warnings = json::array();
  const auto truth = grid_truth(m, warnings);
  const auto results = run_pool(bundle, config, truth);

  // Per-sequence geometry rows and exclusions.
  json sequences = json::array();
  json exclusions = json::array();
  json phase_exclusions = json::array();
  std::map<GroupKey, std::vector<const SeqResult*>> groups;
  for (const auto& r : results) {
    for (const auto& pe : r.phase_exclusions) {
      phase_exclusions.push_back(pe);
    }
    if (!r.ok) {
      exclusions.push_back({{"id", r.id},
                            {"condition", std::string(store::to_string(r.condition))},
                            {"reason", r.reason}});
      continue;
    }
    groups[{r.condition, r.context_length}].push_back(&r);
    json profile = json::object();
    for (Measure meas : geometry::kAllMeasures) {
      profile[std::string(geometry::to_string(meas))] = r.profile.values(meas);
    }
    json phases = json::array();
    for (const auto& ph : r.phases) {
      phases.push_back({{"label", std::string(store::to_string(ph.label))},
                        {"shot", ph.shot},
                        {"test", ph.test},
                        {"span", {ph.span.start, ph.span.end}},
                        {"window", {ph.window.start, ph.window.end}},
                        {"band", band_json(ph.band)}});
    }
    sequences.push_back({{"id", r.id},
                         {"condition", std::string(store::to_string(r.condition))},
                         {"context_length", r.context_length ? json(*r.context_length) : json(nullptr)},
                         {"k", r.k ? json(*r.k) : json(nullptr)},
                         {"task", r.task.empty() ? json(nullptr) : json(r.task)},
                         {"window", {r.window.start, r.window.end}},
                         {"band", band_json(r.band)},
                         {"profile", profile},
                         {"phases", phases}});
  }

  // Layer curves and band aggregates per group.
  json layer_curves = json::array();
  json band_aggregates = json::array();
  for (const auto& [key, members] : groups) {
    for (Measure meas : geometry::kAllMeasures) {
      const std::size_t mi = measure_index(meas);
      std::vector<double> mean_curve, sem_curve;
      for (std::size_t layer = 0; layer < m.n_layers_stored; ++layer) {
        std::vector<double> xs;
        for (const auto* r : members) {
          xs.push_back(r->profile.values(meas)[layer]);
        }
        const auto s = summarize(xs);
        mean_curve.push_back(s.mean);
        sem_curve.push_back(s.n > 1 ? s.sd / std::sqrt(static_cast<double>(s.n)) : 0.0);
      }
      json row = key_json(key);
      row["measure"] = std::string(geometry::to_string(meas));
      row["n"] = members.size();
      row["mean"] = mean_curve;
      row["sem"] = sem_curve;
      layer_curves.push_back(row);

      std::vector<double> band;
      for (const auto* r : members) {
        band.push_back(r->band[mi]);
      }
      const auto s = summarize(band);
      json agg = key_json(key);
      agg["measure"] = std::string(geometry::to_string(meas));
      agg["n"] = s.n;
      agg["mean"] = s.mean;
      agg["sd"] = s.sd;
      band_aggregates.push_back(agg);
    }
  }

  // Phase aggregates: task, k, label, shot.
  struct PhaseKey {
    std::string task;
    Condition condition;
    std::size_t k;
    SpanLabel label;
    std::size_t shot;
    bool test;
    auto operator<=>(const PhaseKey&) const = default;
  };
  std::map<PhaseKey, std::vector<double>> phase_values;
  for (const auto& r : results) {
    if (!r.ok) {
      continue;
    }
    for (const auto& ph : r.phases) {
      phase_values[{r.task, r.condition, r.k.value_or(0), ph.label, ph.shot, ph.test}].push_back(
          ph.band[measure_index(Measure::kStraightening)]);
    }
  }
  json phase_aggregates = json::array();
  for (const auto& [key, xs] : phase_values) {
    const auto s = summarize(xs);
    phase_aggregates.push_back({{"task", key.task},
                                {"condition", std::string(store::to_string(key.condition))},
                                {"k", key.k},
                                {"label", std::string(store::to_string(key.label))},
                                {"shot", key.shot},
                                {"test", key.test},
                                {"measure", "straightening"},
                                {"n", s.n},
                                {"mean", s.mean},
                                {"sd", s.sd}});
  }

  // Node maps for grid suites.
  json node_maps = json::array();
  if (truth && !truth->node_token_ids.empty()) {
    std::vector<std::size_t> layers = config.node_map_layers;
    if (layers.empty()) {
      layers = {config.band.lo, (config.band.lo + config.band.hi) / 2, config.band.hi};
      layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    }
    for (const auto& [key, members] : groups) {
      std::vector<std::size_t> idx;
      for (const auto* r : members) {
        idx.push_back(bundle.index_of(r->id));
      }
      for (std::size_t layer : layers) {
        if (layer >= m.n_layers_stored) {
          warnings.push_back("node map layer " + std::to_string(layer) + " not stored");
          continue;
        }
        try {
          const auto map = geometry::node_map(bundle, layer, truth->node_token_ids, idx);
          json row = key_json(key);
          json coords = json::array();
          for (const auto& c : map.coords) {
            coords.push_back({c[0], c[1]});
          }
          row["layer"] = layer;
          row["nodes"] = map.nodes;
          row["missing"] = map.missing;
          row["counts"] = map.counts;
          row["coords"] = coords;
          row["explained"] = {map.explained[0], map.explained[1]};
          node_maps.push_back(row);
        } catch (const Error& e) {
          warnings.push_back("node map " + key_name(key) + " layer " + std::to_string(layer) +
                             ": " + e.what());
        }
      }
    }
  }

  AnalysisReport out;
  out.geometry = {{"run_id", config.run_id},
                  {"suite_kind", kind.empty() ? json(nullptr) : json(kind)},
                  {"model_id", m.model_id},
                  {"n_layers", m.n_layers_stored},
                  {"band", {config.band.lo, config.band.hi}},
                  {"window", config.window},
                  {"n_sequences", bundle.size()},
                  {"sequences", sequences},
                  {"exclusions", exclusions},
                  {"phase_exclusions", phase_exclusions},
                  {"layer_curves", layer_curves},
                  {"band_aggregates", band_aggregates},
                  {"phase_aggregates", phase_aggregates},
                  {"node_maps", node_maps}};

  // Behaviour.
  json steps = json::array();
  json beh_sequences = json::array();
  json beh_exclusions = json::array();
  json accuracy = json::array();
  std::map<GroupKey, std::vector<const behavior::NeighborEval*>> beh_groups;
  std::map<std::pair<std::string, std::size_t>, std::vector<behavior::AccuracyRecord>> acc_groups;
  for (const auto& r : results) {
    if (r.neighbor) {
      const auto& ev = *r.neighbor;
      beh_groups[{r.condition, r.context_length}].push_back(&ev);
      for (std::size_t t = 0; t < ev.steps.size(); ++t) {
        const auto& s = ev.steps[t];
        steps.push_back({{"id", r.id},
                         {"condition", std::string(store::to_string(r.condition))},
                         {"context_length", r.context_length ? json(*r.context_length) : json(nullptr)},
                         {"step", t},
                         {"position", s.position},
                         {"node", s.node},
                         {"neighbor_mean", s.neighbor_mean},
                         {"non_neighbor_mean", s.non_neighbor_mean},
                         {"difference", s.difference()},
                         {"success", s.success}});
      }
      beh_sequences.push_back({{"id", r.id},
                               {"condition", std::string(store::to_string(r.condition))},
                               {"context_length", r.context_length ? json(*r.context_length) : json(nullptr)},
                               {"neighbor_mean", ev.neighbor_mean},
                               {"non_neighbor_mean", ev.non_neighbor_mean},
                               {"logit_difference", ev.logit_difference},
                               {"success_rate", ev.success_rate}});
    } else if (truth) {
      beh_exclusions.push_back({{"id", r.id}, {"reason", r.neighbor_skip}});
    }
    if (r.accuracy) {
      accuracy.push_back({{"id", r.id},
                          {"task", r.task},
                          {"k", r.k ? json(*r.k) : json(nullptr)},
                          {"generated", r.accuracy->generated},
                          {"expected", r.accuracy->expected},
                          {"correct", r.accuracy->correct}});
      acc_groups[{r.task, r.k.value_or(0)}].push_back(*r.accuracy);
    }
  }
  json beh_summary = json::array();
  for (const auto& [key, evs] : beh_groups) {
    std::vector<behavior::NeighborEval> copy;
    for (const auto* e : evs) {
      copy.push_back(*e);
    }
    const auto scatter = behavior::logit_scatter(copy);
    std::size_t wins = 0;
    for (const auto* e : evs) {
      for (const auto& s : e->steps) {
        wins += s.success ? 1 : 0;
      }
    }
    json row = key_json(key);
    row["n_sequences"] = evs.size();
    row["n_steps"] = scatter.difference.size();
    row["neighbor_mean"] = numeric::mean(scatter.neighbor);
    row["non_neighbor_mean"] = numeric::mean(scatter.non_neighbor);
    row["logit_difference"] = numeric::mean(scatter.difference);
    row["success_rate"] =
        static_cast<double>(wins) / static_cast<double>(scatter.difference.size());
    beh_summary.push_back(row);
  }
  json acc_summary = json::array();
  for (const auto& [key, recs] : acc_groups) {
    acc_summary.push_back({{"task", key.first},
                           {"k", key.second},
                           {"n", recs.size()},
                           {"accuracy", behavior::accuracy(recs)}});
  }
  const bool has_behavior = !steps.empty() || !accuracy.empty();
  out.behavior = {{"run_id", config.run_id},
                  {"status", has_behavior ? "ok" : (truth ? "empty" : "skipped")},
                  {"warnings", warnings},
                  {"steps", steps},
                  {"sequences", beh_sequences},
                  {"exclusions", beh_exclusions},
                  {"summary", beh_summary},
                  {"accuracy", accuracy},
                  {"accuracy_summary", acc_summary}};

  // Statistics.
  StatsCollector st;
  auto reference_group = [&](Condition c) -> std::optional<GroupKey> {
    std::optional<GroupKey> best;
    for (const auto& [key, _] : groups) {
      if (key.condition == c && (!best || key.length > best->length)) {
        best = key;
      }
    }
    return best;
  };
  for (const auto& [ca, cb] : config.contrasts) {
    const auto ga = reference_group(ca);
    const auto gb = reference_group(cb);
    const std::string name =
        "contrast:" + std::string(store::to_string(ca)) + "-vs-" + std::string(store::to_string(cb));
    if (!ga || !gb) {
      continue;  // condition pair not present in this bundle
    }
    for (Measure meas : kContrastMeasures) {
      const std::size_t mi = measure_index(meas);
      std::vector<double> a, b;
      for (const auto* r : groups[*ga]) {
        a.push_back(r->band[mi]);
      }
      for (const auto* r : groups[*gb]) {
        b.push_back(r->band[mi]);
      }
      st.run(name, "band." + std::string(geometry::to_string(meas)), key_name(*ga),
             key_name(*gb), [&] { return stats::ttest_ind(a, b); });
    }
    if (beh_groups.count(*ga) && beh_groups.count(*gb)) {
      auto series = [&](const GroupKey& g) {
        std::vector<behavior::NeighborEval> copy;
        for (const auto* e : beh_groups[g]) {
          copy.push_back(*e);
        }
        return behavior::logit_scatter(copy);
      };
      const auto sa = series(*ga);
      const auto sb = series(*gb);
      st.run(name, "step.difference", key_name(*ga), key_name(*gb),
             [&] { return stats::ttest_ind(sa.difference, sb.difference); });
      st.run(name, "step.neighbor_mean", key_name(*ga), key_name(*gb),
             [&] { return stats::ttest_ind(sa.neighbor, sb.neighbor); });
    }
  }

  // Within-condition geometry/behaviour coupling over the context-length sweep.
  json context_trend = json::array();
  std::map<Condition, std::vector<GroupKey>> by_condition;
  for (const auto& [key, _] : groups) {
    if (key.length) {
      by_condition[key.condition].push_back(key);
    }
  }
  for (const auto& [cond, keys] : by_condition) {
    std::vector<double> straight, diff, nb;
    for (const auto& key : keys) {
      std::vector<double> s;
      for (const auto* r : groups[key]) {
        s.push_back(r->band[measure_index(Measure::kStraightening)]);
      }
      json row = key_json(key);
      row["n"] = s.size();
      row["band_straightening"] = numeric::mean(s);
      row["logit_difference"] = nullptr;
      row["neighbor_mean"] = nullptr;
      if (beh_groups.count(key)) {
        std::vector<double> d, n;
        for (const auto* e : beh_groups[key]) {
          d.push_back(e->logit_difference);
          n.push_back(e->neighbor_mean);
        }
        row["logit_difference"] = numeric::mean(d);
        row["neighbor_mean"] = numeric::mean(n);
        straight.push_back(numeric::mean(s));
        diff.push_back(numeric::mean(d));
        nb.push_back(numeric::mean(n));
      }
      context_trend.push_back(row);
    }
    const std::string name = "sweep:" + std::string(store::to_string(cond));
    if (straight.size() >= 3) {
      st.run(name, "length_mean.band.straightening~logit_difference", "", "",
             [&] { return stats::pearson_r(straight, diff); });
      st.run(name, "length_mean.band.straightening~neighbor_mean", "", "",
             [&] { return stats::pearson_r(straight, nb); });
    } else if (keys.size() >= 3) {
      st.skip(name, "length_mean.band.straightening~logit_difference",
              "no behavioural data for the sweep");
    }
  }

  // Per-phase dynamics across shots.
  std::map<std::pair<std::string, SpanLabel>, std::map<std::size_t, std::vector<const PhaseResult*>>>
      by_task_label_k;  // (task, label) -> k -> phases
  std::map<std::string, std::size_t> max_k;
  for (const auto& r : results) {
    if (!r.ok || r.phases.empty()) {
      continue;
    }
    const std::string task = r.task.empty() ? kind : r.task;
    max_k[task] = std::max(max_k[task], r.k.value_or(0));
    for (const auto& ph : r.phases) {
      by_task_label_k[{task, ph.label}][r.k.value_or(0)].push_back(&ph);
    }
  }
  const std::size_t si = measure_index(Measure::kStraightening);
  for (const auto& [tl, by_k] : by_task_label_k) {
    const auto& [task, label] = tl;
    const std::string lname(store::to_string(label));
    const std::string prefix = "phase:" + task + ":" + lname;
    const std::size_t kmax = max_k[task];
    // One-way ANOVA over shot position inside the longest prompts.
    if (by_k.count(kmax)) {
      std::map<std::size_t, std::vector<double>> by_shot;
      for (const auto* ph : by_k.at(kmax)) {
        by_shot[ph->shot].push_back(ph->band[si]);
      }
      std::vector<std::vector<double>> groups_v;
      for (auto& [_, xs] : by_shot) {
        groups_v.push_back(xs);
      }
      if (groups_v.size() >= 2) {
        st.run(prefix + ":shot-anova", "phase.band.straightening",
               "k=" + std::to_string(kmax), "", [&] { return stats::anova_oneway(groups_v); });
        const auto first = by_shot.begin()->second;
        const auto last = std::prev(by_shot.end())->second;
        st.run(prefix + ":first-vs-last-shot", "phase.band.straightening",
               "shot=" + std::to_string(by_shot.begin()->first),
               "shot=" + std::to_string(std::prev(by_shot.end())->first),
               [&] { return stats::ttest_ind(first, last); });
      }
    }
    // Test-shot phase between the two smallest shot counts (0 vs 1 shot,
    // or 0 vs k for riddles).
    std::vector<std::size_t> ks;
    for (const auto& [k, phs] : by_k) {
      if (std::any_of(phs.begin(), phs.end(), [](const PhaseResult* p) { return p->test; })) {
        ks.push_back(k);
      }
    }
    if (ks.size() >= 2) {
      auto test_values = [&](std::size_t k) {
        std::vector<double> xs;
        for (const auto* ph : by_k.at(k)) {
          if (ph->test) {
            xs.push_back(ph->band[si]);
          }
        }
        return xs;
      };
      const auto a = test_values(ks[0]);
      const auto b = test_values(ks[1]);
      st.run(prefix + ":test-shot", "phase.band.straightening", "k=" + std::to_string(ks[0]),
             "k=" + std::to_string(ks[1]), [&] { return stats::ttest_ind(a, b); });
    }
  }

  out.geometry["context_trend"] = context_trend;
  out.stats = {{"run_id", config.run_id},
               {"tests", st.tests()},
               {"skipped", st.skipped()}};
  return out;
}

AnalysisReport cmd_analyze(const std::filesystem::path& bundle_dir, const RunConfig& config,
                           const std::filesystem::path& out) {
  const auto bundle = store::read_bundle(bundle_dir);
  auto report = analyze(bundle, config);
  std::filesystem::create_directories(out);
  auto write = [&](const char* section, const json& doc) {
    const auto path = out / (config.run_id + "." + section + ".json");
    std::ofstream f(path, std::ios::binary);
    if (!f) {
      throw Error("cannot write " + path.string());
    }
    f << doc.dump(2) << '\n';
  };
  write("geometry", report.geometry);
  write("behavior", report.behavior);
  write("stats", report.stats);
  for (const auto& w : report.behavior.at("warnings")) {
    std::cerr << "warning: " << w.get<std::string>() << '\n';
  }
  return report;
}

}  // namespace trajgeom::pipeline
