#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "trajgeom/pipeline.hpp"
#include "trajgeom/synth.hpp"

using namespace trajgeom;
using pipeline::RunConfig;
using pipeline::UsageError;
using store::Condition;

namespace {

void save_bundle(const std::filesystem::path& dir, const store::TrajectoryBundle& b) {
  std::vector<store::SequenceTensors> t;
  for (std::size_t i = 0; i < b.size(); ++i) t.push_back(b.tensors(i));
  store::write_bundle(dir, b.manifest(), t);
}

std::map<std::string, std::string> read_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[std::filesystem::relative(e.path(), root).string()] = testing::read_text(e.path());
    }
  }
  return files;
}

nlohmann::json example_config() {
  return nlohmann::json::parse(testing::read_text(pipeline::data_dir() / "config.example.json"));
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig defaults;
  CHECK(defaults.context_lengths == std::vector<std::size_t>{64, 128, 256, 512, 1024});
  CHECK(defaults.band.lo == 15);
  CHECK(defaults.band.hi == 25);

  const auto cfg = pipeline::load_config(pipeline::data_dir() / "config.example.json");
  CHECK(cfg.seed == 20240601);
  CHECK(cfg.run_id == "grid_run");
  CHECK(cfg.contrasts.size() == 5);
  CHECK(cfg.latent.long_length == 2048);
  CHECK(pipeline::config_from_json(pipeline::to_json(cfg)).seed == cfg.seed);
  CHECK(pipeline::to_json(pipeline::config_from_json(pipeline::to_json(cfg))) ==
        pipeline::to_json(cfg));

  auto bad = [](auto mutate) {
    auto doc = example_config();
    mutate(doc);
    return doc;
  };
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["bogus"] = 1; })), UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["grid"]["depth"] = 1; })),
                  UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d.erase("config_version"); })),
                  UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["config_version"] = 2; })),
                  UsageError);
  CHECK_THROWS_AS(
      pipeline::config_from_json(bad([](auto& d) { d["context_lengths"] = {128, 64}; })),
      UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["layer_band"] = {25, 15}; })),
                  UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["window"] = "middle"; })),
                  UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["run_id"] = "a/b"; })),
                  UsageError);
  CHECK_THROWS_AS(
      pipeline::config_from_json(bad([](auto& d) { d["contrasts"] = {{"short"}}; })),
      UsageError);
  CHECK_THROWS_AS(pipeline::config_from_json(bad([](auto& d) { d["seed"] = "x"; })), UsageError);
  CHECK_THROWS_AS(pipeline::load_config("/nonexistent/config.json"), UsageError);
}

TEST_CASE("generate counts") {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.grid.long_length = 200;
  pipeline::GenerateRequest req;
  req.kind = "grid";
  req.condition = Condition::kLong;
  req.n = 7;
  // Long walks sweep every context length, plus long_length.
  const auto sweep = pipeline::generate_suite(req, cfg);
  CHECK(sweep.entries.size() == 7 * 6);
  for (const auto& e : sweep.entries) CHECK(e.condition == Condition::kLong);

  req.length = 200;
  const auto s = pipeline::generate_suite(req, cfg);
  CHECK(s.entries.size() == 7);
  for (const auto& e : s.entries) CHECK(e.doc.at("context_length") == 200);

  req.n = 0;
  testing::TempDir dir("gen_empty");
  const auto empty = pipeline::cmd_generate(req, cfg, dir / "suite");
  CHECK(empty.entries.empty());
  CHECK(pipeline::cmd_validate(dir / "suite").n_items == 0);

  pipeline::GenerateRequest riddle;
  riddle.kind = "riddle";
  riddle.k = 8;
  const auto r = pipeline::generate_suite(riddle, cfg);
  CHECK(r.entries.size() == 24);

  pipeline::GenerateRequest tight = req;
  tight.n = 1;
  tight.condition = Condition::kShort;
  tight.length = 9;
  CHECK_THROWS_AS(pipeline::generate_suite(tight, cfg), InfeasibleError);

  pipeline::GenerateRequest unknown;
  unknown.kind = "maze";
  CHECK_THROWS_AS(pipeline::generate_suite(unknown, cfg), UsageError);
  pipeline::GenerateRequest wrong = req;
  wrong.condition = Condition::kShotK;
  CHECK_THROWS_AS(pipeline::generate_suite(wrong, cfg), UsageError);
}

TEST_CASE("planted bundle: band straightening and contrast") {
  synth::PlantedOptions o;
  o.per_condition = 20;
  const auto bundle = synth::planted_bundle(o);
  RunConfig cfg;
  cfg.threads = 2;
  const auto report = pipeline::analyze(bundle, cfg);

  const auto& seqs = report.geometry.at("sequences");
  REQUIRE(seqs.size() == 40);
  for (const auto& s : seqs) {
    const auto cond = store::parse_condition(s.at("condition").get<std::string>());
    const std::size_t jitter = bundle.record(bundle.index_of(s.at("id").get<std::string>()))
                                   .payload.at("jitter")
                                   .get<std::size_t>();
    long double want = 0.0L;
    for (std::size_t layer = 15; layer <= 25; ++layer) {
      want += synth::planted_straightening(cond, jitter, layer, 20);
    }
    want /= 11.0L;
    CHECK(std::abs(s.at("band").at("straightening").get<double>() - static_cast<double>(want)) <
          1e-9);
  }

  bool found = false;
  for (const auto& t : report.stats.at("tests")) {
    if (t.at("name") == "contrast:short-vs-long" && t.at("column") == "band.straightening") {
      found = true;
      CHECK(t.at("p_value").get<double>() < 1e-6);
      CHECK(t.at("n") == nlohmann::json({20, 20}));
    }
  }
  CHECK(found);
  CHECK(report.behavior.at("status") == "skipped");
  CHECK(report.geometry.at("exclusions").empty());
}

TEST_CASE("no silent drops") {
  const auto planted = synth::planted_bundle({.per_condition = 4});
  auto manifest = planted.manifest();
  std::vector<store::SequenceTensors> tensors;
  for (std::size_t i = 0; i < planted.size(); ++i) tensors.push_back(planted.tensors(i));
  // Two-token window: too short for any curvature.
  manifest.sequences[1].spans = {{0, 2, store::SpanLabel::kTestWindow}};
  const store::TrajectoryBundle bundle(manifest, tensors);

  const auto report = pipeline::analyze(bundle, RunConfig{});
  std::set<std::string> seen;
  for (const auto& s : report.geometry.at("sequences")) seen.insert(s.at("id").get<std::string>());
  for (const auto& x : report.geometry.at("exclusions")) {
    CHECK_FALSE(x.at("reason").get<std::string>().empty());
    CHECK(seen.insert(x.at("id").get<std::string>()).second);
  }
  CHECK(seen.size() == bundle.size());
  CHECK(report.geometry.at("exclusions").size() == 1);
  CHECK(report.geometry.at("exclusions")[0].at("id") == manifest.sequences[1].id);
}

TEST_CASE("grid bundles get behaviour; bands outside the bundle are rejected") {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.grid.short_length = 64;
  cfg.grid.long_length = 160;
  pipeline::GenerateRequest req;
  req.kind = "grid";
  req.n = 4;
  const auto s = pipeline::generate_suite(req, cfg);
  synth::SimulateOptions so;
  so.n_layers = 30;
  so.hidden_dim = 6;
  const auto bundle = synth::simulate_bundle(s, so);
  const auto report = pipeline::analyze(bundle, cfg);
  CHECK(report.behavior.at("status") == "ok");
  CHECK(report.behavior.at("sequences").size() + report.behavior.at("exclusions").size() ==
        bundle.size());
  CHECK(report.behavior.at("steps").size() == 5 * report.behavior.at("sequences").size());

  RunConfig narrow = cfg;
  narrow.band = {15, 40};
  CHECK_THROWS_AS(pipeline::analyze(bundle, narrow), pipeline::ValidationError);

  // Without tracked logits the behavioural section is skipped, geometry kept.
  auto manifest = bundle.manifest();
  manifest.tracked_token_ids.clear();
  manifest.tracked_token_labels.clear();
  std::vector<store::SequenceTensors> tensors;
  for (std::size_t i = 0; i < bundle.size(); ++i) {
    auto t = bundle.tensors(i);
    t.logits = {};
    tensors.push_back(std::move(t));
  }
  const auto bare = pipeline::analyze(store::TrajectoryBundle(manifest, tensors), cfg);
  CHECK(bare.behavior.at("status") == "skipped");
  CHECK(bare.geometry.at("sequences").size() == bundle.size());
}

TEST_CASE("report tables carry headers even when empty") {
  const auto tables = pipeline::report_tables(pipeline::AnalysisReport{});
  REQUIRE_FALSE(tables.empty());
  for (const auto& t : tables) {
    CAPTURE(t.name);
    CHECK_FALSE(t.columns.empty());
    CHECK(t.rows.empty());
    const auto csv = pipeline::to_csv(t);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);
  }

  pipeline::Table t{"x", {"a", "b"}, {{"1", "has,comma"}, {"q\"uote", ""}}};
  CHECK(pipeline::to_csv(t) == "a,b\n1,\"has,comma\"\n\"q\"\"uote\",\n");
}

TEST_CASE("end-to-end determinism through the file interface") {
  auto run = [](const std::filesystem::path& root) {
    RunConfig cfg;
    cfg.seed = 17;
    cfg.grid.long_length = 128;
    pipeline::GenerateRequest req;
    req.kind = "grid";
    req.n = 3;
    const auto s = pipeline::cmd_generate(req, cfg, root / "suite");
    synth::SimulateOptions so;
    so.seed = 17;
    save_bundle(root / "bundle", synth::simulate_bundle(s, so));
    pipeline::cmd_analyze(root / "bundle", cfg, root / "analysis");
    for (const char* format : {"csv", "json", "svg"}) {
      pipeline::cmd_report(root / "analysis", cfg.run_id, format, root / "report");
    }
  };
  testing::TempDir a("det_a");
  testing::TempDir b("det_b");
  run(a.path());
  run(b.path());
  const auto fa = read_tree(a.path());
  const auto fb = read_tree(b.path());
  CHECK(fa.size() > 20);
  REQUIRE(fa.size() == fb.size());
  for (const auto& [name, bytes] : fa) {
    CAPTURE(name);
    REQUIRE(fb.count(name) == 1);
    CHECK(fb.at(name) == bytes);
  }
  CHECK_THROWS_AS(pipeline::cmd_report(a / "analysis", "run", "pdf", a / "r2"), UsageError);
}
