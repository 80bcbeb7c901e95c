#pragma once

// CLI-level orchestration: suite generation, validation, analysis and
// report rendering. Every command is a plain function so the CLI, the
// Python module and the tests share one code path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajgeom/error.hpp"
#include "trajgeom/geometry.hpp"
#include "trajgeom/store.hpp"
#include "trajgeom/suite.hpp"

namespace trajgeom::pipeline {

/// Bad command-line or config usage (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input failed validation (exit code 2).
class ValidationError : public Error {
 public:
  ValidationError(const std::string& message, std::vector<std::string> details = {})
      : Error(message), details_(std::move(details)) {}
  const std::vector<std::string>& details() const { return details_; }

 private:
  std::vector<std::string> details_;
};

inline constexpr int kConfigVersion = 1;

struct GridConfig {
  std::size_t width = 6;
  std::size_t height = 6;
  std::string words;  ///< word list path; empty = bundled list
  std::size_t short_length = 64;
  std::size_t long_length = 1024;
};

struct LatentConfig {
  std::size_t width = 4;
  std::size_t height = 4;
  std::string categories;  ///< category file; empty = bundled list
  std::size_t excluded_pairs = 8;
  std::size_t short_length = 64;
  std::size_t long_length = 2048;
};

struct FewShotConfig {
  std::vector<std::string> pools;  ///< empty = every bundled pool
  std::vector<std::size_t> shots{0, 1, 2, 3, 4, 5};
  std::size_t n_prompts = 100;
};

struct RiddleConfig {
  std::string pool;  ///< empty = bundled sample pool
  std::vector<std::size_t> shots{0, 8};
  std::size_t repeats = 2;
};

using Contrast = std::pair<store::Condition, store::Condition>;

struct RunConfig {
  std::uint64_t seed = 0;
  std::string run_id = "run";
  std::size_t n_instances = 200;
  std::vector<std::size_t> context_lengths{64, 128, 256, 512, 1024};
  geometry::LayerBand band{15, 25};
  std::string window = "analysis";  ///< "analysis" or "full"
  std::size_t threads = 0;          ///< 0 = hardware concurrency
  std::vector<std::size_t> node_map_layers;  ///< empty = band lo, middle, hi
  std::vector<Contrast> contrasts{
      {store::Condition::kShort, store::Condition::kLong},
      {store::Condition::kLong, store::Condition::kLongRepeat},
      {store::Condition::kShort, store::Condition::kZeroShot},
      {store::Condition::kZeroShot, store::Condition::kLong},
      {store::Condition::kRandomControl, store::Condition::kNatural},
  };
  std::string templates;  ///< template file; empty = built-in templates
  GridConfig grid;
  LatentConfig latent;
  FewShotConfig fewshot;
  RiddleConfig riddle;
};

/// Unknown keys and out-of-range values raise UsageError.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Directory holding the bundled word lists and pools: $TRAJGEOM_DATA_DIR
/// when set, else the source tree's data/ directory.
std::filesystem::path data_dir();

struct GenerateRequest {
  std::string kind;  ///< grid | latent | fewshot | riddle | text
  std::optional<store::Condition> condition;
  std::optional<std::size_t> n;
  std::optional<std::size_t> length;
  std::optional<std::size_t> k;
  std::optional<std::string> pool;    ///< few-shot or riddle pool file
  std::optional<std::string> source;  ///< text passages, one per line
};

suite::Suite generate_suite(const GenerateRequest& request, const RunConfig& config);
/// Writes the suite to `out` and returns it.
suite::Suite cmd_generate(const GenerateRequest& request, const RunConfig& config,
                          const std::filesystem::path& out);

struct ValidateResult {
  std::string kind;  ///< "bundle" or "suite"
  std::size_t n_items = 0;
};

/// Validates a bundle (manifest.json) or suite (suite.json) directory;
/// throws ValidationError / BundleError on failure.
ValidateResult cmd_validate(const std::filesystem::path& path);

struct AnalysisReport {
  nlohmann::json geometry;
  nlohmann::json behavior;
  nlohmann::json stats;
};

AnalysisReport analyze(const store::TrajectoryBundle& bundle, const RunConfig& config);

/// Writes <run_id>.geometry.json, .behavior.json and .stats.json.
AnalysisReport cmd_analyze(const std::filesystem::path& bundle_dir,
                           const RunConfig& config, const std::filesystem::path& out);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

/// Flattens analysis output into one table per section. Missing sections
/// give tables with headers and no rows.
std::vector<Table> report_tables(const AnalysisReport& report);

std::string to_csv(const Table& table);

/// format: csv | json | svg. Reads <run_id>.*.json from `in_dir`; returns
/// the files written.
std::vector<std::filesystem::path> cmd_report(const std::filesystem::path& in_dir,
                                              const std::string& run_id,
                                              const std::string& format,
                                              const std::filesystem::path& out);

}  // namespace trajgeom::pipeline
