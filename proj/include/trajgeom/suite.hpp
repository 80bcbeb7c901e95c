#pragma once

// Prompt suites on disk: a directory holding suite.json plus one
// <entry id>.json per prompt. Every entry carries "id", "condition", "text"
// and "spans" (byte offsets into text); all other keys are task ground truth
// that the extractor copies into the bundle's per-sequence payload.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajgeom/error.hpp"
#include "trajgeom/store.hpp"

namespace trajgeom::suite {

inline constexpr int kSuiteVersion = 1;

struct Entry {
  std::string id;
  store::Condition condition = store::Condition::kNatural;
  nlohmann::json doc;  ///< full entry document, including id and condition

  const std::string& text() const;
  /// Everything except text and spans.
  nlohmann::json payload() const;
};

struct Suite {
  std::string kind;  ///< grid | latent | fewshot | riddle | text
  std::uint64_t seed = 0;
  nlohmann::json spec;       ///< task spec (null for text suites)
  nlohmann::json generator;  ///< generation parameters
  std::vector<Entry> entries;

  /// suite.json content without the entry list.
  nlohmann::json header() const;
};

Entry make_entry(std::string id, store::Condition condition, nlohmann::json doc);

void write_suite(const std::filesystem::path& dir, const Suite& suite);
Suite read_suite(const std::filesystem::path& dir);

/// Structural and task-level checks (grid audits, span/text agreement).
/// Returns one message per violation.
std::vector<std::string> validate_suite(const Suite& suite);

}  // namespace trajgeom::suite
