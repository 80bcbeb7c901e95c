#pragma once

// Few-shot Q/A and multiple-choice riddle prompt suites with per-shot phase
// spans (question / transition / answer, or question / choice / answer).
// All spans are byte offsets into the rendered UTF-8 text.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajgeom/error.hpp"
#include "trajgeom/store.hpp"

namespace trajgeom::fewshot {

struct Item {
  std::string input;
  std::string output;

  bool operator==(const Item&) const = default;
};

/// A shot renders as question_prefix + input + transition + answer_lead +
/// output + separator ("Q: Latvia\nA: Riga\n\n"); the test shot stops after
/// the transition.
struct Template {
  int version = 1;
  std::string question_prefix = "Q: ";
  std::string transition = "\nA:";
  std::string answer_lead = " ";
  std::string separator = "\n\n";
};

/// question_prefix + question, then per choice choice_prefix + letter +
/// choice_suffix + text, then answer_cue, answer_lead + "(X)", separator.
struct RiddleTemplate {
  int version = 1;
  std::string question_prefix = "Q: ";
  std::string choice_prefix = "\n(";
  std::string choice_suffix = ") ";
  std::string answer_cue = "\nA:";
  std::string answer_lead = " ";
  std::string separator = "\n\n";
};

struct Templates {
  Template fewshot;
  RiddleTemplate riddle;
};

/// Versioned template file (JSON with "version", "fewshot", "riddle").
Templates load_templates(const std::filesystem::path& path);

nlohmann::json to_json(const Template& tmpl);
nlohmann::json to_json(const RiddleTemplate& tmpl);
Template template_from_json(const nlohmann::json& doc);
RiddleTemplate riddle_template_from_json(const nlohmann::json& doc);

struct FewShotTask {
  std::string name;
  std::vector<Item> items;
};

/// Tab-separated input/output rows; blank and '#' lines skipped. The task
/// name is the file stem.
FewShotTask load_task_pool(const std::filesystem::path& path);

struct PhaseSpan {
  store::SpanLabel label = store::SpanLabel::kQuestion;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const PhaseSpan&) const = default;
};

struct ShotLayout {
  std::size_t start = 0;  ///< first byte of the shot
  std::size_t end = 0;    ///< one past its last non-separator byte
  std::vector<PhaseSpan> phases;

  bool operator==(const ShotLayout&) const = default;
};

struct FewShotPrompt {
  std::string id;
  std::string task;
  std::uint64_t seed = 0;
  std::vector<Item> shots;
  Item test;  ///< test.output is the expected answer
  std::string text;
  std::vector<ShotLayout> layout;  ///< k shots then the test shot

  const std::string& expected_answer() const { return test.output; }
};

std::string render(std::span<const Item> shots, const Item& test,
                   const Template& tmpl);

/// Re-derives the phase layout by matching the rendered text against the
/// template; throws ParseError on mismatch.
std::vector<ShotLayout> phase_spans(const FewShotPrompt& prompt,
                                    const Template& tmpl = {});

std::vector<FewShotPrompt> build_fewshot_suite(const FewShotTask& task,
                                               std::size_t n_prompts,
                                               std::size_t k_shots,
                                               std::uint64_t seed,
                                               const Template& tmpl = {});

inline constexpr std::size_t kRiddleChoices = 5;

struct Riddle {
  std::string question;
  std::array<std::string, kRiddleChoices> choices;
  char answer = 'A';  ///< 'A'..'E'

  std::string answer_text() const { return std::string("(") + answer + ")"; }
  bool operator==(const Riddle&) const = default;
};

/// Blocks of "Q: ...", five "(A) ..." .. "(E) ..." lines and "Answer: X",
/// separated by blank lines.
std::vector<Riddle> load_riddle_pool(const std::filesystem::path& path);

struct RiddlePrompt {
  std::string id;
  std::uint64_t seed = 0;
  std::size_t target_index = 0;
  Riddle target;
  std::vector<std::size_t> shot_indices;
  std::vector<Riddle> shots;
  std::string text;
  std::vector<ShotLayout> layout;

  std::string expected_answer() const { return target.answer_text(); }
};

std::string render(std::span<const Riddle> shots, const Riddle& target,
                   const RiddleTemplate& tmpl);

std::vector<ShotLayout> phase_spans(const RiddlePrompt& prompt,
                                    const RiddleTemplate& tmpl = {});

/// k = 0: one prompt per riddle. k > 0: each riddle `repeats` times, each
/// with k distinct other riddles prepended in sampled order.
std::vector<RiddlePrompt> build_riddle_suite(std::span<const Riddle> pool,
                                             std::size_t k_shots,
                                             std::uint64_t seed,
                                             std::size_t repeats = 2,
                                             const RiddleTemplate& tmpl = {});

nlohmann::json to_json(const FewShotPrompt& prompt);
nlohmann::json to_json(const RiddlePrompt& prompt);
nlohmann::json to_json(const Riddle& riddle);
Riddle riddle_from_json(const nlohmann::json& doc);
nlohmann::json layout_json(std::span<const ShotLayout> layout);

}  // namespace trajgeom::fewshot
