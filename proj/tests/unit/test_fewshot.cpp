#include <doctest.h>

#include <cctype>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "trajgeom/fewshot.hpp"
#include "trajgeom/pipeline.hpp"

using namespace trajgeom;
using store::SpanLabel;

namespace {

fewshot::FewShotTask capitals() {
  return fewshot::load_task_pool(pipeline::data_dir() / "pools" / "country_capital.tsv");
}

std::vector<fewshot::Riddle> riddles() {
  return fewshot::load_riddle_pool(pipeline::data_dir() / "riddles.txt");
}

std::string cut(const std::string& text, const fewshot::PhaseSpan& p) {
  return text.substr(p.start, p.end - p.start);
}

// Phases are ordered, disjoint, inside the shot, and every non-whitespace
// byte of the shot falls in some phase.
void expect_partition(const std::string& text,
                      const std::vector<fewshot::ShotLayout>& layout) {
  std::size_t prev_end = 0;
  for (const auto& shot : layout) {
    CHECK(shot.start >= prev_end);
    std::vector<bool> covered(shot.end - shot.start, false);
    std::size_t cursor = shot.start;
    for (const auto& p : shot.phases) {
      CHECK(p.start >= cursor);
      CHECK(p.end >= p.start);
      CHECK(p.end <= shot.end);
      for (std::size_t i = p.start; i < p.end; ++i) covered[i - shot.start] = true;
      cursor = p.end;
    }
    for (std::size_t i = shot.start; i < shot.end; ++i) {
      if (!std::isspace(static_cast<unsigned char>(text[i]))) {
        CHECK(covered[i - shot.start]);
      }
    }
    prev_end = shot.end;
  }
}

}  // namespace

TEST_CASE("Latvia shot phases") {
  const std::vector<fewshot::Item> shots{{"Latvia", "Riga"}};
  const fewshot::Item test{"France", "Paris"};
  fewshot::FewShotPrompt p;
  p.shots = shots;
  p.test = test;
  p.text = fewshot::render(shots, test, {});
  CHECK(p.text == "Q: Latvia\nA: Riga\n\nQ: France\nA:");

  const auto layout = fewshot::phase_spans(p);
  REQUIRE(layout.size() == 2);
  const auto& first = layout[0].phases;
  REQUIRE(first.size() == 3);
  CHECK(first[0].label == SpanLabel::kQuestion);
  CHECK(cut(p.text, first[0]) == "Q: Latvia");
  CHECK(first[1].label == SpanLabel::kTransition);
  CHECK(cut(p.text, first[1]) == "\nA:");
  CHECK(first[2].label == SpanLabel::kAnswer);
  CHECK(cut(p.text, first[2]) == " Riga");

  const auto& last = layout[1].phases;
  REQUIRE(last.size() == 2);
  CHECK(cut(p.text, last[0]) == "Q: France");
  CHECK(cut(p.text, last[1]) == "\nA:");
  expect_partition(p.text, layout);
}

TEST_CASE("phase_spans rejects text that does not follow the template") {
  fewshot::FewShotPrompt p;
  p.shots = {{"Latvia", "Riga"}};
  p.test = {"France", "Paris"};
  p.text = "Q: Latvia\nAnswer: Riga\n\nQ: France\nA:";
  CHECK_THROWS_AS(fewshot::phase_spans(p), ParseError);
  p.text = fewshot::render(p.shots, p.test, {}) + " extra";
  CHECK_THROWS_AS(fewshot::phase_spans(p), ParseError);
}

TEST_CASE("few-shot suite counts, exclusion, partition") {
  const auto task = capitals();
  CHECK(task.name == "country_capital");
  CHECK(task.items.front() == fewshot::Item{"Latvia", "Riga"});

  const auto suite = fewshot::build_fewshot_suite(task, 100, 8, 42);
  REQUIRE(suite.size() == 100);
  for (const auto& p : suite) {
    REQUIRE(p.shots.size() == 8);
    std::set<std::string> inputs;
    for (const auto& s : p.shots) inputs.insert(s.input);
    CHECK(inputs.size() == 8);
    CHECK(inputs.count(p.test.input) == 0);
    REQUIRE(p.layout.size() == 9);
    CHECK(p.layout == fewshot::phase_spans(p));
    CHECK(p.layout.back().phases.size() == 2);
    expect_partition(p.text, p.layout);
    CHECK(p.text == fewshot::render(p.shots, p.test, {}));
  }

  const auto again = fewshot::build_fewshot_suite(task, 100, 8, 42);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    CHECK(fewshot::to_json(suite[i]).dump() == fewshot::to_json(again[i]).dump());
  }
  CHECK(fewshot::build_fewshot_suite(task, 5, 8, 43)[0].text != suite[0].text);

  const auto zero = fewshot::build_fewshot_suite(task, 3, 0, 1);
  REQUIRE(zero.size() == 3);
  CHECK(zero[0].layout.size() == 1);
  CHECK(zero[0].text == "Q: " + zero[0].test.input + "\nA:");
}

TEST_CASE("few-shot suite and pool errors") {
  fewshot::FewShotTask small{"tiny", {{"a", "1"}, {"b", "2"}, {"c", "3"}}};
  CHECK_THROWS_AS(fewshot::build_fewshot_suite(small, 4, 3, 1), DomainError);
  CHECK(fewshot::build_fewshot_suite(small, 4, 2, 1).size() == 4);

  testing::TempDir dir("fewshot");
  {
    std::ofstream(dir / "dup.tsv") << "a\t1\nb\t2\na\t3\n";
    std::ofstream(dir / "empty.tsv") << "# nothing\n\n";
    std::ofstream(dir / "bad.tsv") << "no tab here\n";
  }
  CHECK_THROWS_AS(fewshot::load_task_pool(dir / "dup.tsv"), ParseError);
  CHECK_THROWS_AS(fewshot::load_task_pool(dir / "empty.tsv"), ParseError);
  CHECK_THROWS_AS(fewshot::load_task_pool(dir / "bad.tsv"), ParseError);
  CHECK_THROWS_AS(fewshot::load_task_pool(dir / "missing.tsv"), ParseError);
}

TEST_CASE("riddle rendering and phases") {
  const auto pool = riddles();
  REQUIRE(pool.size() >= 9);
  for (const auto& r : pool) {
    CHECK(r.answer >= 'A');
    CHECK(r.answer <= 'E');
  }

  fewshot::RiddlePrompt p;
  p.target = pool[0];
  p.shots = {pool[1]};
  p.text = fewshot::render(p.shots, p.target, {});
  const auto layout = fewshot::phase_spans(p);
  REQUIRE(layout.size() == 2);
  const auto& shot = layout[0].phases;
  REQUIRE(shot.size() == 3);
  CHECK(shot[0].label == SpanLabel::kQuestion);
  CHECK(shot[1].label == SpanLabel::kChoice);
  CHECK(shot[2].label == SpanLabel::kAnswer);
  CHECK(cut(p.text, shot[0]) == "Q: " + pool[1].question);
  const std::string choices = cut(p.text, shot[1]);
  for (char c = 'A'; c <= 'E'; ++c) {
    CHECK(choices.find(std::string("(") + c + ") ") != std::string::npos);
  }
  CHECK(choices.find(pool[1].choices[4]) != std::string::npos);
  CHECK(cut(p.text, shot[2]).find(pool[1].answer_text()) != std::string::npos);
  CHECK(layout[1].phases.size() == 2);
  expect_partition(p.text, layout);
}

TEST_CASE("riddle suite counts and exclusion") {
  const auto pool = riddles();
  const auto zero = fewshot::build_riddle_suite(pool, 0, 3);
  CHECK(zero.size() == pool.size());
  for (std::size_t i = 0; i < zero.size(); ++i) {
    CHECK(zero[i].shots.empty());
    CHECK(zero[i].target == pool[zero[i].target_index]);
  }

  const auto eight = fewshot::build_riddle_suite(pool, 8, 3);
  REQUIRE(eight.size() == 2 * pool.size());
  std::vector<int> per_target(pool.size(), 0);
  for (const auto& p : eight) {
    ++per_target[p.target_index];
    REQUIRE(p.shot_indices.size() == 8);
    std::set<std::size_t> distinct(p.shot_indices.begin(), p.shot_indices.end());
    CHECK(distinct.size() == 8);
    CHECK(distinct.count(p.target_index) == 0);
    CHECK(p.layout.size() == 9);
    CHECK(p.layout == fewshot::phase_spans(p));
    expect_partition(p.text, p.layout);
    CHECK(p.expected_answer() == p.target.answer_text());
  }
  for (int c : per_target) CHECK(c == 2);

  const auto again = fewshot::build_riddle_suite(pool, 8, 3);
  for (std::size_t i = 0; i < eight.size(); ++i) {
    CHECK(fewshot::to_json(eight[i]).dump() == fewshot::to_json(again[i]).dump());
  }

  const std::vector<fewshot::Riddle> five(pool.begin(), pool.begin() + 5);
  CHECK_THROWS_AS(fewshot::build_riddle_suite(five, 8, 1), DomainError);
  CHECK_THROWS_AS(fewshot::build_riddle_suite({}, 0, 1), DomainError);
}

TEST_CASE("riddle json and pool parsing errors") {
  const auto pool = riddles();
  CHECK(fewshot::riddle_from_json(fewshot::to_json(pool[2])) == pool[2]);
  auto bad = fewshot::to_json(pool[2]);
  bad["answer"] = "F";
  CHECK_THROWS_AS(fewshot::riddle_from_json(bad), ParseError);

  testing::TempDir dir("riddles");
  {
    std::ofstream(dir / "four.txt") << "Q: what?\n(A) a\n(B) b\n(C) c\n(D) d\nAnswer: A\n";
    std::ofstream(dir / "label.txt")
        << "Q: what?\n(A) a\n(B) b\n(C) c\n(D) d\n(E) e\nAnswer: Z\n";
  }
  CHECK_THROWS_AS(fewshot::load_riddle_pool(dir / "four.txt"), ParseError);
  CHECK_THROWS_AS(fewshot::load_riddle_pool(dir / "label.txt"), ParseError);
}

TEST_CASE("templates file") {
  const auto t = fewshot::load_templates(pipeline::data_dir() / "templates.json");
  CHECK(t.fewshot.question_prefix == "Q: ");
  CHECK(t.fewshot.transition == "\nA:");
  CHECK(t.riddle.answer_cue == "\nA:");

  fewshot::Template custom;
  custom.question_prefix = "Input: ";
  custom.transition = "\nOutput:";
  const auto back = fewshot::template_from_json(fewshot::to_json(custom));
  CHECK(back.transition == "\nOutput:");
  const std::vector<fewshot::Item> shots{{"hot", "cold"}};
  fewshot::FewShotPrompt p;
  p.shots = shots;
  p.test = {"up", "down"};
  p.text = fewshot::render(shots, p.test, custom);
  CHECK(p.text == "Input: hot\nOutput: cold\n\nInput: up\nOutput:");
  CHECK(cut(p.text, fewshot::phase_spans(p, custom)[0].phases[1]) == "\nOutput:");

  testing::TempDir dir("templates");
  std::ofstream(dir / "v9.json") << R"({"version": 9, "fewshot": {}, "riddle": {}})";
  CHECK_THROWS_AS(fewshot::load_templates(dir / "v9.json"), ParseError);
}
