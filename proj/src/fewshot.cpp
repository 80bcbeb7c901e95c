#include "trajgeom/fewshot.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "trajgeom/rng.hpp"

namespace trajgeom::fewshot {

namespace {

using store::SpanLabel;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  return line;
}

/// Cursor over rendered text that checks each expected fragment in turn.
class Matcher {
 public:
  explicit Matcher(const std::string& text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == text_.size(); }

  void expect(std::string_view fragment, std::string_view what) {
    if (text_.compare(pos_, fragment.size(), fragment) != 0) {
      throw ParseError("template mismatch at byte " + std::to_string(pos_) +
                       ": expected " + std::string(what));
    }
    pos_ += fragment.size();
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
};

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

void require_pool(std::size_t pool, std::size_t needed, std::string_view what) {
  if (pool < needed) {
    throw DomainError(std::string(what) + ": pool has " + std::to_string(pool) +
                      " items, need at least " + std::to_string(needed));
  }
}

}  // namespace

nlohmann::json to_json(const Template& t) {
  return {{"version", t.version},
          {"question_prefix", t.question_prefix},
          {"transition", t.transition},
          {"answer_lead", t.answer_lead},
          {"separator", t.separator}};
}

nlohmann::json to_json(const RiddleTemplate& t) {
  return {{"version", t.version},
          {"question_prefix", t.question_prefix},
          {"choice_prefix", t.choice_prefix},
          {"choice_suffix", t.choice_suffix},
          {"answer_cue", t.answer_cue},
          {"answer_lead", t.answer_lead},
          {"separator", t.separator}};
}

Template template_from_json(const nlohmann::json& f) {
  try {
    Template t;
    t.version = f.value("version", 1);
    t.question_prefix = f.at("question_prefix").get<std::string>();
    t.transition = f.at("transition").get<std::string>();
    t.answer_lead = f.at("answer_lead").get<std::string>();
    t.separator = f.at("separator").get<std::string>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("few-shot template: ") + e.what());
  }
}

RiddleTemplate riddle_template_from_json(const nlohmann::json& r) {
  try {
    RiddleTemplate t;
    t.version = r.value("version", 1);
    t.question_prefix = r.at("question_prefix").get<std::string>();
    t.choice_prefix = r.at("choice_prefix").get<std::string>();
    t.choice_suffix = r.at("choice_suffix").get<std::string>();
    t.answer_cue = r.at("answer_cue").get<std::string>();
    t.answer_lead = r.at("answer_lead").get<std::string>();
    t.separator = r.at("separator").get<std::string>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("riddle template: ") + e.what());
  }
}

Templates load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const int version = doc.value("version", 0);
  if (version != 1) {
    throw ParseError(path.string() + ": unsupported template version " +
                     std::to_string(version));
  }
  if (!doc.contains("fewshot") || !doc.contains("riddle")) {
    throw ParseError(path.string() + ": needs 'fewshot' and 'riddle' sections");
  }
  Templates t{template_from_json(doc.at("fewshot")),
              riddle_template_from_json(doc.at("riddle"))};
  t.fewshot.version = version;
  t.riddle.version = version;
  return t;
}

FewShotTask load_task_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  FewShotTask task;
  task.name = path.stem().string();
  std::map<std::string, std::vector<std::size_t>> lines_by_input;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty() || trim(line).front() == '#') {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected exactly one tab between input and output");
    }
    Item item{trim(line.substr(0, tab)), trim(line.substr(tab + 1))};
    if (item.input.empty() || item.output.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": empty input or output");
    }
    lines_by_input[item.input].push_back(line_no);
    task.items.push_back(std::move(item));
  }
  std::string duplicates;
  for (const auto& [input, lines] : lines_by_input) {
    if (lines.size() > 1) {
      duplicates += "\n  '" + input + "' on lines";
      for (std::size_t l : lines) {
        duplicates += " " + std::to_string(l);
      }
    }
  }
  if (!duplicates.empty()) {
    throw ParseError(path.string() + ": duplicate inputs:" + duplicates);
  }
  if (task.items.empty()) {
    throw ParseError(path.string() + ": empty pool");
  }
  return task;
}

std::string render(std::span<const Item> shots, const Item& test,
                   const Template& t) {
  std::string out;
  for (const auto& shot : shots) {
    out += t.question_prefix + shot.input + t.transition + t.answer_lead +
           shot.output + t.separator;
  }
  out += t.question_prefix + test.input + t.transition;
  return out;
}

std::vector<ShotLayout> phase_spans(const FewShotPrompt& prompt,
                                    const Template& t) {
  Matcher m(prompt.text);
  std::vector<ShotLayout> layout;
  auto shot = [&](const Item& item, bool is_test) {
    ShotLayout s;
    s.start = m.pos();
    m.expect(t.question_prefix, "question prefix");
    m.expect(item.input, "question input");
    s.phases.push_back({SpanLabel::kQuestion, s.start, m.pos()});
    const std::size_t t_start = m.pos();
    m.expect(t.transition, "transition");
    s.phases.push_back({SpanLabel::kTransition, t_start, m.pos()});
    if (!is_test) {
      const std::size_t a_start = m.pos();
      m.expect(t.answer_lead, "answer lead");
      m.expect(item.output, "answer");
      s.phases.push_back({SpanLabel::kAnswer, a_start, m.pos()});
    }
    s.end = m.pos();
    if (!is_test) {
      m.expect(t.separator, "shot separator");
    }
    layout.push_back(std::move(s));
  };
  for (const auto& item : prompt.shots) {
    shot(item, false);
  }
  shot(prompt.test, true);
  if (!m.done()) {
    throw ParseError("template mismatch: trailing text after test question");
  }
  return layout;
}

std::vector<FewShotPrompt> build_fewshot_suite(const FewShotTask& task,
                                               std::size_t n_prompts,
                                               std::size_t k_shots,
                                               std::uint64_t seed,
                                               const Template& tmpl) {
  require_pool(task.items.size(), k_shots + 1, "few-shot suite '" + task.name + "'");
  std::vector<FewShotPrompt> out;
  out.reserve(n_prompts);
  for (std::size_t i = 0; i < n_prompts; ++i) {
    FewShotPrompt p;
    p.task = task.name;
    p.seed = derive_seed(seed, i);
    p.id = task.name + "_k" + std::to_string(k_shots) + "_" + std::to_string(i);
    Rng rng(p.seed);
    const auto picks = rng.sample_without_replacement(task.items.size(), k_shots + 1);
    for (std::size_t j = 0; j < k_shots; ++j) {
      p.shots.push_back(task.items[picks[j]]);
    }
    p.test = task.items[picks.back()];
    p.text = render(p.shots, p.test, tmpl);
    p.layout = phase_spans(p, tmpl);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Riddle> load_riddle_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::vector<std::vector<std::pair<std::size_t, std::string>>> blocks(1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    const std::string t = trim(line);
    if (t.empty()) {
      if (!blocks.back().empty()) {
        blocks.emplace_back();
      }
      continue;
    }
    if (t.front() == '#' && blocks.back().empty()) {
      continue;
    }
    blocks.back().emplace_back(line_no, t);
  }
  if (blocks.back().empty()) {
    blocks.pop_back();
  }

  std::vector<Riddle> pool;
  std::set<std::string> questions;
  for (const auto& block : blocks) {
    const std::string where = path.string() + ":" + std::to_string(block.front().first);
    if (block.size() != kRiddleChoices + 2) {
      throw ParseError(where + ": riddle block needs a question, 5 choices and an answer");
    }
    Riddle r;
    if (block[0].second.rfind("Q: ", 0) != 0) {
      throw ParseError(where + ": riddle must start with 'Q: '");
    }
    r.question = trim(block[0].second.substr(3));
    for (std::size_t i = 0; i < kRiddleChoices; ++i) {
      const std::string& l = block[i + 1].second;
      const std::string tag = "(" + letter(i) + ") ";
      if (l.rfind(tag, 0) != 0) {
        throw ParseError(path.string() + ":" + std::to_string(block[i + 1].first) +
                         ": expected choice " + tag);
      }
      r.choices[i] = trim(l.substr(tag.size()));
    }
    const std::string& ans = block.back().second;
    if (ans.rfind("Answer: ", 0) != 0 || ans.size() != 9 || ans[8] < 'A' ||
        ans[8] > 'E') {
      throw ParseError(path.string() + ":" + std::to_string(block.back().first) +
                       ": expected 'Answer: X' with X in A-E");
    }
    r.answer = ans[8];
    if (r.question.empty() || !questions.insert(r.question).second) {
      throw ParseError(where + ": empty or duplicate riddle question");
    }
    pool.push_back(std::move(r));
  }
  if (pool.empty()) {
    throw ParseError(path.string() + ": empty riddle pool");
  }
  return pool;
}

namespace {

void render_riddle(std::string& out, const Riddle& r, const RiddleTemplate& t,
                   bool with_answer) {
  out += t.question_prefix + r.question;
  for (std::size_t i = 0; i < kRiddleChoices; ++i) {
    out += t.choice_prefix + letter(i) + t.choice_suffix + r.choices[i];
  }
  out += t.answer_cue;
  if (with_answer) {
    out += t.answer_lead + r.answer_text() + t.separator;
  }
}

}  // namespace

std::string render(std::span<const Riddle> shots, const Riddle& target,
                   const RiddleTemplate& t) {
  std::string out;
  for (const auto& r : shots) {
    render_riddle(out, r, t, true);
  }
  render_riddle(out, target, t, false);
  return out;
}

std::vector<ShotLayout> phase_spans(const RiddlePrompt& prompt,
                                    const RiddleTemplate& t) {
  Matcher m(prompt.text);
  std::vector<ShotLayout> layout;
  auto shot = [&](const Riddle& r, bool is_target) {
    ShotLayout s;
    s.start = m.pos();
    m.expect(t.question_prefix, "question prefix");
    m.expect(r.question, "riddle question");
    s.phases.push_back({SpanLabel::kQuestion, s.start, m.pos()});
    const std::size_t c_start = m.pos();
    for (std::size_t i = 0; i < kRiddleChoices; ++i) {
      m.expect(t.choice_prefix + letter(i) + t.choice_suffix, "choice label");
      m.expect(r.choices[i], "choice text");
    }
    m.expect(t.answer_cue, "answer cue");
    s.phases.push_back({SpanLabel::kChoice, c_start, m.pos()});
    if (!is_target) {
      const std::size_t a_start = m.pos();
      m.expect(t.answer_lead, "answer lead");
      m.expect(r.answer_text(), "answer label");
      s.phases.push_back({SpanLabel::kAnswer, a_start, m.pos()});
    }
    s.end = m.pos();
    if (!is_target) {
      m.expect(t.separator, "riddle separator");
    }
    layout.push_back(std::move(s));
  };
  for (const auto& r : prompt.shots) {
    shot(r, false);
  }
  shot(prompt.target, true);
  if (!m.done()) {
    throw ParseError("template mismatch: trailing text after target riddle");
  }
  return layout;
}

std::vector<RiddlePrompt> build_riddle_suite(std::span<const Riddle> pool,
                                             std::size_t k_shots,
                                             std::uint64_t seed,
                                             std::size_t repeats,
                                             const RiddleTemplate& tmpl) {
  if (pool.empty()) {
    throw DomainError("riddle suite: empty pool");
  }
  if (k_shots > 0) {
    require_pool(pool.size(), k_shots + 1, "riddle suite");
  }
  const std::size_t reps = k_shots == 0 ? 1 : repeats;
  std::vector<RiddlePrompt> out;
  out.reserve(pool.size() * reps);
  for (std::size_t t = 0; t < pool.size(); ++t) {
    for (std::size_t rep = 0; rep < reps; ++rep) {
      RiddlePrompt p;
      p.target_index = t;
      p.target = pool[t];
      p.seed = derive_seed(seed, t * reps + rep);
      p.id = "riddle_k" + std::to_string(k_shots) + "_" + std::to_string(t) +
             (k_shots == 0 ? "" : "_r" + std::to_string(rep));
      Rng rng(p.seed);
      for (std::size_t idx : rng.sample_without_replacement(pool.size() - 1, k_shots)) {
        const std::size_t other = idx >= t ? idx + 1 : idx;
        p.shot_indices.push_back(other);
        p.shots.push_back(pool[other]);
      }
      p.text = render(p.shots, p.target, tmpl);
      p.layout = phase_spans(p, tmpl);
      out.push_back(std::move(p));
    }
  }
  return out;
}

nlohmann::json layout_json(std::span<const ShotLayout> layout) {
  nlohmann::json spans = nlohmann::json::array();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& s = layout[i];
    spans.push_back({{"label", "shot-boundary"},
                     {"shot", i},
                     {"char_start", s.start},
                     {"char_end", s.end}});
    for (const auto& ph : s.phases) {
      spans.push_back({{"label", std::string(store::to_string(ph.label))},
                       {"shot", i},
                       {"char_start", ph.start},
                       {"char_end", ph.end}});
    }
  }
  return spans;
}

nlohmann::json to_json(const FewShotPrompt& p) {
  nlohmann::json shots = nlohmann::json::array();
  for (const auto& s : p.shots) {
    shots.push_back({{"input", s.input}, {"output", s.output}});
  }
  return {{"id", p.id},
          {"task", p.task},
          {"k", p.shots.size()},
          {"seed", p.seed},
          {"shots", shots},
          {"test_input", p.test.input},
          {"expected_answer", p.test.output},
          {"text", p.text},
          {"spans", layout_json(p.layout)}};
}

nlohmann::json to_json(const RiddlePrompt& p) {
  return {{"id", p.id},
          {"k", p.shots.size()},
          {"seed", p.seed},
          {"target_index", p.target_index},
          {"shot_indices", p.shot_indices},
          {"expected_answer", p.expected_answer()},
          {"text", p.text},
          {"spans", layout_json(p.layout)}};
}

nlohmann::json to_json(const Riddle& r) {
  return {{"question", r.question},
          {"choices", std::vector<std::string>(r.choices.begin(), r.choices.end())},
          {"answer", std::string(1, r.answer)}};
}

Riddle riddle_from_json(const nlohmann::json& j) {
  try {
    Riddle r;
    r.question = j.at("question").get<std::string>();
    const auto choices = j.at("choices").get<std::vector<std::string>>();
    if (choices.size() != kRiddleChoices) {
      throw ParseError("riddle needs exactly 5 choices");
    }
    std::copy(choices.begin(), choices.end(), r.choices.begin());
    const auto answer = j.at("answer").get<std::string>();
    if (answer.size() != 1 || answer[0] < 'A' || answer[0] > 'E') {
      throw ParseError("riddle answer must be one of A-E");
    }
    r.answer = answer[0];
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("riddle: ") + e.what());
  }
}

}  // namespace trajgeom::fewshot
