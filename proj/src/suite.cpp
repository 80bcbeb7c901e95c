#include "trajgeom/suite.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "trajgeom/fewshot.hpp"
#include "trajgeom/gridworld.hpp"

namespace trajgeom::suite {

namespace {

bool valid_id(std::string_view id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
           c == '-';
  });
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << doc.dump(2) << '\n';
  if (!out) {
    throw Error("write failed: " + path.string());
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void check_fewshot(const Entry& e, const fewshot::Template& tmpl,
                   std::vector<std::string>& v) {
  fewshot::FewShotPrompt p;
  p.id = e.id;
  for (const auto& s : e.doc.at("shots")) {
    p.shots.push_back({s.at("input").get<std::string>(), s.at("output").get<std::string>()});
  }
  p.test = {e.doc.at("test_input").get<std::string>(),
            e.doc.at("expected_answer").get<std::string>()};
  p.text = fewshot::render(p.shots, p.test, tmpl);
  if (p.text != e.text()) {
    v.push_back(e.id + ": text does not match the rendered shots");
    return;
  }
  p.layout = fewshot::phase_spans(p, tmpl);
  if (fewshot::layout_json(p.layout) != e.doc.at("spans")) {
    v.push_back(e.id + ": spans do not match the template layout");
  }
}

void check_riddle(const Entry& e, const std::vector<fewshot::Riddle>& pool,
                  const fewshot::RiddleTemplate& tmpl, std::vector<std::string>& v) {
  fewshot::RiddlePrompt p;
  p.target_index = e.doc.at("target_index").get<std::size_t>();
  if (p.target_index >= pool.size()) {
    v.push_back(e.id + ": target index outside the pool");
    return;
  }
  p.target = pool[p.target_index];
  std::set<std::size_t> seen{p.target_index};
  for (const auto& idx : e.doc.at("shot_indices")) {
    const auto i = idx.get<std::size_t>();
    if (i >= pool.size() || !seen.insert(i).second) {
      v.push_back(e.id + ": shot index repeated or outside the pool");
      return;
    }
    p.shot_indices.push_back(i);
    p.shots.push_back(pool[i]);
  }
  p.text = fewshot::render(p.shots, p.target, tmpl);
  if (p.text != e.text()) {
    v.push_back(e.id + ": text does not match the rendered riddles");
    return;
  }
  p.layout = fewshot::phase_spans(p, tmpl);
  if (fewshot::layout_json(p.layout) != e.doc.at("spans")) {
    v.push_back(e.id + ": spans do not match the template layout");
  }
  if (e.doc.at("expected_answer") != p.expected_answer()) {
    v.push_back(e.id + ": expected answer disagrees with the pool");
  }
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) {
    words.push_back(std::move(cur));
  }
  return words;
}

}  // namespace

const std::string& Entry::text() const { return doc.at("text").get_ref<const std::string&>(); }

nlohmann::json Entry::payload() const {
  nlohmann::json p = doc;
  p.erase("text");
  p.erase("spans");
  return p;
}

nlohmann::json Suite::header() const {
  return {{"suite_version", kSuiteVersion},
          {"kind", kind},
          {"seed", seed},
          {"spec", spec},
          {"generator", generator}};
}

Entry make_entry(std::string id, store::Condition condition, nlohmann::json doc) {
  doc["id"] = id;
  doc["condition"] = std::string(store::to_string(condition));
  if (!doc.contains("spans")) {
    doc["spans"] = nlohmann::json::array();
  }
  return Entry{std::move(id), condition, std::move(doc)};
}

void write_suite(const std::filesystem::path& dir, const Suite& suite) {
  std::filesystem::create_directories(dir);
  nlohmann::json head = suite.header();
  nlohmann::json list = nlohmann::json::array();
  std::set<std::string> ids;
  for (const auto& e : suite.entries) {
    if (!valid_id(e.id) || !ids.insert(e.id).second) {
      throw Error("invalid or duplicate suite entry id '" + e.id + "'");
    }
    list.push_back({{"id", e.id},
                    {"condition", std::string(store::to_string(e.condition))},
                    {"file", e.id + ".json"}});
    write_json(dir / (e.id + ".json"), e.doc);
  }
  head["entries"] = list;
  write_json(dir / "suite.json", head);
}

Suite read_suite(const std::filesystem::path& dir) {
  const nlohmann::json head = read_json(dir / "suite.json");
  try {
    if (head.at("suite_version").get<int>() != kSuiteVersion) {
      throw ParseError("unsupported suite_version in " + (dir / "suite.json").string());
    }
    Suite s;
    s.kind = head.at("kind").get<std::string>();
    s.seed = head.at("seed").get<std::uint64_t>();
    s.spec = head.at("spec");
    s.generator = head.value("generator", nlohmann::json::object());
    for (const auto& item : head.at("entries")) {
      const auto id = item.at("id").get<std::string>();
      const auto file = item.at("file").get<std::string>();
      if (!valid_id(id) || file != id + ".json") {
        throw ParseError("suite entry '" + id + "' has an invalid id or file name");
      }
      nlohmann::json doc = read_json(dir / file);
      if (doc.at("id") != id) {
        throw ParseError(file + ": id does not match suite.json");
      }
      const auto cond = store::parse_condition(item.at("condition").get<std::string>());
      if (doc.at("condition") != item.at("condition")) {
        throw ParseError(file + ": condition does not match suite.json");
      }
      s.entries.push_back({id, cond, std::move(doc)});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "suite.json").string() + ": " + e.what());
  }
}

std::vector<std::string> validate_suite(const Suite& suite) {
  std::vector<std::string> v;
  std::set<std::string> ids;
  std::optional<grid::GridTaskSpec> grid_spec;
  std::optional<grid::LatentGridTaskSpec> latent_spec;
  std::vector<fewshot::Riddle> riddles;
  fewshot::Template fewshot_template;
  fewshot::RiddleTemplate riddle_template;
  std::map<std::string, const Entry*> by_id;

  try {
    if (suite.kind == "grid") {
      grid_spec = grid::grid_spec_from_json(suite.spec);
    } else if (suite.kind == "latent") {
      latent_spec = grid::latent_spec_from_json(suite.spec);
    } else if (suite.kind == "riddle") {
      for (const auto& r : suite.spec.at("pool")) {
        riddles.push_back(fewshot::riddle_from_json(r));
      }
      riddle_template = fewshot::riddle_template_from_json(suite.spec.at("template"));
    } else if (suite.kind == "fewshot") {
      fewshot_template = fewshot::template_from_json(suite.spec.at("template"));
    } else if (suite.kind != "text") {
      v.push_back("unknown suite kind '" + suite.kind + "'");
      return v;
    }
  } catch (const std::exception& e) {
    v.push_back(std::string("suite spec: ") + e.what());
    return v;
  }

  for (const auto& e : suite.entries) {
    by_id[e.id] = &e;
  }
  for (const auto& e : suite.entries) {
    if (!valid_id(e.id) || !ids.insert(e.id).second) {
      v.push_back(e.id + ": invalid or duplicate id");
      continue;
    }
    try {
      const std::string& text = e.text();
      for (const auto& s : e.doc.at("spans")) {
        const auto a = s.at("char_start").get<std::size_t>();
        const auto b = s.at("char_end").get<std::size_t>();
        store::parse_span_label(s.at("label").get<std::string>());
        if (a >= b || b > text.size()) {
          v.push_back(e.id + ": span [" + std::to_string(a) + "," + std::to_string(b) +
                      ") outside the text");
        }
      }
      if (grid_spec || latent_spec) {
        const auto inst = grid::instance_from_json(e.doc);
        if (inst.condition != e.condition) {
          v.push_back(e.id + ": instance condition disagrees with entry");
        }
        const nlohmann::json rendered = grid::to_json(inst);
        if (rendered.at("text") != text) {
          v.push_back(e.id + ": text does not match the walk");
        } else if (rendered.at("spans") != e.doc.at("spans")) {
          v.push_back(e.id + ": spans do not match the rendered walk");
        }
        std::vector<std::string> audit;
        if (grid_spec) {
          audit = grid::audit_instance(inst, grid_spec->adjacency);
          for (std::size_t i = 0; i < inst.nodes.size() && i < inst.words.size(); ++i) {
            if (inst.nodes[i] >= grid_spec->words.size() ||
                grid_spec->words[inst.nodes[i]] != inst.words[i]) {
              audit.push_back("emission: word does not belong to its node at position " +
                              std::to_string(i));
              break;
            }
          }
        } else {
          audit = grid::audit_instance(inst, latent_spec->adjacency, latent_spec->excluded);
          for (std::size_t i = 0; i < inst.nodes.size() && i < inst.words.size(); ++i) {
            if (latent_spec->parent_of(inst.words[i]) != inst.nodes[i]) {
              audit.push_back("emission: child word not emitted by its latent node at position " +
                              std::to_string(i));
              break;
            }
          }
        }
        for (const auto& msg : audit) {
          v.push_back(e.id + ": " + msg);
        }
      } else if (suite.kind == "fewshot") {
        check_fewshot(e, fewshot_template, v);
      } else if (suite.kind == "riddle") {
        check_riddle(e, riddles, riddle_template, v);
      } else if (e.condition == store::Condition::kRandomControl) {
        const auto src = e.doc.at("source_id").get<std::string>();
        const auto it = by_id.find(src);
        if (it == by_id.end()) {
          v.push_back(e.id + ": shuffled control refers to missing entry " + src);
        } else {
          auto a = split_words(text);
          auto b = split_words(it->second->text());
          std::sort(a.begin(), a.end());
          std::sort(b.begin(), b.end());
          if (a != b) {
            v.push_back(e.id + ": shuffled control is not a permutation of " + src);
          }
        }
      }
    } catch (const std::exception& ex) {
      v.push_back(e.id + ": " + ex.what());
    }
  }
  return v;
}

}  // namespace trajgeom::suite
