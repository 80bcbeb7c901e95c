#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "trajgeom/fewshot.hpp"
#include "trajgeom/gridworld.hpp"
#include "trajgeom/pipeline.hpp"
#include "trajgeom/rng.hpp"

namespace trajgeom::pipeline {

namespace {

using nlohmann::json;
using store::Condition;

// Seed streams under the root seed.
constexpr std::uint64_t kSpecStream = 0;
constexpr std::uint64_t kInstanceStream = 1;

std::string padded(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

std::filesystem::path resolve(const std::string& configured, const char* fallback) {
  return configured.empty() ? data_dir() / fallback : std::filesystem::path(configured);
}

fewshot::Templates templates_for(const RunConfig& config) {
  return config.templates.empty() ? fewshot::Templates{}
                                  : fewshot::load_templates(config.templates);
}

std::size_t condition_code(Condition c) { return static_cast<std::size_t>(c); }

/// Context lengths a grid condition is generated at.
std::vector<std::size_t> lengths_for(Condition cond, const GenerateRequest& req,
                                     std::size_t short_length, std::size_t long_length,
                                     const std::vector<std::size_t>& sweep) {
  if (req.length) {
    return {*req.length};
  }
  if (cond == Condition::kShort) {
    return {short_length};
  }
  if (cond == Condition::kLong && !sweep.empty()) {
    std::vector<std::size_t> out;
    for (std::size_t len : sweep) {
      if (len >= grid::minimum_length(cond)) {
        out.push_back(len);
      }
    }
    if (std::find(out.begin(), out.end(), long_length) == out.end()) {
      out.push_back(long_length);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  return {long_length};
}

template <typename MakeInstance>
void add_walks(suite::Suite& s, const std::string& prefix,
               const std::vector<Condition>& conditions, const GenerateRequest& req,
               const RunConfig& config, std::size_t short_length, std::size_t long_length,
               const std::vector<std::size_t>& sweep, MakeInstance make) {
  const std::size_t n = req.n.value_or(config.n_instances);
  json groups = json::array();
  for (Condition cond : conditions) {
    for (std::size_t len : lengths_for(cond, req, short_length, long_length, sweep)) {
      const std::uint64_t group_seed =
          derive_seed(derive_seed(derive_seed(config.seed, kInstanceStream),
                                  condition_code(cond)),
                      len);
      std::set<std::vector<std::string>> seen;
      std::size_t draws = 0;
      for (std::size_t i = 0; i < n; ++i) {
        grid::WalkInstance inst;
        // Duplicate walks are redrawn from the next seed in the stream.
        do {
          if (draws >= n + grid::kRetryBudget) {
            throw InfeasibleError("could not draw " + std::to_string(n) +
                                  " unique instances for " +
                                  std::string(store::to_string(cond)));
          }
          inst = make(cond, len, derive_seed(group_seed, draws++));
        } while (!seen.insert(inst.words).second);
        const std::string id = prefix + "_" + std::string(store::to_string(cond)) + "_L" +
                               std::to_string(len) + "_" + padded(i);
        s.entries.push_back(suite::make_entry(id, cond, grid::to_json(inst)));
      }
      groups.push_back({{"condition", std::string(store::to_string(cond))},
                        {"context_length", len},
                        {"n", n}});
    }
  }
  s.generator["groups"] = groups;
}

std::vector<Condition> walk_conditions(const GenerateRequest& req, bool latent) {
  if (req.condition) {
    return {*req.condition};
  }
  std::vector<Condition> out{Condition::kShort, Condition::kLong, Condition::kLongRepeat};
  if (latent) {
    out.push_back(Condition::kZeroShot);
  }
  return out;
}

void check_walk_condition(Condition c, bool latent) {
  const bool ok = c == Condition::kShort || c == Condition::kLong ||
                  c == Condition::kLongRepeat || (latent && c == Condition::kZeroShot);
  if (!ok) {
    throw UsageError("condition '" + std::string(store::to_string(c)) +
                     "' is not available for " + (latent ? "latent" : "grid") + " suites");
  }
}

suite::Suite generate_grid(const GenerateRequest& req, const RunConfig& config) {
  const auto words = grid::load_word_list(resolve(config.grid.words, "grid_words.txt"));
  const auto spec = grid::make_grid_spec(config.grid.width, config.grid.height, words,
                                         derive_seed(config.seed, kSpecStream));
  suite::Suite s;
  s.kind = "grid";
  s.seed = config.seed;
  s.spec = grid::to_json(spec);
  const auto conds = walk_conditions(req, false);
  for (Condition c : conds) {
    check_walk_condition(c, false);
  }
  add_walks(s, "grid", conds, req, config, config.grid.short_length,
            config.grid.long_length, config.context_lengths,
            [&](Condition c, std::size_t len, std::uint64_t seed) {
              return grid::make_instance(spec, c, len, seed);
            });
  return s;
}

suite::Suite generate_latent(const GenerateRequest& req, const RunConfig& config) {
  const auto cats =
      grid::load_categories(resolve(config.latent.categories, "latent_categories.txt"));
  const auto spec =
      grid::make_latent_spec(config.latent.width, config.latent.height, cats,
                             config.latent.excluded_pairs,
                             derive_seed(config.seed, kSpecStream));
  suite::Suite s;
  s.kind = "latent";
  s.seed = config.seed;
  s.spec = grid::to_json(spec);
  const auto conds = walk_conditions(req, true);
  for (Condition c : conds) {
    check_walk_condition(c, true);
  }
  add_walks(s, "latent", conds, req, config, config.latent.short_length,
            config.latent.long_length, {},
            [&](Condition c, std::size_t len, std::uint64_t seed) {
              return grid::make_latent_instance(spec, c, len, seed);
            });
  return s;
}

std::vector<std::filesystem::path> fewshot_pools(const GenerateRequest& req,
                                                 const RunConfig& config) {
  std::vector<std::filesystem::path> pools;
  if (req.pool) {
    pools.emplace_back(*req.pool);
  } else if (!config.fewshot.pools.empty()) {
    pools.assign(config.fewshot.pools.begin(), config.fewshot.pools.end());
  } else {
    const auto dir = data_dir() / "pools";
    if (std::filesystem::is_directory(dir)) {
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".tsv") {
          pools.push_back(e.path());
        }
      }
    }
    std::sort(pools.begin(), pools.end());
  }
  if (pools.empty()) {
    throw UsageError("no few-shot pools given and none bundled");
  }
  return pools;
}

suite::Suite generate_fewshot(const GenerateRequest& req, const RunConfig& config) {
  const auto tmpl = templates_for(config).fewshot;
  const std::vector<std::size_t> shots =
      req.k ? std::vector<std::size_t>{*req.k} : config.fewshot.shots;
  const std::size_t n = req.n.value_or(config.fewshot.n_prompts);
  suite::Suite s;
  s.kind = "fewshot";
  s.seed = config.seed;
  json tasks = json::array();
  std::set<std::string> names;
  const auto pools = fewshot_pools(req, config);
  for (std::size_t p = 0; p < pools.size(); ++p) {
    const auto task = fewshot::load_task_pool(pools[p]);
    if (!names.insert(task.name).second) {
      throw UsageError("two few-shot pools share the task name '" + task.name + "'");
    }
    tasks.push_back({{"name", task.name}, {"n_items", task.items.size()}});
    const std::uint64_t task_seed = derive_seed(derive_seed(config.seed, kInstanceStream), p);
    for (std::size_t k : shots) {
      for (auto& prompt :
           fewshot::build_fewshot_suite(task, n, k, derive_seed(task_seed, k), tmpl)) {
        const Condition cond = k == 0 ? Condition::kZeroShot : Condition::kShotK;
        auto doc = fewshot::to_json(prompt);
        s.entries.push_back(suite::make_entry(prompt.id, cond, std::move(doc)));
      }
    }
  }
  s.spec = {{"kind", "fewshot"}, {"tasks", tasks}, {"template", fewshot::to_json(tmpl)}};
  s.generator = {{"shots", shots}, {"n_prompts", n}};
  return s;
}

suite::Suite generate_riddle(const GenerateRequest& req, const RunConfig& config) {
  const auto tmpl = templates_for(config).riddle;
  const std::filesystem::path path =
      req.pool ? std::filesystem::path(*req.pool) : resolve(config.riddle.pool, "riddles.txt");
  auto pool = fewshot::load_riddle_pool(path);
  if (req.n) {
    pool.resize(std::min(pool.size(), *req.n));
  }
  const std::vector<std::size_t> shots =
      req.k ? std::vector<std::size_t>{*req.k} : config.riddle.shots;
  suite::Suite s;
  s.kind = "riddle";
  s.seed = config.seed;
  json pool_json = json::array();
  for (const auto& r : pool) {
    pool_json.push_back(fewshot::to_json(r));
  }
  s.spec = {{"kind", "riddle"}, {"pool", pool_json}, {"template", fewshot::to_json(tmpl)}};
  s.generator = {{"shots", shots}, {"repeats", config.riddle.repeats}};
  if (pool.empty()) {
    return s;
  }
  for (std::size_t k : shots) {
    const std::uint64_t seed = derive_seed(derive_seed(config.seed, kInstanceStream), k);
    for (auto& prompt :
         fewshot::build_riddle_suite(pool, k, seed, config.riddle.repeats, tmpl)) {
      const Condition cond = k == 0 ? Condition::kZeroShot : Condition::kShotK;
      auto doc = fewshot::to_json(prompt);
      s.entries.push_back(suite::make_entry(prompt.id, cond, std::move(doc)));
    }
  }
  return s;
}

std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) {
    out.push_back(std::move(cur));
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) {
      out += ' ';
    }
    out += w;
  }
  return out;
}

suite::Suite generate_text(const GenerateRequest& req, const RunConfig& config) {
  if (!req.source) {
    throw UsageError("generate text needs --source <file> (one passage per line)");
  }
  std::ifstream in(*req.source);
  if (!in) {
    throw UsageError("cannot open " + *req.source);
  }
  suite::Suite s;
  s.kind = "text";
  s.seed = config.seed;
  s.spec = nullptr;
  std::string line;
  std::size_t idx = 0;
  const std::size_t limit = req.n.value_or(std::numeric_limits<std::size_t>::max());
  while (idx < limit && std::getline(in, line)) {
    auto words = split_words(line);
    if (words.empty()) {
      continue;
    }
    const std::string id = "text_" + padded(idx);
    const std::string text = join(words);
    s.entries.push_back(suite::make_entry(id, Condition::kNatural,
                                          {{"text", text}, {"source_index", idx}}));
    // Shuffled control: same words, order permuted within the passage.
    Rng rng(derive_seed(derive_seed(config.seed, kInstanceStream), idx));
    rng.shuffle(words);
    s.entries.push_back(suite::make_entry(
        id + "_shuffled", Condition::kRandomControl,
        {{"text", join(words)}, {"source_index", idx}, {"source_id", id}}));
    ++idx;
  }
  s.generator = {{"source", std::filesystem::path(*req.source).filename().string()},
                 {"passages", idx}};
  return s;
}

}  // namespace

suite::Suite generate_suite(const GenerateRequest& req, const RunConfig& config) {
  if (req.kind == "grid") {
    return generate_grid(req, config);
  }
  if (req.kind == "latent") {
    return generate_latent(req, config);
  }
  if (req.kind == "fewshot") {
    return generate_fewshot(req, config);
  }
  if (req.kind == "riddle") {
    return generate_riddle(req, config);
  }
  if (req.kind == "text") {
    return generate_text(req, config);
  }
  throw UsageError("unknown suite kind '" + req.kind +
                   "' (expected grid, latent, fewshot, riddle or text)");
}

suite::Suite cmd_generate(const GenerateRequest& req, const RunConfig& config,
                          const std::filesystem::path& out) {
  auto s = generate_suite(req, config);
  suite::write_suite(out, s);
  return s;
}

}  // namespace trajgeom::pipeline
