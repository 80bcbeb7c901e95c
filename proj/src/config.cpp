#include <cstdlib>
#include <fstream>
#include <set>

#include "trajgeom/pipeline.hpp"

#ifndef TRAJGEOM_DATA_DIR
#define TRAJGEOM_DATA_DIR "data"
#endif

namespace trajgeom::pipeline {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    std::string_view where) {
  if (!obj.is_object()) {
    throw UsageError(std::string(where) + " must be an object");
  }
  const std::set<std::string_view> allowed(known);
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw UsageError("unknown config key '" + std::string(where) + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) {
    target = obj.at(key).get<T>();
  }
}

std::vector<std::size_t> positive_list(const std::vector<std::size_t>& xs,
                                       std::string_view what, bool allow_zero) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!allow_zero && xs[i] == 0) {
      throw UsageError(std::string(what) + " must be positive");
    }
    if (i > 0 && xs[i] <= xs[i - 1]) {
      throw UsageError(std::string(what) + " must be strictly ascending");
    }
  }
  return xs;
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  try {
    reject_unknown(doc,
                   {"config_version", "seed", "run_id", "n_instances", "context_lengths",
                    "layer_band", "window", "threads", "node_map_layers", "contrasts",
                    "templates", "grid", "latent", "fewshot", "riddle"},
                   "config");
    if (!doc.contains("config_version")) {
      throw UsageError("config is missing config_version");
    }
    if (doc.at("config_version").get<int>() != kConfigVersion) {
      throw UsageError("unsupported config_version " + doc.at("config_version").dump());
    }
    read(doc, "seed", c.seed);
    read(doc, "run_id", c.run_id);
    read(doc, "n_instances", c.n_instances);
    read(doc, "context_lengths", c.context_lengths);
    read(doc, "window", c.window);
    read(doc, "threads", c.threads);
    read(doc, "node_map_layers", c.node_map_layers);
    read(doc, "templates", c.templates);
    if (doc.contains("layer_band")) {
      const auto band = doc.at("layer_band").get<std::vector<std::size_t>>();
      if (band.size() != 2) {
        throw UsageError("layer_band must be [lo, hi]");
      }
      c.band = {band[0], band[1]};
    }
    if (doc.contains("contrasts")) {
      c.contrasts.clear();
      for (const auto& pair : doc.at("contrasts")) {
        const auto names = pair.get<std::vector<std::string>>();
        if (names.size() != 2) {
          throw UsageError("each contrast must name two conditions");
        }
        c.contrasts.emplace_back(store::parse_condition(names[0]),
                                 store::parse_condition(names[1]));
      }
    }
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      reject_unknown(g, {"width", "height", "words", "short_length", "long_length"}, "grid");
      read(g, "width", c.grid.width);
      read(g, "height", c.grid.height);
      read(g, "words", c.grid.words);
      read(g, "short_length", c.grid.short_length);
      read(g, "long_length", c.grid.long_length);
    }
    if (doc.contains("latent")) {
      const auto& l = doc.at("latent");
      reject_unknown(l,
                     {"width", "height", "categories", "excluded_pairs", "short_length",
                      "long_length"},
                     "latent");
      read(l, "width", c.latent.width);
      read(l, "height", c.latent.height);
      read(l, "categories", c.latent.categories);
      read(l, "excluded_pairs", c.latent.excluded_pairs);
      read(l, "short_length", c.latent.short_length);
      read(l, "long_length", c.latent.long_length);
    }
    if (doc.contains("fewshot")) {
      const auto& f = doc.at("fewshot");
      reject_unknown(f, {"pools", "shots", "n_prompts"}, "fewshot");
      read(f, "pools", c.fewshot.pools);
      read(f, "shots", c.fewshot.shots);
      read(f, "n_prompts", c.fewshot.n_prompts);
    }
    if (doc.contains("riddle")) {
      const auto& r = doc.at("riddle");
      reject_unknown(r, {"pool", "shots", "repeats"}, "riddle");
      read(r, "pool", c.riddle.pool);
      read(r, "shots", c.riddle.shots);
      read(r, "repeats", c.riddle.repeats);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const ParseError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  positive_list(c.context_lengths, "context_lengths", false);
  positive_list(c.fewshot.shots, "fewshot.shots", true);
  positive_list(c.riddle.shots, "riddle.shots", true);
  positive_list(c.node_map_layers, "node_map_layers", true);
  if (c.band.lo > c.band.hi) {
    throw UsageError("layer_band lo must not exceed hi");
  }
  if (c.window != "analysis" && c.window != "full") {
    throw UsageError("window must be 'analysis' or 'full'");
  }
  if (c.run_id.empty() ||
      c.run_id.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
                                 "0123456789._-") != std::string::npos) {
    throw UsageError("run_id must match [A-Za-z0-9._-]+");
  }
  if (c.riddle.repeats == 0) {
    throw UsageError("riddle.repeats must be positive");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot open config " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

json to_json(const RunConfig& c) {
  json contrasts = json::array();
  for (const auto& [a, b] : c.contrasts) {
    contrasts.push_back({std::string(store::to_string(a)), std::string(store::to_string(b))});
  }
  return {{"config_version", kConfigVersion},
          {"seed", c.seed},
          {"run_id", c.run_id},
          {"n_instances", c.n_instances},
          {"context_lengths", c.context_lengths},
          {"layer_band", {c.band.lo, c.band.hi}},
          {"window", c.window},
          {"threads", c.threads},
          {"node_map_layers", c.node_map_layers},
          {"contrasts", contrasts},
          {"templates", c.templates},
          {"grid",
           {{"width", c.grid.width},
            {"height", c.grid.height},
            {"words", c.grid.words},
            {"short_length", c.grid.short_length},
            {"long_length", c.grid.long_length}}},
          {"latent",
           {{"width", c.latent.width},
            {"height", c.latent.height},
            {"categories", c.latent.categories},
            {"excluded_pairs", c.latent.excluded_pairs},
            {"short_length", c.latent.short_length},
            {"long_length", c.latent.long_length}}},
          {"fewshot",
           {{"pools", c.fewshot.pools},
            {"shots", c.fewshot.shots},
            {"n_prompts", c.fewshot.n_prompts}}},
          {"riddle",
           {{"pool", c.riddle.pool}, {"shots", c.riddle.shots}, {"repeats", c.riddle.repeats}}}};
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("TRAJGEOM_DATA_DIR"); env && *env) {
    return env;
  }
  return TRAJGEOM_DATA_DIR;
}

}  // namespace trajgeom::pipeline
