#include "trajgeom/gridworld.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace trajgeom::grid {

namespace {

using store::Condition;
using store::TokenRange;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  return lines;
}

void check_word(const std::string& word, const std::filesystem::path& path,
                std::size_t line_no) {
  if (word.find_first_of(" \t") != std::string::npos) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) +
                     ": word '" + word + "' contains whitespace");
  }
}

/// h[k][u] = probability that a uniform walk from u is at `target` after k
/// steps.
class HittingTable {
 public:
  HittingTable(const Adjacency& adj, NodeId target, std::size_t max_steps)
      : table_(max_steps + 1, std::vector<double>(adj.n_nodes(), 0.0)) {
    table_[0][target] = 1.0;
    for (std::size_t k = 1; k <= max_steps; ++k) {
      for (NodeId u = 0; u < adj.n_nodes(); ++u) {
        double acc = 0.0;
        for (NodeId w : adj.neighbors(u)) {
          acc += table_[k - 1][w];
        }
        table_[k][u] = adj.degree(u) == 0 ? 0.0 : acc / static_cast<double>(adj.degree(u));
      }
    }
  }

  double at(std::size_t steps, NodeId u) const { return table_[steps][u]; }

 private:
  std::vector<std::vector<double>> table_;
};

std::size_t weighted_pick(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) {
    total += w;
  }
  double target = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) {
      continue;
    }
    if (target < weights[i]) {
      return i;
    }
    target -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) {
      return i;
    }
  }
  return 0;
}

/// Continues `path` (whose last node is the walk's current node) for `steps`
/// transitions ending at the table's target.
void extend_bridge(const Adjacency& adj, const HittingTable& table,
                   std::size_t steps, std::vector<NodeId>& path, Rng& rng) {
  std::vector<double> weights;
  for (std::size_t remaining = steps; remaining > 0; --remaining) {
    const auto& nbrs = adj.neighbors(path.back());
    weights.assign(nbrs.size(), 0.0);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      weights[i] = table.at(remaining - 1, nbrs[i]);
    }
    path.push_back(nbrs[weighted_pick(weights, rng)]);
  }
}

std::vector<NodeId> random_test_walk(const Adjacency& adj, Rng& rng) {
  return generate_walk(adj, kTestWalkLength, rng);
}

struct Placement {
  std::size_t test_start = 0;
  std::optional<std::size_t> repeat_start;
};

// Repeat occurrence lies inside positions [5, 64]; the real test then starts
// after position 64.
constexpr std::size_t kLatestRepeatStart = kLatestShortInsert - kTestWalkLength + 1;

void check_length(Condition condition, std::size_t length) {
  const std::size_t minimum = minimum_length(condition);
  if (length < minimum) {
    throw InfeasibleError("context length " + std::to_string(length) +
                          " too short for condition '" +
                          std::string(store::to_string(condition)) +
                          "' (minimum " + std::to_string(minimum) + ")");
  }
}

std::size_t uniform_in(std::size_t lo, std::size_t hi, Rng& rng) {
  return lo + rng.index(hi - lo + 1);
}

Placement choose_placement(Condition condition, std::size_t length, Rng& rng) {
  Placement p;
  const std::size_t last_start = length - kTestWalkLength;
  const std::size_t tail_start =
      length > kLongTail ? std::max(kEarliestInsert, length - kLongTail)
                         : kEarliestInsert;
  switch (condition) {
    case Condition::kShort:
      p.test_start = uniform_in(kEarliestInsert,
                                std::min(kLatestShortInsert, last_start), rng);
      break;
    case Condition::kLongRepeat:
      p.repeat_start = uniform_in(kEarliestInsert, kLatestRepeatStart, rng);
      p.test_start = uniform_in(std::max(kLatestShortInsert + 1, tail_start),
                                last_start, rng);
      break;
    default:
      p.test_start = uniform_in(tail_start, last_start, rng);
      break;
  }
  return p;
}

/// Node sequence with the test walk spliced at the placement; nullopt when a
/// bridge is impossible (parity).
std::optional<std::vector<NodeId>> splice_walk(const Adjacency& adj,
                                               std::span<const NodeId> test,
                                               const Placement& place,
                                               std::size_t length, Rng& rng) {
  const std::size_t anchor = place.repeat_start.value_or(place.test_start);

  // Prefix: uniform start conditioned on reaching test[0] at `anchor`.
  const HittingTable to_first(adj, test.front(), anchor);
  std::vector<double> start_weights(adj.n_nodes());
  for (NodeId u = 0; u < adj.n_nodes(); ++u) {
    start_weights[u] = to_first.at(anchor, u);
  }
  if (std::all_of(start_weights.begin(), start_weights.end(),
                  [](double w) { return w <= 0.0; })) {
    return std::nullopt;
  }
  std::vector<NodeId> nodes;
  nodes.reserve(length);
  nodes.push_back(weighted_pick(start_weights, rng));
  extend_bridge(adj, to_first, anchor, nodes, rng);
  nodes.pop_back();  // test[0] is appended with the test walk
  nodes.insert(nodes.end(), test.begin(), test.end());

  if (place.repeat_start) {
    const std::size_t steps = place.test_start - (anchor + kTestWalkLength - 1);
    const HittingTable back_to_first(adj, test.front(), steps);
    if (back_to_first.at(steps, test.back()) <= 0.0) {
      return std::nullopt;
    }
    extend_bridge(adj, back_to_first, steps, nodes, rng);
    nodes.pop_back();
    nodes.insert(nodes.end(), test.begin(), test.end());
  }

  std::vector<NodeId> tail = {nodes.back()};
  const std::size_t remaining = length - nodes.size();
  for (std::size_t i = 0; i < remaining; ++i) {
    const auto& nbrs = adj.neighbors(tail.back());
    tail.push_back(nbrs[rng.index(nbrs.size())]);
  }
  nodes.insert(nodes.end(), tail.begin() + 1, tail.end());
  return nodes;
}

std::vector<std::size_t> find_all(std::span<const std::string> words,
                                  std::span<const std::string> pattern) {
  std::vector<std::size_t> hits;
  if (pattern.empty() || words.size() < pattern.size()) {
    return hits;
  }
  for (std::size_t i = 0; i + pattern.size() <= words.size(); ++i) {
    if (std::equal(pattern.begin(), pattern.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
      hits.push_back(i);
    }
  }
  return hits;
}

std::string join_positions(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t x : xs) {
    if (!out.empty()) {
      out += ",";
    }
    out += std::to_string(x);
  }
  return out;
}

bool pair_excluded(std::span<const ChildPair> excluded, const std::string& a,
                   const std::string& b) {
  return std::any_of(excluded.begin(), excluded.end(), [&](const ChildPair& p) {
    return p.first == a && p.second == b;
  });
}

template <typename Build>
WalkInstance generate_with_retries(Condition condition, std::size_t length,
                                   std::uint64_t seed, const Adjacency& adj,
                                   std::span<const ChildPair> excluded,
                                   Build build) {
  check_length(condition, length);
  Rng rng(seed);
  std::map<std::string, std::size_t> reasons;
  for (std::size_t attempt = 0; attempt < kRetryBudget; ++attempt) {
    std::optional<WalkInstance> candidate = build(rng);
    if (!candidate) {
      ++reasons["no bridge between splice points"];
      continue;
    }
    candidate->condition = condition;
    candidate->context_length = length;
    candidate->seed = seed;
    const auto violations = audit_instance(*candidate, adj, excluded);
    if (violations.empty()) {
      return std::move(*candidate);
    }
    ++reasons[violations.front().substr(0, violations.front().find(':'))];
  }
  std::string diag;
  for (const auto& [reason, count] : reasons) {
    diag += "\n  " + std::to_string(count) + "x " + reason;
  }
  throw InfeasibleError("no valid '" + std::string(store::to_string(condition)) +
                        "' instance of length " + std::to_string(length) +
                        " after " + std::to_string(kRetryBudget) +
                        " attempts (seed " + std::to_string(seed) + "):" + diag);
}

nlohmann::json edges_json(const Adjacency& adj) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : adj.edges()) {
    edges.push_back({a, b});
  }
  return edges;
}

void check_lattice_edges(const nlohmann::json& doc, const Adjacency& lattice) {
  if (!doc.contains("edges")) {
    return;
  }
  std::vector<std::pair<NodeId, NodeId>> declared;
  for (const auto& e : doc.at("edges")) {
    auto a = e.at(0).get<NodeId>();
    auto b = e.at(1).get<NodeId>();
    declared.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(declared.begin(), declared.end());
  if (declared != lattice.edges()) {
    throw ParseError("task spec edges are not the declared lattice");
  }
}

}  // namespace

Adjacency::Adjacency(std::size_t n_nodes,
                     std::span<const std::pair<NodeId, NodeId>> edges)
    : neighbors_(n_nodes) {
  std::set<std::pair<NodeId, NodeId>> unique;
  for (auto [a, b] : edges) {
    if (a >= n_nodes || b >= n_nodes || a == b) {
      throw DomainError("invalid edge (" + std::to_string(a) + "," +
                        std::to_string(b) + ")");
    }
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  for (auto [a, b] : unique) {
    neighbors_[a].push_back(b);
    neighbors_[b].push_back(a);
  }
  for (auto& n : neighbors_) {
    std::sort(n.begin(), n.end());
  }
  n_edges_ = unique.size();
}

bool Adjacency::has_edge(NodeId a, NodeId b) const {
  if (a >= neighbors_.size()) {
    return false;
  }
  return std::binary_search(neighbors_[a].begin(), neighbors_[a].end(), b);
}

std::vector<std::pair<NodeId, NodeId>> Adjacency::edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (NodeId a = 0; a < neighbors_.size(); ++a) {
    for (NodeId b : neighbors_[a]) {
      if (a < b) {
        out.emplace_back(a, b);
      }
    }
  }
  return out;
}

Adjacency build_lattice(std::size_t width, std::size_t height) {
  if (width < 2 || height < 2) {
    throw DomainError("lattice dimensions must be at least 2x2");
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const NodeId id = r * width + c;
      if (c + 1 < width) {
        edges.emplace_back(id, id + 1);
      }
      if (r + 1 < height) {
        edges.emplace_back(id, id + width);
      }
    }
  }
  return Adjacency(width * height, edges);
}

std::optional<NodeId> LatentGridTaskSpec::parent_of(std::string_view word) const {
  for (NodeId node = 0; node < children.size(); ++node) {
    for (const auto& child : children[node]) {
      if (child == word) {
        return node;
      }
    }
  }
  return std::nullopt;
}

bool LatentGridTaskSpec::is_excluded(std::string_view from,
                                     std::string_view to) const {
  return std::any_of(excluded.begin(), excluded.end(), [&](const ChildPair& p) {
    return p.first == from && p.second == to;
  });
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::vector<std::string> words;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& raw : read_lines(path)) {
    ++line_no;
    const std::string word = trim(raw);
    if (word.empty() || word.front() == '#') {
      continue;
    }
    check_word(word, path, line_no);
    if (!seen.insert(word).second) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": duplicate word '" + word + "'");
    }
    words.push_back(word);
  }
  return words;
}

std::vector<WordCategory> load_categories(const std::filesystem::path& path) {
  std::vector<WordCategory> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& raw : read_lines(path)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.rfind("##", 0) == 0) {
      continue;
    }
    if (line.front() == '#') {
      const std::string name = trim(line.substr(1));
      if (name.empty()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": empty category name");
      }
      out.push_back({name, {}});
      continue;
    }
    if (out.empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": word before the first '# category' header");
    }
    check_word(line, path, line_no);
    if (!seen.insert(line).second) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": word '" + line + "' appears in two categories");
    }
    out.back().words.push_back(line);
  }
  return out;
}

GridTaskSpec make_grid_spec(std::size_t width, std::size_t height,
                            std::span<const std::string> word_pool,
                            std::uint64_t seed) {
  GridTaskSpec spec;
  spec.width = width;
  spec.height = height;
  spec.adjacency = build_lattice(width, height);
  spec.seed = seed;
  const std::size_t n = width * height;
  if (word_pool.size() < n) {
    throw DomainError("word list has " + std::to_string(word_pool.size()) +
                      " words, lattice needs " + std::to_string(n));
  }
  std::set<std::string> unique(word_pool.begin(), word_pool.end());
  if (unique.size() != word_pool.size()) {
    throw DomainError("word list contains duplicates");
  }
  Rng rng(seed);
  for (std::size_t idx : rng.sample_without_replacement(word_pool.size(), n)) {
    spec.words.push_back(word_pool[idx]);
  }
  return spec;
}

LatentGridTaskSpec make_latent_spec(std::size_t width, std::size_t height,
                                    std::span<const WordCategory> categories,
                                    std::size_t n_excluded, std::uint64_t seed) {
  LatentGridTaskSpec spec;
  spec.width = width;
  spec.height = height;
  spec.adjacency = build_lattice(width, height);
  spec.seed = seed;
  const std::size_t n = width * height;
  if (categories.size() < n) {
    throw DomainError(std::to_string(categories.size()) + " categories, " +
                      std::to_string(n) + " latent nodes need one each");
  }
  std::set<std::string> all_words;
  for (const auto& cat : categories) {
    if (cat.words.size() < kChildrenPerLatent) {
      throw DomainError("category '" + cat.name + "' has fewer than 4 words");
    }
    for (const auto& w : cat.words) {
      if (!all_words.insert(w).second) {
        throw DomainError("word '" + w + "' appears in two categories");
      }
    }
  }
  Rng rng(seed);
  for (std::size_t c : rng.sample_without_replacement(categories.size(), n)) {
    const auto& cat = categories[c];
    spec.categories.push_back(cat.name);
    std::array<std::string, kChildrenPerLatent> kids;
    const auto picks = rng.sample_without_replacement(cat.words.size(),
                                                      kChildrenPerLatent);
    for (std::size_t i = 0; i < kChildrenPerLatent; ++i) {
      kids[i] = cat.words[picks[i]];
    }
    spec.children.push_back(kids);
  }
  const auto edges = spec.adjacency.edges();
  if (n_excluded > edges.size()) {
    throw DomainError("cannot exclude pairs on " + std::to_string(n_excluded) +
                      " edges of a lattice with " +
                      std::to_string(edges.size()));
  }
  for (std::size_t e : rng.sample_without_replacement(edges.size(), n_excluded)) {
    auto [from, to] = edges[e];
    if (rng.index(2) == 1) {
      std::swap(from, to);
    }
    spec.excluded.emplace_back(spec.children[from][rng.index(kChildrenPerLatent)],
                               spec.children[to][rng.index(kChildrenPerLatent)]);
  }
  return spec;
}

std::vector<NodeId> WalkInstance::test_nodes() const {
  return {nodes.begin() + static_cast<std::ptrdiff_t>(test.start),
          nodes.begin() + static_cast<std::ptrdiff_t>(test.end)};
}

std::vector<std::string> WalkInstance::test_words() const {
  return {words.begin() + static_cast<std::ptrdiff_t>(test.start),
          words.begin() + static_cast<std::ptrdiff_t>(test.end)};
}

TokenRange WalkInstance::window() const {
  return {test.start >= kPrefixTokens ? test.start - kPrefixTokens : 0, test.end};
}

std::vector<NodeId> generate_walk(const Adjacency& adjacency,
                                  std::size_t length, Rng& rng) {
  std::vector<NodeId> walk;
  if (length == 0 || adjacency.n_nodes() == 0) {
    return walk;
  }
  walk.reserve(length);
  walk.push_back(rng.index(adjacency.n_nodes()));
  while (walk.size() < length) {
    const auto& nbrs = adjacency.neighbors(walk.back());
    if (nbrs.empty()) {
      throw DomainError("walk reached an isolated node");
    }
    walk.push_back(nbrs[rng.index(nbrs.size())]);
  }
  return walk;
}

std::vector<NodeId> generate_walk(const Adjacency& adjacency,
                                  std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  return generate_walk(adjacency, length, rng);
}

std::optional<std::vector<NodeId>> sample_bridge(const Adjacency& adjacency,
                                                 NodeId from, NodeId to,
                                                 std::size_t steps, Rng& rng) {
  const HittingTable table(adjacency, to, steps);
  if (table.at(steps, from) <= 0.0) {
    return std::nullopt;
  }
  std::vector<NodeId> path = {from};
  extend_bridge(adjacency, table, steps, path, rng);
  return path;
}

WalkInstance make_instance(const GridTaskSpec& spec, Condition condition,
                           std::size_t context_length, std::uint64_t seed) {
  if (condition == Condition::kZeroShot) {
    throw InfeasibleError("zero-shot applies to latent grids only");
  }
  const Adjacency& adj = spec.adjacency;
  if (spec.words.size() != adj.n_nodes()) {
    throw DomainError("grid spec has " + std::to_string(spec.words.size()) +
                      " words for " + std::to_string(adj.n_nodes()) + " nodes");
  }
  return generate_with_retries(
      condition, context_length, seed, adj, {},
      [&](Rng& rng) -> std::optional<WalkInstance> {
        const auto test = random_test_walk(adj, rng);
        const Placement place = choose_placement(condition, context_length, rng);
        auto nodes = splice_walk(adj, test, place, context_length, rng);
        if (!nodes) {
          return std::nullopt;
        }
        WalkInstance inst;
        inst.nodes = std::move(*nodes);
        for (NodeId n : inst.nodes) {
          inst.words.push_back(spec.words[n]);
        }
        inst.test = {place.test_start, place.test_start + kTestWalkLength};
        if (place.repeat_start) {
          inst.repeat = TokenRange{*place.repeat_start,
                                   *place.repeat_start + kTestWalkLength};
        }
        return inst;
      });
}

WalkInstance make_latent_instance(const LatentGridTaskSpec& spec,
                                  Condition condition,
                                  std::size_t context_length,
                                  std::uint64_t seed) {
  const Adjacency& adj = spec.adjacency;
  if (spec.children.size() != adj.n_nodes()) {
    throw DomainError("latent spec has " + std::to_string(spec.children.size()) +
                      " child lists for " + std::to_string(adj.n_nodes()) +
                      " latent nodes");
  }
  const bool zero_shot = condition == Condition::kZeroShot;
  if (zero_shot && spec.excluded.empty()) {
    throw InfeasibleError("zero-shot condition needs at least one excluded pair");
  }
  std::span<const ChildPair> excluded =
      zero_shot ? std::span<const ChildPair>(spec.excluded)
                : std::span<const ChildPair>();

  return generate_with_retries(
      condition, context_length, seed, adj, excluded,
      [&](Rng& rng) -> std::optional<WalkInstance> {
        std::vector<NodeId> test;
        std::vector<std::string> test_words(kTestWalkLength);
        std::vector<bool> forced(kTestWalkLength, false);
        if (zero_shot) {
          const ChildPair& pair = spec.excluded[rng.index(spec.excluded.size())];
          const NodeId a = *spec.parent_of(pair.first);
          const NodeId b = *spec.parent_of(pair.second);
          const std::size_t offset = rng.index(kTestWalkLength - 1);
          test.assign(kTestWalkLength, 0);
          test[offset] = a;
          test[offset + 1] = b;
          for (std::size_t i = offset; i-- > 0;) {
            const auto& nbrs = adj.neighbors(test[i + 1]);
            test[i] = nbrs[rng.index(nbrs.size())];
          }
          for (std::size_t i = offset + 2; i < kTestWalkLength; ++i) {
            const auto& nbrs = adj.neighbors(test[i - 1]);
            test[i] = nbrs[rng.index(nbrs.size())];
          }
          test_words[offset] = pair.first;
          test_words[offset + 1] = pair.second;
          forced[offset] = forced[offset + 1] = true;
        } else {
          test = random_test_walk(adj, rng);
        }
        for (std::size_t i = 0; i < kTestWalkLength; ++i) {
          if (!forced[i]) {
            test_words[i] = spec.children[test[i]][rng.index(kChildrenPerLatent)];
          }
        }

        const Placement place = choose_placement(condition, context_length, rng);
        auto nodes = splice_walk(adj, test, place, context_length, rng);
        if (!nodes) {
          return std::nullopt;
        }
        WalkInstance inst;
        inst.nodes = std::move(*nodes);
        inst.test = {place.test_start, place.test_start + kTestWalkLength};
        if (place.repeat_start) {
          inst.repeat = TokenRange{*place.repeat_start,
                                   *place.repeat_start + kTestWalkLength};
        }

        // Emissions: fixed inside test (and repeat) spans, uniform elsewhere.
        // Zero-shot contexts skip any child that would form an excluded pair
        // with an already-fixed neighbour.
        const std::size_t n = inst.nodes.size();
        inst.words.assign(n, {});
        std::vector<bool> fixed(n, false);
        auto fix_span = [&](TokenRange span) {
          for (std::size_t i = 0; i < span.size(); ++i) {
            inst.words[span.start + i] = test_words[i];
            fixed[span.start + i] = true;
          }
        };
        fix_span(inst.test);
        if (inst.repeat) {
          fix_span(*inst.repeat);
        }
        std::vector<std::string> candidates;
        for (std::size_t i = 0; i < n; ++i) {
          if (fixed[i]) {
            continue;
          }
          const auto& kids = spec.children[inst.nodes[i]];
          candidates.clear();
          for (const auto& kid : kids) {
            if (zero_shot) {
              if (i > 0 && spec.is_excluded(inst.words[i - 1], kid)) {
                continue;
              }
              if (i + 1 < n && fixed[i + 1] &&
                  spec.is_excluded(kid, inst.words[i + 1])) {
                continue;
              }
            }
            candidates.push_back(kid);
          }
          inst.words[i] = candidates[rng.index(candidates.size())];
        }
        return inst;
      });
}

RenderedPrompt render_prompt(const WalkInstance& instance) {
  if (instance.words.empty()) {
    throw DomainError("cannot render an empty walk");
  }
  RenderedPrompt out;
  std::vector<std::size_t> starts;
  for (const auto& w : instance.words) {
    if (!out.text.empty()) {
      out.text += ' ';
    }
    starts.push_back(out.text.size());
    out.text += w;
  }
  auto span_of = [&](store::SpanLabel label, TokenRange words) {
    RenderedSpan s;
    s.label = label;
    s.words = words;
    s.char_start = starts[words.start];
    s.char_end = starts[words.end - 1] + instance.words[words.end - 1].size();
    return s;
  };
  const TokenRange window = instance.window();
  if (window.start < instance.test.start) {
    out.spans.push_back(span_of(store::SpanLabel::kPrefix,
                                {window.start, instance.test.start}));
  }
  if (instance.test.size() > 0 && instance.test.end <= instance.words.size()) {
    out.spans.push_back(span_of(store::SpanLabel::kTestWindow, instance.test));
  }
  return out;
}

std::vector<std::string> audit_instance(const WalkInstance& inst,
                                        const Adjacency& adj,
                                        std::span<const ChildPair> excluded) {
  std::vector<std::string> v;
  const std::size_t n = inst.nodes.size();
  if (n != inst.words.size() || n != inst.context_length) {
    v.push_back("length: nodes/words/context length disagree");
    return v;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!adj.has_edge(inst.nodes[i], inst.nodes[i + 1])) {
      v.push_back("edge: positions " + std::to_string(i) + "," +
                  std::to_string(i + 1) + " are not adjacent");
    }
  }
  const std::size_t s = inst.test.start;
  if (inst.test.size() != kTestWalkLength || inst.test.end > n) {
    v.push_back("test-span: not a 5-position span inside the context");
    return v;
  }

  switch (inst.condition) {
    case Condition::kShort:
      if (s < kEarliestInsert || s > kLatestShortInsert) {
        v.push_back("position: short test starts at " + std::to_string(s));
      }
      break;
    case Condition::kLong:
    case Condition::kZeroShot:
      if (s + kLongTail < n || s < kEarliestInsert) {
        v.push_back("position: long test starts at " + std::to_string(s) +
                    ", outside the final 64 tokens");
      }
      break;
    case Condition::kLongRepeat:
      if (s + kLongTail < n || s <= kLatestShortInsert) {
        v.push_back("position: repeat-condition test starts at " +
                    std::to_string(s));
      }
      if (!inst.repeat || inst.repeat->start < kEarliestInsert ||
          inst.repeat->end > kLatestShortInsert + 1 ||
          inst.repeat->size() != kTestWalkLength) {
        v.push_back("position: repeat span missing or outside [5, 64]");
      }
      break;
    default:
      v.push_back("condition: not a grid condition");
  }

  const std::vector<std::string> words = inst.words;
  const std::span<const std::string> five(words.data() + s, kTestWalkLength);
  std::vector<std::size_t> allowed5 = {s};
  std::vector<std::size_t> allowed_head = {s};
  std::vector<std::size_t> allowed_tail = {s + 1};
  if (inst.repeat) {
    allowed5.push_back(inst.repeat->start);
    allowed_head.push_back(inst.repeat->start);
    allowed_tail.push_back(inst.repeat->start + 1);
  }
  auto check_grams = [&](std::span<const std::string> pattern,
                         std::vector<std::size_t> allowed, const char* what) {
    auto hits = find_all(words, pattern);
    std::sort(allowed.begin(), allowed.end());
    if (hits != allowed) {
      v.push_back(std::string("novelty: ") + what + " found at [" +
                  join_positions(hits) + "], expected [" +
                  join_positions(allowed) + "]");
    }
  };
  check_grams(five, allowed5, "test 5-gram");
  check_grams(five.first(4), allowed_head, "leading 4-gram");
  check_grams(five.last(4), allowed_tail, "trailing 4-gram");

  if (inst.condition == Condition::kZeroShot) {
    bool in_test = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const bool pair_in_test = i >= s && i + 1 < inst.test.end;
      if (!pair_excluded(excluded, words[i], words[i + 1])) {
        continue;
      }
      if (pair_in_test) {
        in_test = true;
      } else {
        v.push_back("zero-shot: excluded pair '" + words[i] + " " +
                    words[i + 1] + "' in context at " + std::to_string(i));
      }
    }
    if (!in_test) {
      v.push_back("zero-shot: test walk traverses no excluded pair");
    }
  }
  return v;
}

nlohmann::json to_json(const GridTaskSpec& spec) {
  return {{"kind", "grid"},
          {"width", spec.width},
          {"height", spec.height},
          {"seed", spec.seed},
          {"words", spec.words},
          {"edges", edges_json(spec.adjacency)}};
}

nlohmann::json to_json(const LatentGridTaskSpec& spec) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& kids : spec.children) {
    children.push_back(std::vector<std::string>(kids.begin(), kids.end()));
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& [a, b] : spec.excluded) {
    excluded.push_back({a, b});
  }
  return {{"kind", "latent"},
          {"width", spec.width},
          {"height", spec.height},
          {"seed", spec.seed},
          {"categories", spec.categories},
          {"children", children},
          {"excluded", excluded},
          {"edges", edges_json(spec.adjacency)}};
}

nlohmann::json to_json(const WalkInstance& inst) {
  const RenderedPrompt rendered = render_prompt(inst);
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : rendered.spans) {
    spans.push_back({{"label", std::string(store::to_string(s.label))},
                     {"word_start", s.words.start},
                     {"word_end", s.words.end},
                     {"char_start", s.char_start},
                     {"char_end", s.char_end}});
  }
  nlohmann::json doc = {
      {"condition", std::string(store::to_string(inst.condition))},
      {"context_length", inst.context_length},
      {"seed", inst.seed},
      {"nodes", inst.nodes},
      {"words", inst.words},
      {"test", {inst.test.start, inst.test.end}},
      {"repeat", nullptr},
      {"text", rendered.text},
      {"spans", spans}};
  if (inst.repeat) {
    doc["repeat"] = {inst.repeat->start, inst.repeat->end};
  }
  return doc;
}

GridTaskSpec grid_spec_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("kind") != "grid") {
      throw ParseError("task spec kind is not 'grid'");
    }
    GridTaskSpec spec;
    spec.width = doc.at("width").get<std::size_t>();
    spec.height = doc.at("height").get<std::size_t>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.words = doc.at("words").get<std::vector<std::string>>();
    spec.adjacency = build_lattice(spec.width, spec.height);
    check_lattice_edges(doc, spec.adjacency);
    if (spec.words.size() != spec.adjacency.n_nodes()) {
      throw ParseError("grid spec word count does not match lattice");
    }
    if (std::set<std::string>(spec.words.begin(), spec.words.end()).size() !=
        spec.words.size()) {
      throw ParseError("grid spec word assignment is not injective");
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("grid spec: ") + e.what());
  }
}

LatentGridTaskSpec latent_spec_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("kind") != "latent") {
      throw ParseError("task spec kind is not 'latent'");
    }
    LatentGridTaskSpec spec;
    spec.width = doc.at("width").get<std::size_t>();
    spec.height = doc.at("height").get<std::size_t>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.categories = doc.at("categories").get<std::vector<std::string>>();
    spec.adjacency = build_lattice(spec.width, spec.height);
    check_lattice_edges(doc, spec.adjacency);
    std::set<std::string> seen;
    for (const auto& kids : doc.at("children")) {
      const auto list = kids.get<std::vector<std::string>>();
      if (list.size() != kChildrenPerLatent) {
        throw ParseError("latent node needs exactly 4 children");
      }
      std::array<std::string, kChildrenPerLatent> arr;
      for (std::size_t i = 0; i < kChildrenPerLatent; ++i) {
        if (!seen.insert(list[i]).second) {
          throw ParseError("child word '" + list[i] + "' used twice");
        }
        arr[i] = list[i];
      }
      spec.children.push_back(arr);
    }
    if (spec.children.size() != spec.adjacency.n_nodes()) {
      throw ParseError("latent spec child lists do not match lattice");
    }
    for (const auto& pair : doc.at("excluded")) {
      ChildPair p{pair.at(0).get<std::string>(), pair.at(1).get<std::string>()};
      const auto a = spec.parent_of(p.first);
      const auto b = spec.parent_of(p.second);
      if (!a || !b || !spec.adjacency.has_edge(*a, *b)) {
        throw ParseError("excluded pair '" + p.first + " " + p.second +
                         "' does not cross a latent edge");
      }
      spec.excluded.push_back(std::move(p));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("latent spec: ") + e.what());
  }
}

WalkInstance instance_from_json(const nlohmann::json& doc) {
  try {
    WalkInstance inst;
    inst.condition = store::parse_condition(doc.at("condition").get<std::string>());
    inst.context_length = doc.at("context_length").get<std::size_t>();
    inst.seed = doc.at("seed").get<std::uint64_t>();
    inst.nodes = doc.at("nodes").get<std::vector<NodeId>>();
    inst.words = doc.at("words").get<std::vector<std::string>>();
    inst.test = {doc.at("test").at(0).get<std::size_t>(),
                 doc.at("test").at(1).get<std::size_t>()};
    if (doc.contains("repeat") && !doc.at("repeat").is_null()) {
      inst.repeat = TokenRange{doc.at("repeat").at(0).get<std::size_t>(),
                               doc.at("repeat").at(1).get<std::size_t>()};
    }
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("walk instance: ") + e.what());
  }
}

std::size_t minimum_length(Condition condition) {
  switch (condition) {
    case Condition::kShort:
    case Condition::kLong:
    case Condition::kZeroShot:
      return kEarliestInsert + kTestWalkLength;
    case Condition::kLongRepeat:
      return kLatestShortInsert + 1 + kTestWalkLength;
    default:
      throw DomainError("condition '" + std::string(store::to_string(condition)) +
                        "' is not a grid condition");
  }
}

}  // namespace trajgeom::grid
