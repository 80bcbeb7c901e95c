#pragma once

// Grid-world and latent-grid-world task generation.
//
// Contexts are uniform random walks on a non-periodic 4-neighbour lattice.
// A 5-node test walk is spliced into the context at a condition-dependent
// position; the surrounding context is sampled as a uniform walk conditioned
// on passing through the test walk (exact bridge sampling), so the walk is
// continuous across the splice. Novelty of the test 5-gram and its two
// 4-grams is enforced by rejection with a bounded retry budget.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajgeom/error.hpp"
#include "trajgeom/rng.hpp"
#include "trajgeom/store.hpp"

namespace trajgeom::grid {

using NodeId = std::size_t;

inline constexpr std::size_t kTestWalkLength = 5;
inline constexpr std::size_t kPrefixTokens = 2;
inline constexpr std::size_t kEarliestInsert = 5;
inline constexpr std::size_t kLatestShortInsert = 64;
inline constexpr std::size_t kLongTail = 64;
inline constexpr std::size_t kRetryBudget = 10000;
inline constexpr std::size_t kChildrenPerLatent = 4;
inline constexpr std::size_t kDefaultExcludedPairs = 8;

class Adjacency {
 public:
  Adjacency() = default;
  Adjacency(std::size_t n_nodes, std::span<const std::pair<NodeId, NodeId>> edges);

  std::size_t n_nodes() const { return neighbors_.size(); }
  std::size_t n_edges() const { return n_edges_; }
  const std::vector<NodeId>& neighbors(NodeId node) const {
    return neighbors_[node];
  }
  std::size_t degree(NodeId node) const { return neighbors_[node].size(); }
  bool has_edge(NodeId a, NodeId b) const;
  /// Undirected edges as (low, high), sorted.
  std::vector<std::pair<NodeId, NodeId>> edges() const;

  bool operator==(const Adjacency&) const = default;

 private:
  std::vector<std::vector<NodeId>> neighbors_;
  std::size_t n_edges_ = 0;
};

/// 4-neighbour, non-wrapping lattice; node id = row * width + column.
Adjacency build_lattice(std::size_t width, std::size_t height);

struct GridTaskSpec {
  std::size_t width = 6;
  std::size_t height = 6;
  Adjacency adjacency;
  std::vector<std::string> words;  ///< word of node i
  std::uint64_t seed = 0;
};

struct WordCategory {
  std::string name;
  std::vector<std::string> words;
};

using ChildPair = std::pair<std::string, std::string>;

struct LatentGridTaskSpec {
  std::size_t width = 4;
  std::size_t height = 4;
  Adjacency adjacency;
  std::vector<std::string> categories;  ///< category of latent node i
  std::vector<std::array<std::string, kChildrenPerLatent>> children;
  /// Ordered child transitions withheld from zero-shot contexts.
  std::vector<ChildPair> excluded;
  std::uint64_t seed = 0;

  /// Latent node emitting `word`, if any.
  std::optional<NodeId> parent_of(std::string_view word) const;
  bool is_excluded(std::string_view from, std::string_view to) const;
};

/// Plain word list: one word per line; blank lines and '#' lines skipped.
std::vector<std::string> load_word_list(const std::filesystem::path& path);
/// Category file: '# name' header lines followed by one word per line;
/// '##' lines are comments.
std::vector<WordCategory> load_categories(const std::filesystem::path& path);

/// Random injective node -> word assignment drawn from `word_pool`.
GridTaskSpec make_grid_spec(std::size_t width, std::size_t height,
                            std::span<const std::string> word_pool,
                            std::uint64_t seed);

LatentGridTaskSpec make_latent_spec(std::size_t width, std::size_t height,
                                    std::span<const WordCategory> categories,
                                    std::size_t n_excluded, std::uint64_t seed);

struct WalkInstance {
  store::Condition condition = store::Condition::kLong;
  std::size_t context_length = 0;
  std::uint64_t seed = 0;
  std::vector<NodeId> nodes;  ///< grid node or latent node per position
  std::vector<std::string> words;
  store::TokenRange test;  ///< word positions of the 5-node test walk
  std::optional<store::TokenRange> repeat;

  std::vector<NodeId> test_nodes() const;
  std::vector<std::string> test_words() const;
  /// The analysis window: two prefix positions plus the test walk.
  store::TokenRange window() const;
};

/// Uniform random walk: uniform start node, uniform neighbour at each step.
std::vector<NodeId> generate_walk(const Adjacency& adjacency,
                                  std::size_t length, std::uint64_t seed);
std::vector<NodeId> generate_walk(const Adjacency& adjacency,
                                  std::size_t length, Rng& rng);

/// Walk of exactly `steps` transitions from `from` to `to`, distributed as a
/// uniform random walk conditioned on its endpoint. Returns nullopt when no
/// such walk exists (e.g. parity on bipartite lattices).
std::optional<std::vector<NodeId>> sample_bridge(const Adjacency& adjacency,
                                                 NodeId from, NodeId to,
                                                 std::size_t steps, Rng& rng);

/// Shortest context that can host the condition's placement rule; throws
/// DomainError for conditions that are not grid conditions.
std::size_t minimum_length(store::Condition condition);

WalkInstance make_instance(const GridTaskSpec& spec, store::Condition condition,
                           std::size_t context_length, std::uint64_t seed);

WalkInstance make_latent_instance(const LatentGridTaskSpec& spec,
                                  store::Condition condition,
                                  std::size_t context_length,
                                  std::uint64_t seed);

struct RenderedSpan {
  store::SpanLabel label = store::SpanLabel::kTestWindow;
  store::TokenRange words;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

struct RenderedPrompt {
  std::string text;
  std::vector<RenderedSpan> spans;
};

/// Space-separated words plus prefix and test-window spans in word and
/// character (byte) positions.
RenderedPrompt render_prompt(const WalkInstance& instance);

/// Every violated instance invariant (empty when the instance is valid).
/// `excluded` is consulted only for zero-shot instances.
std::vector<std::string> audit_instance(const WalkInstance& instance,
                                        const Adjacency& adjacency,
                                        std::span<const ChildPair> excluded = {});

nlohmann::json to_json(const GridTaskSpec& spec);
nlohmann::json to_json(const LatentGridTaskSpec& spec);
nlohmann::json to_json(const WalkInstance& instance);
GridTaskSpec grid_spec_from_json(const nlohmann::json& doc);
LatentGridTaskSpec latent_spec_from_json(const nlohmann::json& doc);
WalkInstance instance_from_json(const nlohmann::json& doc);

}  // namespace trajgeom::grid
