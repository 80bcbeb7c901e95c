#pragma once

// Synthetic bundles with planted geometry and logits, used in place of a
// language model for end-to-end runs and fixtures.
//
// Trajectories are planar zigzags with integer coordinates: consecutive
// transitions (a, b) and (a, -b) meet at angle acos((a^2 - b^2) / (a^2 + b^2)),
// which float32 storage reproduces exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "trajgeom/store.hpp"
#include "trajgeom/suite.hpp"

namespace trajgeom::synth {

/// Whitespace-attached tokens: each token is a run of whitespace followed by
/// a run of non-whitespace ("Q:", " Latvia", "\nA:").
struct Token {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

std::vector<Token> tokenize(const std::string& text);

/// Tokens overlapping the byte range [char_start, char_end).
store::TokenRange char_to_token_span(const std::vector<Token>& tokens,
                                     std::size_t char_start, std::size_t char_end);

/// Turning angle of the (a, b), (a, -b) zigzag.
double zigzag_angle(double a, double b);

struct PlantedOptions {
  std::size_t per_condition = 20;
  std::size_t n_layers = 30;
  std::size_t hidden_dim = 8;
  std::size_t planted_layer = 20;
  std::uint64_t seed = 0;
};

/// Two conditions of 7-token windows (2 prefix + 5 test tokens).
/// Layer 0 of every sequence is a right-angle zigzag. In "long" sequences
/// layer l >= 1 uses a = 20 + j, b = |l - planted_layer| (collinear at the
/// planted layer); in "short" sequences a = 20 + j, b = 20. The jitter j is
/// sequence index mod 5.
store::TrajectoryBundle planted_bundle(const PlantedOptions& options = {});

/// Exact straightening of a planted sequence at `layer`.
double planted_straightening(store::Condition condition, std::size_t jitter,
                             std::size_t layer, std::size_t planted_layer);

struct SimulateOptions {
  std::size_t n_layers = 30;
  std::size_t hidden_dim = 16;
  std::uint64_t seed = 0;
  std::string model_id = "synthetic-zigzag";
  /// Fraction of few-shot / riddle prompts given the correct answer.
  double answer_accuracy = 0.75;
};

/// Bundle for every entry of a suite. Token spans are mapped from the
/// entry's character spans; grid and latent suites get tracked logits for
/// every node word with neighbours raised according to the condition.
store::TrajectoryBundle simulate_bundle(const suite::Suite& suite,
                                        const SimulateOptions& options = {});

}  // namespace trajgeom::synth
