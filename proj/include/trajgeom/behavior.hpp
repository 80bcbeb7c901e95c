#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "trajgeom/error.hpp"
#include "trajgeom/gridworld.hpp"
#include "trajgeom/store.hpp"

namespace trajgeom::behavior {

/// Raised when a node token has no column in the tracked-logit matrix.
class MissingTokenError : public Error {
 public:
  MissingTokenError(const std::string& message, std::vector<std::string> missing)
      : Error(message), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// Tracked-logit columns owned by each node. A grid node owns one column; a
/// latent node owns the columns of its child words.
struct NodeColumns {
  std::vector<std::vector<std::size_t>> columns;

  std::size_t n_nodes() const { return columns.size(); }
};

/// Resolves node words against the manifest's tracked-token labels
/// (compared after stripping surrounding whitespace).
NodeColumns resolve_columns(std::span<const std::vector<std::string>> node_words,
                            std::span<const std::string> tracked_labels);

NodeColumns grid_columns(const grid::GridTaskSpec& spec,
                         std::span<const std::string> tracked_labels);
NodeColumns latent_columns(const grid::LatentGridTaskSpec& spec,
                           std::span<const std::string> tracked_labels);

struct NeighborStep {
  std::size_t position = 0;  ///< token position whose logits are scored
  grid::NodeId node = 0;     ///< current node
  double neighbor_mean = 0.0;
  double non_neighbor_mean = 0.0;
  bool success = false;  ///< neighbor_mean > non_neighbor_mean

  double difference() const { return neighbor_mean - non_neighbor_mean; }
};

struct NeighborEval {
  std::string sequence_id;
  store::Condition condition = store::Condition::kLong;
  std::vector<NeighborStep> steps;
  double neighbor_mean = 0.0;      ///< mean over steps
  double non_neighbor_mean = 0.0;  ///< mean over steps
  double logit_difference = 0.0;   ///< mean over steps of the difference
  double success_rate = 0.0;
};

/// Scores each position of `test_span` (its logits predict the following
/// token) by the mean logit of the current node's neighbours against the
/// mean logit of every other node, the current node excluded.
NeighborEval neighbor_eval(const store::LogitMatrix& logits,
                           const grid::Adjacency& adjacency,
                           const NodeColumns& columns,
                           std::span<const grid::NodeId> test_nodes,
                           store::TokenRange test_span);

/// Strips leading/trailing whitespace from both sides; case preserved.
bool exact_match(std::string_view generated, std::string_view expected);

struct AccuracyRecord {
  std::string prompt_id;
  std::string generated;
  std::string expected;
  bool correct = false;
};

AccuracyRecord score_answer(std::string prompt_id, std::string generated,
                            std::string expected);
double accuracy(std::span<const AccuracyRecord> records);

struct LogitScatter {
  std::vector<double> neighbor;
  std::vector<double> non_neighbor;
  std::vector<double> difference;  ///< neighbor - non_neighbor
};

/// Per-step pairs flattened across evals, in input order.
LogitScatter logit_scatter(std::span<const NeighborEval> evals);
/// One pair per eval (its sequence means).
LogitScatter logit_scatter_sequences(std::span<const NeighborEval> evals);

/// Header plus one row per step:
/// sequence_id,condition,step,neighbor_mean,non_neighbor_mean,success
void write_step_rows(std::ostream& out, std::span<const NeighborEval> evals,
                     char delimiter = ',');

}  // namespace trajgeom::behavior
