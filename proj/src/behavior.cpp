#include "trajgeom/behavior.hpp"

#include <map>

#include "trajgeom/numeric.hpp"

namespace trajgeom::behavior {

namespace {

std::string_view strip(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

NodeColumns resolve_columns(std::span<const std::vector<std::string>> node_words,
                            std::span<const std::string> tracked_labels) {
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < tracked_labels.size(); ++i) {
    index.emplace(std::string(strip(tracked_labels[i])), i);
  }
  NodeColumns out;
  std::vector<std::string> missing;
  for (const auto& words : node_words) {
    auto& cols = out.columns.emplace_back();
    for (const auto& w : words) {
      const auto it = index.find(strip(w));
      if (it == index.end()) {
        missing.push_back(w);
      } else {
        cols.push_back(it->second);
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "node tokens missing from the tracked set:";
    for (const auto& w : missing) {
      msg += " '" + w + "'";
    }
    throw MissingTokenError(msg, std::move(missing));
  }
  return out;
}

NodeColumns grid_columns(const grid::GridTaskSpec& spec,
                         std::span<const std::string> tracked_labels) {
  std::vector<std::vector<std::string>> words;
  for (const auto& w : spec.words) {
    words.push_back({w});
  }
  return resolve_columns(words, tracked_labels);
}

NodeColumns latent_columns(const grid::LatentGridTaskSpec& spec,
                           std::span<const std::string> tracked_labels) {
  std::vector<std::vector<std::string>> words;
  for (const auto& kids : spec.children) {
    words.emplace_back(kids.begin(), kids.end());
  }
  return resolve_columns(words, tracked_labels);
}

NeighborEval neighbor_eval(const store::LogitMatrix& logits,
                           const grid::Adjacency& adjacency,
                           const NodeColumns& columns,
                           std::span<const grid::NodeId> test_nodes,
                           store::TokenRange test_span) {
  if (columns.n_nodes() != adjacency.n_nodes()) {
    throw DomainError("neighbor_eval: column map covers " +
                      std::to_string(columns.n_nodes()) + " nodes, graph has " +
                      std::to_string(adjacency.n_nodes()));
  }
  if (test_span.size() == 0 || test_span.size() != test_nodes.size()) {
    throw DomainError("neighbor_eval: test span and test nodes differ in length");
  }
  if (test_span.end > logits.n_tokens()) {
    throw DomainError("neighbor_eval: test span exceeds the logit matrix");
  }
  for (const auto& cols : columns.columns) {
    for (std::size_t c : cols) {
      if (c >= logits.n_tracked()) {
        throw MissingTokenError("neighbor_eval: node column outside the tracked set", {});
      }
    }
  }

  NeighborEval out;
  numeric::CompensatedSum nb_total, nn_total, diff_total;
  std::size_t successes = 0;
  for (std::size_t t = 0; t < test_nodes.size(); ++t) {
    const grid::NodeId cur = test_nodes[t];
    if (cur >= adjacency.n_nodes()) {
      throw DomainError("neighbor_eval: test node out of range");
    }
    const std::size_t pos = test_span.start + t;
    numeric::CompensatedSum nb, nn;
    std::size_t n_nb = 0, n_nn = 0;
    for (grid::NodeId v = 0; v < adjacency.n_nodes(); ++v) {
      if (v == cur) {
        continue;
      }
      const bool is_nb = adjacency.has_edge(cur, v);
      for (std::size_t c : columns.columns[v]) {
        const double x = logits.at(pos, c);
        if (is_nb) {
          nb.add(x);
          ++n_nb;
        } else {
          nn.add(x);
          ++n_nn;
        }
      }
    }
    if (n_nb == 0 || n_nn == 0) {
      throw DomainError("neighbor_eval: empty neighbour or non-neighbour set at node " +
                        std::to_string(cur));
    }
    NeighborStep step;
    step.position = pos;
    step.node = cur;
    step.neighbor_mean = nb.value() / static_cast<double>(n_nb);
    step.non_neighbor_mean = nn.value() / static_cast<double>(n_nn);
    step.success = step.neighbor_mean > step.non_neighbor_mean;
    nb_total.add(step.neighbor_mean);
    nn_total.add(step.non_neighbor_mean);
    diff_total.add(step.difference());
    successes += step.success ? 1 : 0;
    out.steps.push_back(step);
  }
  const double n = static_cast<double>(out.steps.size());
  out.neighbor_mean = nb_total.value() / n;
  out.non_neighbor_mean = nn_total.value() / n;
  out.logit_difference = diff_total.value() / n;
  out.success_rate = static_cast<double>(successes) / n;
  return out;
}

bool exact_match(std::string_view generated, std::string_view expected) {
  return strip(generated) == strip(expected);
}

AccuracyRecord score_answer(std::string prompt_id, std::string generated,
                            std::string expected) {
  AccuracyRecord r{std::move(prompt_id), std::move(generated), std::move(expected), false};
  r.correct = exact_match(r.generated, r.expected);
  return r;
}

double accuracy(std::span<const AccuracyRecord> records) {
  if (records.empty()) {
    throw DomainError("accuracy: no records");
  }
  std::size_t hits = 0;
  for (const auto& r : records) {
    hits += r.correct ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

LogitScatter logit_scatter(std::span<const NeighborEval> evals) {
  if (evals.empty()) {
    throw DomainError("logit_scatter: no evaluations");
  }
  LogitScatter s;
  for (const auto& e : evals) {
    for (const auto& step : e.steps) {
      s.neighbor.push_back(step.neighbor_mean);
      s.non_neighbor.push_back(step.non_neighbor_mean);
      s.difference.push_back(step.difference());
    }
  }
  return s;
}

LogitScatter logit_scatter_sequences(std::span<const NeighborEval> evals) {
  if (evals.empty()) {
    throw DomainError("logit_scatter: no evaluations");
  }
  LogitScatter s;
  for (const auto& e : evals) {
    s.neighbor.push_back(e.neighbor_mean);
    s.non_neighbor.push_back(e.non_neighbor_mean);
    s.difference.push_back(e.logit_difference);
  }
  return s;
}

void write_step_rows(std::ostream& out, std::span<const NeighborEval> evals,
                     char d) {
  out << "sequence_id" << d << "condition" << d << "step" << d << "neighbor_mean" << d
      << "non_neighbor_mean" << d << "success\n";
  for (const auto& e : evals) {
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      const auto& s = e.steps[t];
      out << e.sequence_id << d << store::to_string(e.condition) << d << t << d
          << numeric::format_double(s.neighbor_mean) << d
          << numeric::format_double(s.non_neighbor_mean) << d << (s.success ? 1 : 0)
          << '\n';
    }
  }
}

}  // namespace trajgeom::behavior
