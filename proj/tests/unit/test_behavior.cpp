#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "trajgeom/behavior.hpp"
#include "trajgeom/gridworld.hpp"

using namespace trajgeom;

namespace {

// Identity column map: node i owns tracked column i.
behavior::NodeColumns identity_columns(std::size_t n) {
  behavior::NodeColumns c;
  for (std::size_t i = 0; i < n; ++i) c.columns.push_back({i});
  return c;
}

std::vector<grid::NodeId> walk_nodes(const grid::Adjacency& adj, std::size_t n,
                                     std::uint64_t seed) {
  return grid::generate_walk(adj, n, seed);
}

// Lattice neighbours from coordinates, independent of Adjacency.
bool lattice_neighbor(grid::NodeId a, grid::NodeId b, std::size_t w) {
  const long dr = static_cast<long>(a / w) - static_cast<long>(b / w);
  const long dc = static_cast<long>(a % w) - static_cast<long>(b % w);
  return std::abs(dr) + std::abs(dc) == 1;
}

}  // namespace

TEST_CASE("planted +1 separation") {
  const auto adj = grid::build_lattice(6, 6);
  const auto nodes = walk_nodes(adj, 40, 3);
  store::LogitMatrix logits(40, 36);
  for (std::size_t t = 0; t < 40; ++t) {
    for (grid::NodeId v : adj.neighbors(nodes[t])) logits.at(t, v) = 1.0f;
  }
  const auto e = behavior::neighbor_eval(logits, adj, identity_columns(36),
                                         nodes, {0, 40});
  REQUIRE(e.steps.size() == 40);
  for (const auto& s : e.steps) {
    CHECK(s.difference() == 1.0);
    CHECK(s.success);
  }
  CHECK(e.logit_difference == 1.0);
  CHECK(e.success_rate == 1.0);

  const auto scatter = behavior::logit_scatter(std::vector{e});
  CHECK(scatter.neighbor.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(scatter.non_neighbor[i] == scatter.neighbor[i] - 1.0);
    CHECK(scatter.difference[i] == 1.0);
  }
}

TEST_CASE("ties are failures") {
  const auto adj = grid::build_lattice(6, 6);
  const auto nodes = walk_nodes(adj, 10, 4);
  store::LogitMatrix logits(10, 36);
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t c = 0; c < 36; ++c) logits.at(t, c) = 2.5f;
  const auto e = behavior::neighbor_eval(logits, adj, identity_columns(36), nodes, {0, 10});
  CHECK(e.logit_difference == 0.0);
  CHECK(e.success_rate == 0.0);
  for (const auto& s : e.steps) CHECK_FALSE(s.success);
}

TEST_CASE("brute-force enumeration oracle and partition soundness") {
  const auto adj = grid::build_lattice(6, 6);
  testing::Normal g(17);
  std::size_t total_steps = 0;
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 60;
    const auto nodes = walk_nodes(adj, n, 100 + rep);
    store::LogitMatrix logits(n, 36);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < 36; ++c) logits.at(t, c) = static_cast<float>(3.0 * g());
    const store::TokenRange span{20, 60};
    const std::vector<grid::NodeId> test(nodes.begin() + 20, nodes.end());
    const auto e = behavior::neighbor_eval(logits, adj, identity_columns(36), test, span);
    REQUIRE(e.steps.size() == 40);

    long double diff_sum = 0.0L;
    for (std::size_t k = 0; k < test.size(); ++k) {
      const grid::NodeId cur = test[k];
      std::set<grid::NodeId> nb;
      std::set<grid::NodeId> nn;
      long double snb = 0.0L;
      long double snn = 0.0L;
      for (grid::NodeId v = 0; v < 36; ++v) {
        if (v == cur) continue;
        const long double x = logits.at(span.start + k, v);
        if (lattice_neighbor(cur, v, 6)) {
          nb.insert(v);
          snb += x;
        } else {
          nn.insert(v);
          snn += x;
        }
      }
      CHECK(nb.size() + nn.size() + 1 == 36);
      CHECK(nb.count(cur) == 0);
      CHECK(nn.count(cur) == 0);
      const double want_nb = static_cast<double>(snb / nb.size());
      const double want_nn = static_cast<double>(snn / nn.size());
      const auto& s = e.steps[k];
      CHECK(s.position == span.start + k);
      CHECK(s.node == cur);
      CHECK(std::abs(s.neighbor_mean - want_nb) < 1e-13);
      CHECK(std::abs(s.non_neighbor_mean - want_nn) < 1e-13);
      CHECK(s.success == (want_nb > want_nn));
      diff_sum += want_nb - want_nn;
      ++total_steps;
    }
    CHECK(std::abs(e.logit_difference - static_cast<double>(diff_sum / 40)) < 1e-13);
  }
  CHECK(total_steps == 1000);
}

TEST_CASE("property: constant shift leaves differences and flags unchanged") {
  const auto adj = grid::build_lattice(6, 6);
  testing::Normal g(23);
  for (int rep = 0; rep < 20; ++rep) {
    const auto nodes = walk_nodes(adj, 30, 200 + rep);
    store::LogitMatrix a(30, 36);
    store::LogitMatrix b(30, 36);
    const float shift = static_cast<float>(std::round(8.0 * g()));
    for (std::size_t t = 0; t < 30; ++t) {
      for (std::size_t c = 0; c < 36; ++c) {
        // Multiples of 1/64 in a small range, so the shift is exact in float.
        const float x = static_cast<float>(std::round(64.0 * g()) / 64.0);
        a.at(t, c) = x;
        b.at(t, c) = x + shift;
      }
    }
    const auto cols = identity_columns(36);
    const auto ea = behavior::neighbor_eval(a, adj, cols, nodes, {0, 30});
    const auto eb = behavior::neighbor_eval(b, adj, cols, nodes, {0, 30});
    CHECK(std::abs(ea.logit_difference - eb.logit_difference) < 1e-12);
    for (std::size_t k = 0; k < 30; ++k) {
      CHECK(std::abs(ea.steps[k].difference() - eb.steps[k].difference()) < 1e-12);
      CHECK(ea.steps[k].success == eb.steps[k].success);
    }
  }
}

TEST_CASE("latent neighbour sets use every child of latent neighbours") {
  const auto adj = grid::build_lattice(4, 4);
  grid::LatentGridTaskSpec spec;
  spec.adjacency = adj;
  std::vector<std::string> labels;
  for (std::size_t v = 0; v < 16; ++v) {
    std::array<std::string, 4> kids;
    for (std::size_t j = 0; j < 4; ++j) {
      kids[j] = "w" + std::to_string(v) + "_" + std::to_string(j);
      labels.push_back(" " + kids[j]);
    }
    spec.children.push_back(kids);
  }
  const auto cols = behavior::latent_columns(spec, labels);
  REQUIRE(cols.n_nodes() == 16);
  CHECK(cols.columns[5] == std::vector<std::size_t>{20, 21, 22, 23});

  const std::vector<grid::NodeId> test{5, 6, 10};
  store::LogitMatrix logits(3, 64);
  for (std::size_t t = 0; t < 3; ++t)
    for (grid::NodeId v : adj.neighbors(test[t]))
      for (std::size_t c : cols.columns[v]) logits.at(t, c) = 2.0f;
  const auto e = behavior::neighbor_eval(logits, adj, cols, test, {0, 3});
  CHECK(e.logit_difference == 2.0);
  CHECK(e.success_rate == 1.0);

  labels.pop_back();
  try {
    behavior::latent_columns(spec, labels);
    FAIL("expected MissingTokenError");
  } catch (const behavior::MissingTokenError& err) {
    CHECK(err.missing() == std::vector<std::string>{"w15_3"});
  }
}

TEST_CASE("neighbor_eval input errors") {
  const auto adj = grid::build_lattice(6, 6);
  const auto nodes = walk_nodes(adj, 5, 1);
  store::LogitMatrix logits(5, 36);
  const auto cols = identity_columns(36);
  CHECK_THROWS_AS(behavior::neighbor_eval(logits, adj, cols, nodes, {0, 4}), DomainError);
  CHECK_THROWS_AS(behavior::neighbor_eval(logits, adj, cols, nodes, {1, 6}), DomainError);
  CHECK_THROWS_AS(behavior::neighbor_eval(logits, adj, identity_columns(30), nodes, {0, 5}),
                  DomainError);
  store::LogitMatrix narrow(5, 20);
  CHECK_THROWS_AS(behavior::neighbor_eval(narrow, adj, cols, nodes, {0, 5}),
                  behavior::MissingTokenError);
}

TEST_CASE("exact match and accuracy") {
  CHECK(behavior::exact_match(" Riga", "Riga"));
  CHECK(behavior::exact_match("Riga\n", " Riga "));
  CHECK_FALSE(behavior::exact_match("riga", "Riga"));
  CHECK_FALSE(behavior::exact_match("Riga.", "Riga"));
  CHECK(behavior::exact_match("", "  "));

  std::vector<behavior::AccuracyRecord> records;
  for (int i = 0; i < 40; ++i) {
    const bool planted = i % 4 != 0;
    records.push_back(behavior::score_answer("p" + std::to_string(i),
                                             planted ? " (C)" : "(D)", "(C)"));
  }
  CHECK(behavior::accuracy(records) == 0.75);
  CHECK(records[1].correct);
  CHECK_FALSE(records[0].correct);
  CHECK_THROWS_AS(behavior::accuracy({}), DomainError);
}

TEST_CASE("scatter views and step rows") {
  behavior::NeighborEval a;
  a.sequence_id = "s0";
  a.condition = store::Condition::kShort;
  a.steps = {{10, 1, 0.5, 0.25, true}, {11, 2, 0.0, 1.0, false}};
  a.neighbor_mean = 0.25;
  a.non_neighbor_mean = 0.625;
  a.logit_difference = -0.375;
  behavior::NeighborEval b = a;
  b.sequence_id = "s1";
  b.steps.pop_back();

  const std::vector evals{a, b};
  const auto steps = behavior::logit_scatter(evals);
  CHECK(steps.neighbor == std::vector<double>{0.5, 0.0, 0.5});
  CHECK(steps.difference == std::vector<double>{0.25, -1.0, 0.25});
  const auto seqs = behavior::logit_scatter_sequences(evals);
  CHECK(seqs.neighbor.size() == 2);
  CHECK(seqs.difference[0] == -0.375);
  CHECK_THROWS_AS(behavior::logit_scatter({}), DomainError);

  std::ostringstream out;
  behavior::write_step_rows(out, evals);
  CHECK(out.str() ==
        "sequence_id,condition,step,neighbor_mean,non_neighbor_mean,success\n"
        "s0,short,0,0.5,0.25,1\n"
        "s0,short,1,0,1,0\n"
        "s1,short,0,0.5,0.25,1\n");
}
