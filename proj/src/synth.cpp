#include "trajgeom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "trajgeom/gridworld.hpp"
#include "trajgeom/rng.hpp"

namespace trajgeom::synth {

namespace {

using store::Condition;

constexpr double kBaseStep = 20.0;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

double condition_strength(Condition c) {
  switch (c) {
    case Condition::kShort:
      return 0.1;
    case Condition::kLong:
    case Condition::kLongRepeat:
      return 0.9;
    case Condition::kZeroShot:
      return 0.7;
    case Condition::kShotK:
      return 0.5;
    case Condition::kNatural:
      return 0.8;
    case Condition::kRandomControl:
      return 0.0;
  }
  return 0.0;
}

/// Standard normal via Box-Muller on the portable uniform source.
double normal(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Bump of width 8 layers centred two thirds of the way up the stack.
double layer_gain(std::size_t layer, std::size_t n_layers) {
  const double mid = std::round(2.0 * static_cast<double>(n_layers) / 3.0);
  return std::max(0.0, 1.0 - std::abs(static_cast<double>(layer) - mid) / 8.0);
}

/// Per-token straightening strength for phase-structured prompts.
std::vector<double> phase_strengths(const store::SequenceRecord& rec, std::size_t n,
                                    double fallback) {
  std::vector<double> s(n, fallback);
  std::vector<store::TokenRange> shots;
  for (const auto& sp : rec.spans) {
    if (sp.label == store::SpanLabel::kShotBoundary) {
      shots.push_back(sp.range());
    }
  }
  std::sort(shots.begin(), shots.end(),
            [](const auto& x, const auto& y) { return x.start < y.start; });
  auto shot_of = [&](std::size_t token) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < shots.size(); ++i) {
      if (shots[i].start <= token) {
        idx = i;
      }
    }
    return static_cast<double>(idx);
  };
  for (const auto& sp : rec.spans) {
    for (std::size_t t = sp.start; t < sp.end; ++t) {
      const double shot = shot_of(t);
      switch (sp.label) {
        case store::SpanLabel::kQuestion:
          s[t] = shot == 0.0 ? 0.6 : 0.2;
          break;
        case store::SpanLabel::kTransition:
        case store::SpanLabel::kChoice:
          s[t] = std::min(1.0, 0.15 * shot);
          break;
        case store::SpanLabel::kAnswer:
          s[t] = 0.3;
          break;
        default:
          break;
      }
    }
  }
  return s;
}

void fill_zigzag(store::ActivationTensor& act, std::span<const double> strength,
                 Rng& rng) {
  const std::size_t n = act.n_tokens();
  const std::size_t dim = act.hidden_dim();
  std::vector<std::size_t> axes(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    axes[d] = d;
  }
  rng.shuffle(axes);
  std::vector<float> origin(dim);
  for (auto& o : origin) {
    o = static_cast<float>(static_cast<int>(rng.index(11)) - 5);
  }
  const double jitter = static_cast<double>(rng.index(5));
  for (std::size_t layer = 0; layer < act.n_layers(); ++layer) {
    const double gain = layer_gain(layer, act.n_layers());
    double x = 0.0, y = 0.0, z = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) {
        if (layer == 0) {
          x += kBaseStep;
          y += (t % 2 == 0 ? 1.0 : -1.0) * kBaseStep;
        } else {
          const double s = strength[t];
          const double b = std::round(kBaseStep * (1.0 - s * gain)) +
                           static_cast<double>(rng.index(3));
          x += kBaseStep + jitter;
          y += (t % 2 == 0 ? 1.0 : -1.0) * b;
          z += static_cast<double>(static_cast<int>(rng.index(3)) - 1) *
               std::round(3.0 * (1.0 - s));
        }
      }
      auto row = act.row(layer, t);
      std::copy(origin.begin(), origin.end(), row.begin());
      row[axes[0]] += static_cast<float>(x);
      if (dim > 1) {
        row[axes[1]] += static_cast<float>(y);
      }
      if (dim > 2) {
        row[axes[2]] += static_cast<float>(z);
      }
    }
  }
}

}  // namespace

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && is_space(text[i])) {
      ++i;
    }
    if (i == text.size()) {
      if (!out.empty()) {
        out.back().text += text.substr(start);
        out.back().char_end = text.size();
      } else {
        out.push_back({text.substr(start), start, text.size()});
      }
      break;
    }
    while (i < text.size() && !is_space(text[i])) {
      ++i;
    }
    out.push_back({text.substr(start, i - start), start, i});
  }
  return out;
}

store::TokenRange char_to_token_span(const std::vector<Token>& tokens,
                                     std::size_t char_start, std::size_t char_end) {
  store::TokenRange r{tokens.size(), 0};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t].char_end > char_start && tokens[t].char_start < char_end) {
      r.start = std::min(r.start, t);
      r.end = t + 1;
    }
  }
  if (r.end <= r.start) {
    throw DomainError("character span [" + std::to_string(char_start) + "," +
                      std::to_string(char_end) + ") covers no token");
  }
  return r;
}

double zigzag_angle(double a, double b) {
  return std::acos((a * a - b * b) / (a * a + b * b));
}

double planted_straightening(Condition condition, std::size_t jitter,
                             std::size_t layer, std::size_t planted_layer) {
  if (layer == 0) {
    return 0.0;
  }
  const double a = kBaseStep + static_cast<double>(jitter);
  const double b = condition == Condition::kLong
                       ? std::abs(static_cast<double>(layer) -
                                  static_cast<double>(planted_layer))
                       : kBaseStep;
  return zigzag_angle(kBaseStep, kBaseStep) - zigzag_angle(a, b);
}

store::TrajectoryBundle planted_bundle(const PlantedOptions& o) {
  if (o.hidden_dim < 3 || o.n_layers <= o.planted_layer) {
    throw DomainError("planted bundle needs hidden_dim >= 3 and the planted layer stored");
  }
  constexpr std::size_t kTokens = grid::kPrefixTokens + grid::kTestWalkLength;
  store::BundleManifest m;
  m.model_id = "planted-zigzag";
  m.precision = "synthetic";
  m.tokenizer_id = "none";
  m.n_layers_stored = static_cast<std::uint32_t>(o.n_layers);
  m.hidden_dim = static_cast<std::uint32_t>(o.hidden_dim);
  m.creation_seed = o.seed;
  std::vector<store::SequenceTensors> tensors;
  for (Condition cond : {Condition::kLong, Condition::kShort}) {
    for (std::size_t i = 0; i < o.per_condition; ++i) {
      const std::size_t j = i % 5;
      store::SequenceRecord rec;
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04zu", i);
      rec.id = std::string(store::to_string(cond)) + "_" + buf;
      rec.condition = cond;
      for (std::size_t t = 0; t < kTokens; ++t) {
        rec.token_ids.push_back(static_cast<std::int64_t>(t + 1));
      }
      rec.spans = {{0, grid::kPrefixTokens, store::SpanLabel::kPrefix},
                   {grid::kPrefixTokens, kTokens, store::SpanLabel::kTestWindow}};
      rec.payload = {{"jitter", j}};
      store::ActivationTensor act(o.n_layers, kTokens, o.hidden_dim);
      for (std::size_t layer = 0; layer < o.n_layers; ++layer) {
        double a = kBaseStep, b = kBaseStep;
        if (layer > 0) {
          a += static_cast<double>(j);
          if (cond == Condition::kLong) {
            b = std::abs(static_cast<double>(layer) - static_cast<double>(o.planted_layer));
          }
        }
        double x = 0.0, y = 0.0;
        for (std::size_t t = 0; t < kTokens; ++t) {
          if (t > 0) {
            x += a;
            y += (t % 2 == 0 ? 1.0 : -1.0) * b;
          }
          auto row = act.row(layer, t);
          row[0] = static_cast<float>(x);
          row[1] = static_cast<float>(y);
          row[2] = static_cast<float>(i);
        }
      }
      m.sequences.push_back(std::move(rec));
      tensors.push_back({std::move(act), {}, std::nullopt});
    }
  }
  return store::TrajectoryBundle(std::move(m), std::move(tensors));
}

store::TrajectoryBundle simulate_bundle(const suite::Suite& suite,
                                        const SimulateOptions& o) {
  if (o.hidden_dim < 3 || o.n_layers < 2) {
    throw DomainError("simulated bundle needs hidden_dim >= 3 and two layers");
  }
  // Node words per node, for logits.
  std::vector<std::vector<std::string>> node_words;
  grid::Adjacency adjacency;
  if (suite.kind == "grid") {
    const auto spec = grid::grid_spec_from_json(suite.spec);
    adjacency = spec.adjacency;
    for (const auto& w : spec.words) {
      node_words.push_back({w});
    }
  } else if (suite.kind == "latent") {
    const auto spec = grid::latent_spec_from_json(suite.spec);
    adjacency = spec.adjacency;
    for (const auto& kids : spec.children) {
      node_words.emplace_back(kids.begin(), kids.end());
    }
  }

  std::vector<std::vector<Token>> tokens;
  std::set<std::string> vocab_set;
  for (const auto& e : suite.entries) {
    tokens.push_back(tokenize(e.text()));
    for (const auto& t : tokens.back()) {
      const auto first = t.text.find_first_not_of(" \t\r\n");
      vocab_set.insert(first == std::string::npos ? t.text : t.text.substr(first));
    }
  }
  for (const auto& words : node_words) {
    vocab_set.insert(words.begin(), words.end());
  }
  std::map<std::string, std::int64_t> vocab;
  for (const auto& w : vocab_set) {
    vocab.emplace(w, static_cast<std::int64_t>(vocab.size() + 1));
  }

  store::BundleManifest m;
  m.model_id = o.model_id;
  m.precision = "synthetic";
  m.tokenizer_id = "whitespace-attached";
  m.n_layers_stored = static_cast<std::uint32_t>(o.n_layers);
  m.hidden_dim = static_cast<std::uint32_t>(o.hidden_dim);
  m.creation_seed = o.seed;
  m.suite = suite.header();
  std::vector<std::size_t> column_node;  // tracked column -> node
  for (std::size_t v = 0; v < node_words.size(); ++v) {
    for (const auto& w : node_words[v]) {
      m.tracked_token_ids.push_back(vocab.at(w));
      m.tracked_token_labels.push_back(w);
      column_node.push_back(v);
    }
  }

  std::vector<store::SequenceTensors> tensors;
  for (std::size_t i = 0; i < suite.entries.size(); ++i) {
    const auto& e = suite.entries[i];
    Rng rng(derive_seed(o.seed, i));
    const auto& toks = tokens[i];
    store::SequenceRecord rec;
    rec.id = e.id;
    rec.condition = e.condition;
    rec.payload = e.payload();
    for (const auto& t : toks) {
      const auto first = t.text.find_first_not_of(" \t\r\n");
      rec.token_ids.push_back(
          vocab.at(first == std::string::npos ? t.text : t.text.substr(first)));
    }
    for (const auto& sp : e.doc.at("spans")) {
      const auto r = char_to_token_span(toks, sp.at("char_start").get<std::size_t>(),
                                        sp.at("char_end").get<std::size_t>());
      rec.spans.push_back(
          {r.start, r.end, store::parse_span_label(sp.at("label").get<std::string>())});
    }

    double strength = condition_strength(e.condition);
    if (e.doc.contains("context_length") && e.condition != Condition::kShort) {
      const double len = e.doc.at("context_length").get<double>();
      strength *= std::clamp(std::log2(len / 32.0) / 5.0, 0.2, 1.0);
    }
    std::vector<double> per_token(toks.size(), strength);
    if (suite.kind == "fewshot" || suite.kind == "riddle") {
      per_token = phase_strengths(rec, toks.size(), 0.3);
      const bool correct = rng.uniform() < o.answer_accuracy;
      rec.payload["generated_answer"] =
          correct ? " " + e.doc.at("expected_answer").get<std::string>() : " unknown";
    }
    if (toks.empty()) {
      throw DomainError("entry " + e.id + " has no tokens");
    }
    store::ActivationTensor act(o.n_layers, toks.size(), o.hidden_dim);
    fill_zigzag(act, per_token, rng);

    store::LogitMatrix logits;
    if (!column_node.empty()) {
      logits = store::LogitMatrix(toks.size(), column_node.size());
      const auto nodes = e.doc.at("nodes").get<std::vector<std::size_t>>();
      const double sep = 2.0 * strength;
      for (std::size_t t = 0; t < toks.size(); ++t) {
        for (std::size_t c = 0; c < column_node.size(); ++c) {
          double x = 0.5 * normal(rng);
          const std::size_t v = column_node[c];
          if (t < nodes.size() && v != nodes[t]) {
            x += adjacency.has_edge(nodes[t], v) ? sep / 2.0 : -sep / 2.0;
          }
          logits.at(t, c) = static_cast<float>(x);
        }
      }
    }
    m.sequences.push_back(std::move(rec));
    tensors.push_back({std::move(act), std::move(logits), std::nullopt});
  }
  return store::TrajectoryBundle(std::move(m), std::move(tensors));
}

}  // namespace trajgeom::synth
