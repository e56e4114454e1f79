#include "cot2/tasks/graph.hpp"

#include <algorithm>
#include <numeric>

#include "cot2/common/error.hpp"

namespace cot2::tasks {
namespace {

const char* const kStructural[] = {"Description", "{",     "}",     ".",
                                   "in",          "not in", "Question", "or",
                                   "Steps",       "Answer", "True",  "False"};

std::size_t uniform_index(Stream& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
}

template <typename T>
void shuffle(std::vector<T>& v, Stream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

void validate(const GraphInstance& g) {
  if (g.root >= g.concept_count) {
    throw DataError("graph: root outside concept range");
  }
  for (const auto& [a, b] : g.edges) {
    if (a >= g.concept_count || b >= g.concept_count) {
      throw DataError("graph: edge endpoint outside concept range");
    }
  }
  const std::size_t expected = g.kind == GraphKind::ProsQA ? 2 : 1;
  if (g.targets.size() != expected) {
    throw DataError("graph: wrong number of question targets");
  }
  if (g.hops == 0) {
    throw DataError("graph: hop count must be positive");
  }
}

}  // namespace

GraphTokens::GraphTokens(std::size_t concept_count) : concepts_(concept_count) {
  for (const char* name : kStructural) {
    vocab_.add(name);
  }
  first_concept_ = vocab_.size();
  for (std::size_t i = 0; i < concept_count; ++i) {
    vocab_.add("C" + std::to_string(i));
  }
}

std::size_t GraphTokens::concept_token(std::size_t id) const {
  if (id >= concepts_) {
    throw VocabularyError("graph: concept " + std::to_string(id) +
                          " outside vocabulary");
  }
  return first_concept_ + id;
}

std::vector<std::vector<std::uint64_t>> walk_counts(const GraphInstance& g) {
  validate(g);
  std::vector<std::vector<std::uint64_t>> counts(
      g.hops + 1, std::vector<std::uint64_t>(g.concept_count, 0));
  counts[0][g.root] = 1;
  for (std::size_t t = 0; t < g.hops; ++t) {
    for (const auto& [a, b] : g.edges) {
      counts[t + 1][b] += counts[t][a];
    }
  }
  return counts;
}

bool reachable_in_hops(const GraphInstance& g, std::size_t node) {
  return walk_counts(g)[g.hops].at(node) > 0;
}

std::size_t graph_answer(const GraphInstance& g, const GraphTokens& tokens) {
  const auto counts = walk_counts(g);
  const auto& last = counts[g.hops];
  if (g.kind == GraphKind::ProntoQA) {
    const bool reachable = last.at(g.targets[0]) > 0;
    return reachable != g.negated ? tokens.true_token() : tokens.false_token();
  }
  const bool first = last.at(g.targets[0]) > 0;
  const bool second = last.at(g.targets[1]) > 0;
  if (first == second) {
    throw GenerationError("graph: ProsQA question needs exactly one reachable candidate");
  }
  return tokens.concept_token(first ? g.targets[0] : g.targets[1]);
}

SupervisionTrace graph_supervision(const GraphInstance& g,
                                   const GraphTokens& tokens) {
  const auto counts = walk_counts(g);
  SupervisionTrace trace;
  for (std::size_t t = 1; t <= g.hops; ++t) {
    std::vector<std::pair<std::size_t, std::uint64_t>> step;
    for (std::size_t node = 0; node < g.concept_count; ++node) {
      if (counts[t][node] > 0) {
        step.emplace_back(tokens.concept_token(node), counts[t][node]);
      }
    }
    if (step.empty()) {
      throw GenerationError("graph: no walk of length " + std::to_string(t) +
                            " from the root");
    }
    trace.steps.push_back(SparseStep::from_counts(step));
  }
  trace.steps.push_back(SparseStep::one_hot(graph_answer(g, tokens)));
  return trace;
}

std::vector<std::size_t> graph_path(const GraphInstance& g,
                                    const GraphTokens& tokens) {
  const auto counts = walk_counts(g);
  const auto& last = counts[g.hops];
  std::size_t end = g.concept_count;
  for (std::size_t target : g.targets) {
    if (last.at(target) > 0) {
      end = target;
      break;
    }
  }
  if (end == g.concept_count) {
    for (std::size_t node = 0; node < g.concept_count; ++node) {
      if (last[node] > 0) {
        end = node;
        break;
      }
    }
  }
  if (end == g.concept_count) {
    throw GenerationError("graph: no walk of the hop length from the root");
  }
  // Walk backwards choosing the smallest predecessor that is reachable one
  // step earlier.
  std::vector<std::size_t> nodes(g.hops + 1);
  nodes[g.hops] = end;
  for (std::size_t t = g.hops; t > 0; --t) {
    std::size_t best = g.concept_count;
    for (const auto& [a, b] : g.edges) {
      if (b == nodes[t] && counts[t - 1][a] > 0) {
        best = std::min(best, a);
      }
    }
    nodes[t - 1] = best;
  }
  std::vector<std::size_t> path;
  for (std::size_t t = 1; t <= g.hops; ++t) {
    path.push_back(tokens.concept_token(nodes[t]));
  }
  path.push_back(graph_answer(g, tokens));
  return path;
}

std::vector<std::size_t> graph_prompt(const GraphInstance& g,
                                      const GraphTokens& tokens) {
  validate(g);
  std::vector<std::size_t> p{tokens.token("Description"), tokens.token("{")};
  for (const auto& [a, b] : g.edges) {
    p.push_back(tokens.concept_token(a));
    p.push_back(tokens.token("in"));
    p.push_back(tokens.concept_token(b));
    p.push_back(tokens.token("."));
  }
  p.push_back(tokens.token("}"));
  p.push_back(tokens.token("Question"));
  p.push_back(tokens.token("{"));
  p.push_back(tokens.concept_token(g.root));
  if (g.kind == GraphKind::ProntoQA) {
    p.push_back(tokens.token(g.negated ? "not in" : "in"));
    p.push_back(tokens.concept_token(g.targets[0]));
    p.push_back(tokens.token("."));
  } else {
    p.push_back(tokens.token("in"));
    p.push_back(tokens.concept_token(g.targets[0]));
    p.push_back(tokens.token("or"));
    p.push_back(tokens.concept_token(g.targets[1]));
  }
  p.push_back(tokens.token("}"));
  p.push_back(tokens.token("Steps"));
  return p;
}

GraphInstance generate_graph(GraphKind kind, const GraphGeneratorConfig& config,
                             std::size_t concept_count, Stream& rng) {
  const std::size_t hops = config.hops, width = config.width;
  const std::size_t dag_nodes = 1 + hops * width;
  if (hops == 0 || width == 0 || config.distractors == 0) {
    throw ConfigError("graph: hops, width and distractors must be positive");
  }
  if (dag_nodes + config.distractors > concept_count) {
    throw ConfigError("graph: " + std::to_string(dag_nodes + config.distractors) +
                      " nodes do not fit in " + std::to_string(concept_count) +
                      " concepts");
  }
  std::vector<std::size_t> names(concept_count);
  std::iota(names.begin(), names.end(), 0);
  shuffle(names, rng);
  // Layout: slot 0 is the root, slots 1 + l*width + k form layer l+1, then
  // the distractors.
  auto layer_slot = [&](std::size_t layer, std::size_t k) {
    return layer == 0 ? std::size_t{0} : 1 + (layer - 1) * width + k;
  };
  auto layer_width = [&](std::size_t layer) { return layer == 0 ? std::size_t{1} : width; };

  GraphInstance g;
  g.kind = kind;
  g.concept_count = concept_count;
  g.hops = hops;
  g.root = names[0];
  std::vector<std::pair<std::size_t, std::size_t>> slot_edges;
  for (std::size_t layer = 0; layer < hops; ++layer) {
    for (std::size_t k = 0; k < width; ++k) {
      const std::size_t child = layer_slot(layer + 1, k);
      const std::size_t parent = uniform_index(rng, layer_width(layer));
      for (std::size_t p = 0; p < layer_width(layer); ++p) {
        if (p == parent || rng.uniform() < config.extra_edge_probability) {
          slot_edges.emplace_back(layer_slot(layer, p), child);
        }
      }
    }
  }
  const std::size_t first_distractor = dag_nodes;
  for (std::size_t i = 0; i < config.distractors; ++i) {
    const std::size_t from = first_distractor + i;
    for (std::size_t to = 1; to < dag_nodes + config.distractors; ++to) {
      if (to != from && rng.uniform() < config.distractor_edge_probability /
                                             static_cast<double>(width)) {
        slot_edges.emplace_back(from, to);
      }
    }
  }
  for (const auto& [a, b] : slot_edges) {
    g.edges.emplace_back(names[a], names[b]);
  }
  shuffle(g.edges, rng);

  const std::size_t reachable = names[layer_slot(hops, uniform_index(rng, width))];
  const std::size_t unreachable =
      names[first_distractor + uniform_index(rng, config.distractors)];
  if (kind == GraphKind::ProntoQA) {
    const bool label = rng.uniform() < 0.5;
    g.negated = rng.uniform() < 0.5;
    // The answer is True iff reachable differs from negated.
    const bool want_reachable = label != g.negated;
    g.targets = {want_reachable ? reachable : unreachable};
  } else {
    if (rng.uniform() < 0.5) {
      g.targets = {reachable, unreachable};
    } else {
      g.targets = {unreachable, reachable};
    }
  }
  return g;
}

}  // namespace cot2::tasks
