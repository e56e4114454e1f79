#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "cot2/common/rng.hpp"
#include "cot2/tasks/supervision.hpp"
#include "cot2/tasks/vocabulary.hpp"

namespace cot2::tasks {

enum class GraphKind { ProsQA, ProntoQA };

/// Directed concept graph with a reachability question. Nodes are concept ids
/// in [0, concept_count); an edge (a, b) reads "a in b".
struct GraphInstance {
  GraphKind kind = GraphKind::ProsQA;
  std::size_t concept_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t root = 0;
  /// ProntoQA: one target. ProsQA: two candidates in prompt order.
  std::vector<std::size_t> targets;
  /// ProntoQA question polarity ("not in" when true).
  bool negated = false;
  std::size_t hops = 5;
};

/// 12 structural tokens followed by the concept tokens C0..C{n-1}.
class GraphTokens {
 public:
  explicit GraphTokens(std::size_t concept_count = 19);

  const Vocabulary& vocabulary() const { return vocab_; }
  std::size_t concept_count() const { return concepts_; }
  std::size_t concept_token(std::size_t id) const;
  std::size_t token(const char* name) const { return vocab_.index(name); }
  std::size_t true_token() const { return token("True"); }
  std::size_t false_token() const { return token("False"); }

 private:
  Vocabulary vocab_;
  std::size_t concepts_;
  std::size_t first_concept_;
};

/// Number of distinct length-t walks from the root to every node, t = 0..hops.
std::vector<std::vector<std::uint64_t>> walk_counts(const GraphInstance& g);

/// Whether `node` is reachable from the root by a walk of exactly g.hops edges.
bool reachable_in_hops(const GraphInstance& g, std::size_t node);

/// Token of the correct final answer: True/False for ProntoQA, the reachable
/// candidate for ProsQA. Throws GenerationError when the question is
/// undecidable (ProsQA with zero or two reachable candidates).
std::size_t graph_answer(const GraphInstance& g, const GraphTokens& tokens);

/// Steps 1..hops spread mass over nodes reached by length-t walks, weighted by
/// walk count; the final step is one-hot at the answer.
SupervisionTrace graph_supervision(const GraphInstance& g,
                                   const GraphTokens& tokens);

/// Explicit chain root -> ... of hops nodes followed by the answer token. The
/// chain ends at the reachable target when there is one, otherwise at the
/// smallest node reached in exactly hops edges.
std::vector<std::size_t> graph_path(const GraphInstance& g,
                                    const GraphTokens& tokens);

/// Description { a in b . ... } Question { ... } Steps
std::vector<std::size_t> graph_prompt(const GraphInstance& g,
                                      const GraphTokens& tokens);

struct GraphGeneratorConfig {
  std::size_t hops = 5;
  /// Nodes per layer of the layered DAG hanging off the root.
  std::size_t width = 2;
  /// Extra intra-DAG edges: each (layer l, layer l+1) pair beyond the spanning
  /// parent is added with this probability.
  double extra_edge_probability = 0.25;
  /// Nodes unreachable from the root; they still point into the DAG.
  std::size_t distractors = 6;
  double distractor_edge_probability = 0.3;
};

/// One random instance. Node names are a random permutation of the concepts,
/// edge order is shuffled, ProntoQA labels are a fair coin and the ProsQA
/// correct candidate is placed first or second with equal probability.
GraphInstance generate_graph(GraphKind kind, const GraphGeneratorConfig& config,
                             std::size_t concept_count, Stream& rng);

}  // namespace cot2::tasks
