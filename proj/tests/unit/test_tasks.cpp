#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

#include "cot2/common/error.hpp"
#include "cot2/common/rng.hpp"
#include "cot2/tasks/dataset.hpp"
#include "cot2/tasks/graph.hpp"
#include "cot2/tasks/mnns.hpp"

namespace cot2::tasks {
namespace {

// Enumerates every signed partial sum of length t, duplicates included.
std::vector<int> enumerate_partial_sums(const std::vector<int>& digits, std::size_t t) {
  std::vector<int> sums;
  for (std::uint32_t mask = 0; mask < (1u << t); ++mask) {
    int s = 0;
    for (std::size_t i = 0; i < t; ++i) s += ((mask >> i) & 1u) ? -digits[i] : digits[i];
    sums.push_back(s);
  }
  return sums;
}

TEST(BruteForce, Examples) {
  const std::vector<int> a{2, 1, 4};
  auto s = brute_force_mnns(a);
  EXPECT_EQ(s.sum, 1);
  EXPECT_EQ(s.signs, (std::vector<int>{-1, -1, 1}));
  const std::vector<int> b{1, 1};
  EXPECT_EQ(brute_force_mnns(b).sum, 0);
  EXPECT_EQ(brute_force_mnns(b).signs, (std::vector<int>{1, -1}));
  const std::vector<int> c{3, 5, 9};
  s = brute_force_mnns(c);
  EXPECT_EQ(s.sum, 1);
  EXPECT_EQ(s.signs, (std::vector<int>{-1, -1, 1}));
}

TEST(BruteForce, WitnessAndMinimalityOnRandomInputs) {
  Stream rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng() % 10;
    std::vector<int> d(m);
    for (int& x : d) x = 1 + static_cast<int>(rng() % 12);
    const auto sol = brute_force_mnns(d);
    int check = 0;
    for (std::size_t i = 0; i < m; ++i) check += sol.signs[i] * d[i];
    EXPECT_EQ(check, sol.sum);
    for (int s : enumerate_partial_sums(d, m)) {
      if (s >= 0) {
        EXPECT_LE(sol.sum, s);
      }
    }
  }
}

TEST(BruteForce, RejectsBadSizes) {
  EXPECT_THROW(brute_force_mnns(std::vector<int>{}), UsageError);
  EXPECT_THROW(brute_force_mnns(std::vector<int>(21, 1)), UsageError);
}

TEST(MnnsTokens, LayoutAndBound) {
  const MnnsTokens four(1, 9, 4);
  EXPECT_EQ(four.sum_bound(), 36);
  EXPECT_EQ(four.vocabulary().size(), 3u + 9u + 73u);
  const MnnsTokens three(1, 5, 3);
  EXPECT_EQ(three.vocabulary().size(), 39u);
  EXPECT_EQ(three.sum_value(three.sum_token(-7)), -7);
  EXPECT_THROW(three.sum_token(16), VocabularyError);
}

TEST(MnnsSupervision, FigureExample) {
  const MnnsTokens tokens(1, 9, 3);
  const auto inst = MnnsInstance::solve({2, 1, 4});
  const auto trace = mnns_supervision(inst, tokens);
  ASSERT_EQ(trace.length(), 3u);
  const auto s1 = trace.steps[0].dense(tokens.vocabulary().size());
  EXPECT_EQ(s1[tokens.sum_token(2)], 0.5);
  EXPECT_EQ(s1[tokens.sum_token(-2)], 0.5);
  const auto s2 = trace.steps[1].dense(tokens.vocabulary().size());
  for (int s : {3, 1, -1, -3}) EXPECT_EQ(s2[tokens.sum_token(s)], 0.25);
  EXPECT_EQ(trace.answer_token(), tokens.sum_token(1));
  EXPECT_EQ(mnns_prompt(inst, tokens),
            (std::vector<std::size_t>{tokens.bos(), tokens.digit_token(2),
                                      tokens.digit_token(1), tokens.digit_token(4),
                                      tokens.arrow()}));
}

TEST(MnnsSupervision, DuplicateSumsAreCounted) {
  const MnnsTokens tokens(1, 9, 3);
  const auto trace = mnns_supervision(MnnsInstance::solve({1, 1, 1}), tokens);
  const auto s2 = trace.steps[1].dense(tokens.vocabulary().size());
  EXPECT_EQ(s2[tokens.sum_token(2)], 0.25);
  EXPECT_EQ(s2[tokens.sum_token(0)], 0.5);
  EXPECT_EQ(s2[tokens.sum_token(-2)], 0.25);
}

TEST(MnnsSupervision, OverflowIsVocabularyError) {
  const MnnsTokens tokens(1, 2, 2);
  EXPECT_THROW(mnns_supervision(MnnsInstance::solve({2, 2, 2, 2}), tokens), VocabularyError);
}

TEST(MnnsSupervision, MatchesEnumerationOracle) {
  const MnnsTokens tokens(1, 9, 6);
  Stream rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + rng() % 5;
    std::vector<int> d(m);
    for (int& x : d) x = 1 + static_cast<int>(rng() % 9);
    const auto inst = MnnsInstance::solve(d);
    const auto trace = mnns_supervision(inst, tokens);
    ASSERT_EQ(trace.length(), m);
    for (std::size_t t = 1; t < m; ++t) {
      std::map<std::size_t, std::uint64_t> oracle;
      for (int s : enumerate_partial_sums(d, t)) ++oracle[tokens.sum_token(s)];
      const SparseStep& step = trace.steps[t - 1];
      EXPECT_EQ(step.denominator, 1u << t);
      EXPECT_EQ(step.support(), std::min<std::size_t>(1u << t, oracle.size()));
      ASSERT_EQ(step.support(), oracle.size());
      std::size_t k = 0;
      for (const auto& [token, count] : oracle) {
        EXPECT_EQ(step.index[k], token);
        EXPECT_EQ(step.count[k], count);
        ++k;
      }
      const auto dense = step.dense(tokens.vocabulary().size());
      double total = 0.0;
      for (double p : dense.probs()) total += p;
      EXPECT_NEAR(total, 1.0, 1e-15);
    }
    EXPECT_EQ(tokens.sum_value(trace.answer_token()), brute_force_mnns(d).sum);
    const auto path = mnns_path(inst, tokens);
    EXPECT_EQ(path.back(), trace.answer_token());
  }
}

GraphInstance make_graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges,
                         std::size_t hops, std::size_t target) {
  GraphInstance g;
  g.kind = GraphKind::ProntoQA;
  g.concept_count = n;
  g.edges = std::move(edges);
  g.root = 0;
  g.targets = {target};
  g.hops = hops;
  return g;
}

TEST(GraphSupervision, ChainCollapseAndDiamond) {
  const GraphTokens tokens(19);
  const std::size_t v = tokens.vocabulary().size();
  // Chain A -> B -> C.
  auto chain = graph_supervision(make_graph(3, {{0, 1}, {1, 2}}, 2, 2), tokens);
  EXPECT_EQ(chain.steps[0], SparseStep::one_hot(tokens.concept_token(1)));
  EXPECT_EQ(chain.steps[1], SparseStep::one_hot(tokens.concept_token(2)));
  EXPECT_EQ(chain.answer_token(), tokens.true_token());
  // Two paths that meet at D.
  auto meet = graph_supervision(make_graph(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}}, 2, 3), tokens);
  EXPECT_EQ(meet.steps[1].dense(v)[tokens.concept_token(3)], 1.0);
  EXPECT_EQ(meet.steps[1].denominator, 2u);
  // Split into D and E.
  auto split = graph_supervision(make_graph(5, {{0, 1}, {0, 2}, {1, 3}, {2, 4}}, 2, 3), tokens);
  EXPECT_EQ(split.steps[1].dense(v)[tokens.concept_token(3)], 0.5);
  EXPECT_EQ(split.steps[1].dense(v)[tokens.concept_token(4)], 0.5);
}

TEST(GraphSupervision, NoWalkOfHopLengthIsGenerationError) {
  const GraphTokens tokens(19);
  EXPECT_THROW(graph_supervision(make_graph(3, {{0, 1}}, 2, 1), tokens), GenerationError);
}

TEST(GraphSupervision, MatchesExplicitPathEnumeration) {
  const GraphTokens tokens(19);
  Stream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 10;
    const std::size_t hops = 1 + rng() % 4;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b && rng.uniform() < 0.3) edges.emplace_back(a, b);
    edges.emplace_back(0, 1);
    edges.emplace_back(1, 0);
    const auto g = make_graph(n, edges, hops, n - 1);
    // Depth-first enumeration of explicit paths.
    std::vector<std::map<std::size_t, std::uint64_t>> paths(hops + 1);
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t node, std::size_t depth) {
      if (depth > 0) ++paths[depth][node];
      if (depth == hops) return;
      for (const auto& [a, b] : edges)
        if (a == node) dfs(b, depth + 1);
    };
    dfs(0, 0);
    const auto trace = graph_supervision(g, tokens);
    for (std::size_t t = 1; t <= hops; ++t) {
      std::uint64_t total = 0;
      for (const auto& [node, c] : paths[t]) total += c;
      const auto dense = trace.steps[t - 1].dense(tokens.vocabulary().size());
      for (std::size_t node = 0; node < n; ++node) {
        const double expected = paths[t].contains(node)
                                    ? static_cast<double>(paths[t].at(node)) / static_cast<double>(total)
                                    : 0.0;
        EXPECT_NEAR(dense[tokens.concept_token(node)], expected, 1e-15);
      }
    }
  }
}

TEST(GraphGenerator, InstancesAreWellFormed) {
  const GraphTokens tokens(19);
  for (GraphKind kind : {GraphKind::ProsQA, GraphKind::ProntoQA}) {
    for (std::uint64_t i = 0; i < 300; ++i) {
      Stream rng(4, {i});
      const auto g = generate_graph(kind, {}, 19, rng);
      const auto trace = graph_supervision(g, tokens);
      EXPECT_EQ(trace.length(), 6u);
      const auto path = graph_path(g, tokens);
      ASSERT_EQ(path.size(), 6u);
      EXPECT_EQ(path.back(), trace.answer_token());
      // Each path node must carry mass at its step.
      for (std::size_t t = 0; t < 5; ++t) {
        EXPECT_GT(trace.steps[t].dense(tokens.vocabulary().size())[path[t]], 0.0);
      }
      if (kind == GraphKind::ProsQA) {
        EXPECT_NE(reachable_in_hops(g, g.targets[0]), reachable_in_hops(g, g.targets[1]));
        EXPECT_EQ(path[4], trace.answer_token());
      }
      const auto prompt = graph_prompt(g, tokens);
      EXPECT_EQ(prompt.front(), tokens.token("Description"));
      EXPECT_EQ(prompt.back(), tokens.token("Steps"));
    }
  }
}

TEST(Datasets, MnnsCountsSplitAndDeterminism) {
  MnnsGenConfig cfg;
  cfg.seed = 7;
  const Dataset data = gen_mnns(cfg);
  EXPECT_EQ(data.train.size() + data.val.size(), 6561u);
  EXPECT_EQ(data.vocabulary.size(), 85u);
  std::set<std::string> train_keys, val_keys;
  for (const auto& e : data.train) train_keys.insert(e.split_key);
  for (const auto& e : data.val) val_keys.insert(e.split_key);
  for (const auto& k : val_keys) EXPECT_FALSE(train_keys.contains(k));
  const double groups = static_cast<double>(train_keys.size() + val_keys.size());
  EXPECT_LE(std::abs(static_cast<double>(train_keys.size()) - 0.8 * groups), 1.0);
  const Dataset again = gen_mnns(cfg);
  EXPECT_EQ(again.train, data.train);
  EXPECT_EQ(again.val, data.val);
}

TEST(Datasets, PermutationsShareASide) {
  MnnsGenConfig cfg;
  cfg.digits = 3;
  cfg.seed = 11;
  const Dataset data = gen_mnns(cfg);
  std::size_t in_train = 0, in_val = 0;
  for (const auto& e : data.train) in_train += e.split_key == "1-2-4";
  for (const auto& e : data.val) in_val += e.split_key == "1-2-4";
  EXPECT_EQ(in_train + in_val, 6u);
  EXPECT_TRUE(in_train == 0 || in_val == 0);
}

TEST(Datasets, RatioOneLeavesValidationEmpty) {
  MnnsGenConfig cfg;
  cfg.digits = 2;
  cfg.train_ratio = 1.0;
  const Dataset data = gen_mnns(cfg);
  EXPECT_TRUE(data.val.empty());
  EXPECT_EQ(data.train.size(), 81u);
}

TEST(Datasets, ProntoQaLabelsBalanced) {
  GraphGenConfig cfg;
  cfg.count = 10000;
  cfg.seed = 5;
  const Dataset data = gen_graph_task(GraphKind::ProntoQA, cfg);
  const GraphTokens tokens(19);
  std::size_t yes = 0, total = 0;
  for (const auto* side : {&data.train, &data.val})
    for (const auto& e : *side) {
      yes += e.answer() == tokens.true_token();
      ++total;
    }
  EXPECT_EQ(total, 10000u);
  EXPECT_NEAR(static_cast<double>(yes) / static_cast<double>(total), 0.5, 0.02);
  EXPECT_EQ(data.vocabulary.size(), 31u);
}

TEST(Datasets, ProsQaAnswerPositionBalanced) {
  GraphGenConfig cfg;
  cfg.count = 4000;
  cfg.seed = 6;
  const Dataset data = gen_graph_task(GraphKind::ProsQA, cfg);
  std::size_t first = 0, total = 0;
  for (const auto* side : {&data.train, &data.val})
    for (const auto& e : *side) {
      // Question block ends: ... root in X or Y } Steps
      const std::size_t n = e.prompt.size();
      first += e.prompt[n - 5] == e.answer();
      ++total;
    }
  EXPECT_NEAR(static_cast<double>(first) / static_cast<double>(total), 0.5, 0.03);
}

TEST(Datasets, RoundTripThroughFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "cot2_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  GraphGenConfig cfg;
  cfg.count = 50;
  const Dataset data = gen_graph_task(GraphKind::ProsQA, cfg);
  write_dataset(dir, data);
  const Dataset back = read_dataset(dir);
  EXPECT_EQ(back.vocabulary, data.vocabulary);
  EXPECT_EQ(back.steps, data.steps);
  EXPECT_EQ(back.train, data.train);
  EXPECT_EQ(back.val, data.val);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_dataset(dir), MissingInputError);
}

}  // namespace
}  // namespace cot2::tasks
