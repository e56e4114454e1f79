#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cot2/tasks/graph.hpp"
#include "cot2/tasks/supervision.hpp"
#include "cot2/tasks/vocabulary.hpp"

namespace cot2::tasks {

enum class TaskKind { Mnns, ProsQA, ProntoQA };

const char* task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

/// One training or evaluation record.
struct Example {
  std::vector<std::size_t> prompt;
  SupervisionTrace trace;
  /// Discrete target tokens, one per step; the last is the answer.
  std::vector<std::size_t> path;
  /// Grouping key for the split: the sorted digit multiset for MNNS, the
  /// instance id for graph tasks.
  std::string split_key;
  std::vector<int> digits;

  std::size_t answer() const { return path.back(); }
  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  TaskKind task = TaskKind::Mnns;
  Vocabulary vocabulary;
  /// Reasoning steps m per example.
  std::size_t steps = 0;
  std::vector<Example> train;
  std::vector<Example> val;

  std::size_t max_prompt_length() const;
};

/// Splits by split_key groups: the sorted distinct keys are shuffled with
/// `seed` and the first round(ratio * groups) go to train. Example order
/// within each side follows the input.
std::pair<std::vector<Example>, std::vector<Example>> split_dataset(
    const std::vector<Example>& examples, double ratio, std::uint64_t seed);

struct MnnsGenConfig {
  int digits = 4;
  int min_digit = 1;
  int max_digit = 9;
  double train_ratio = 0.8;
  /// 0 keeps every sequence in the digit range; otherwise a seeded subsample.
  std::size_t max_instances = 0;
  std::uint64_t seed = 0;
};

/// Every digit sequence (min..max)^m in lexicographic order, split by multiset.
Dataset gen_mnns(const MnnsGenConfig& config);

struct GraphGenConfig {
  std::size_t count = 1000;
  std::size_t concept_count = 19;
  GraphGeneratorConfig graph;
  double train_ratio = 0.8;
  std::uint64_t seed = 0;
};

/// Instance i draws from the stream keyed by (seed, i), so generation order
/// does not affect the result. Undecidable draws are resampled.
Dataset gen_graph_task(GraphKind kind, const GraphGenConfig& config);

/// Writes dataset.json (task, vocabulary, steps) plus train.jsonl and
/// val.jsonl into `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace cot2::tasks
