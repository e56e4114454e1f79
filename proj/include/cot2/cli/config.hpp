#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cot2/construction/construction.hpp"
#include "cot2/decoding/decoders.hpp"
#include "cot2/grpo/grpo.hpp"
#include "cot2/tasks/dataset.hpp"
#include "cot2/theory/theory.hpp"
#include "cot2/training/trainer.hpp"

namespace cot2::cli {

struct TaskSection {
  tasks::TaskKind kind = tasks::TaskKind::Mnns;
  tasks::MnnsGenConfig mnns{.digits = 3, .min_digit = 1, .max_digit = 5};
  tasks::GraphGenConfig graph;
};

struct ModelSection {
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t dim = 24;
  /// 0 sizes the context to the longest prompt plus the generated steps.
  std::size_t context = 0;
};

struct EvalSection {
  /// accuracy, pass@k, maj@k or entropy.
  std::string metric = "accuracy";
  std::string split = "val";
  decoding::DecoderSpec decoder;
  std::vector<std::size_t> ks{1, 2, 4, 8};
  std::size_t runs = 10;
};

struct ConstructSection {
  std::size_t n = 4;
  int min_digit = 1;
  int max_digit = 9;
  construction::Hardness mode = construction::Hardness::Exact;
  double c = 50.0;
  /// 0 enumerates every input; otherwise a seeded random sample of this size.
  std::size_t max_inputs = 0;
};

struct TheorySection {
  /// "random" for a Dirichlet(1) chain, "mnns" for the chain of `digits`.
  std::string chain = "random";
  std::size_t v = 10;
  std::size_t m = 4;
  std::vector<int> digits{2, 1, 4};
  theory::ScalingConfig scaling;
  /// Random chains checked for discrete-trace consistency (0 skips).
  std::size_t consistency_chains = 20;
  std::size_t consistency_traces = 200000;
};

struct ReportSection {
  /// Run directories whose outputs are collected.
  std::vector<std::string> runs;
};

/// AdamW at 1e-4 without weight decay, batch 16.
inline training::TrainConfig default_train() {
  training::TrainConfig t;
  t.optimizer.learning_rate = 1e-4;
  t.batch_size = 16;
  t.epochs = 100;
  return t;
}

/// Fully resolved configuration of one CLI run. Section seeds are not
/// configurable separately: every module is seeded from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  TaskSection task;
  ModelSection model;
  training::TrainConfig train = default_train();
  grpo::GrpoConfig grpo;
  EvalSection eval;
  ConstructSection construct;
  TheorySection theory;
  ReportSection report;
};

/// Parses a config document over the defaults. Unknown keys, wrong types and
/// out-of-range values throw ConfigError naming the offending key.
RunConfig parse_config(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);

/// Reads a config file, or the resolved config stored in a run manifest (whose
/// recorded input paths go to `inputs` when given).
nlohmann::json read_config_document(const std::string& path, nlohmann::json* inputs = nullptr);

}  // namespace cot2::cli
