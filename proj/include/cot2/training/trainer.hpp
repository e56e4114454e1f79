#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "cot2/decoding/decoders.hpp"
#include "cot2/model/params.hpp"
#include "cot2/tasks/dataset.hpp"
#include "cot2/training/losses.hpp"
#include "cot2/training/optimizer.hpp"

namespace cot2::training {

enum class Objective { Sft, Csft, SparseSft };

struct TrainConfig {
  Objective objective = Objective::Csft;
  AdamWConfig optimizer;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  PrefixOptions prefix;
  /// When nonzero, epochs from this one on (1-based) use self-feeding.
  std::size_t self_feed_from_epoch = 0;
  /// 1-based supervised steps for SparseSft (the final step is implied).
  std::vector<std::size_t> supervised_positions;
  /// Decoder for validation accuracy; by default base CoT2 for CSFT and greedy
  /// discrete decoding for SFT, both with argmax answers.
  std::optional<decoding::DecoderSpec> eval_decoder;
  /// Validate every this many epochs (always after the last).
  std::size_t eval_every = 1;
  std::uint64_t seed = 0;
  /// Where a checkpoint is written if the loss turns non-finite.
  std::optional<std::filesystem::path> snapshot_dir;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// NaN for epochs that were not validated.
  double val_accuracy = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  model::LmParams params;
  std::vector<EpochMetrics> log;
  std::size_t steps = 0;
  /// Parameters at the epoch with the best validation accuracy.
  model::LmParams best_params;
  double best_val_accuracy = 0.0;
};

decoding::DecoderSpec default_eval_decoder(Objective objective);

/// Mean over the batch of the configured per-example loss, and its gradient
/// accumulated into `grads` (reset first). Examples run in parallel with one
/// gradient buffer each, reduced in example order.
double batch_gradient(const model::LmParams& params,
                      const std::vector<const tasks::Example*>& batch,
                      Objective objective, const PrefixOptions& prefix,
                      const std::vector<std::size_t>& supervised_positions,
                      model::LmParams& grads);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Shuffled mini-batch AdamW training. Each epoch's order comes from the
/// stream keyed by (seed, epoch). Throws NumericError on a non-finite loss
/// after writing a snapshot when snapshot_dir is set.
TrainResult train(model::LmParams params, const tasks::Dataset& data,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace cot2::training
