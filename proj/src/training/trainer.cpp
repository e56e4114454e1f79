#include "cot2/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "cot2/common/error.hpp"
#include "cot2/common/parallel.hpp"
#include "cot2/decoding/metrics.hpp"
#include "cot2/model/checkpoint.hpp"
#include "cot2/model/transformer.hpp"

namespace cot2::training {
namespace {

constexpr std::uint64_t kShuffleKey = 0x5a0f;

tensor::Var example_loss(const model::BoundParams& p, const tasks::Example& e,
                         Objective objective, const PrefixOptions& prefix,
                         const std::vector<std::size_t>& positions) {
  switch (objective) {
    case Objective::Csft: return csft_loss(p, e, prefix);
    case Objective::Sft: return sft_loss(p, e);
    case Objective::SparseSft: return sparse_sft_loss(p, e, positions);
  }
  throw UsageError("train: unknown objective");
}

}  // namespace

decoding::DecoderSpec default_eval_decoder(Objective objective) {
  decoding::DecoderSpec spec;
  spec.sampler = objective == Objective::Csft ? decoding::Sampler::Cot2
                                              : decoding::Sampler::Discrete;
  spec.temperature = 0.0;
  return spec;
}

double batch_gradient(const model::LmParams& params,
                      const std::vector<const tasks::Example*>& batch,
                      Objective objective, const PrefixOptions& prefix,
                      const std::vector<std::size_t>& positions,
                      model::LmParams& grads) {
  grads.fill(0.0);
  if (batch.empty()) return 0.0;
  std::vector<model::LmParams> partial(batch.size(), model::LmParams::zeros_like(params));
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    tensor::Tape tape;
    const model::BoundParams p = model::bind(tape, params, &partial[i]);
    tensor::Var loss = example_loss(p, *batch[i], objective, prefix, positions);
    tape.backward(loss);
    losses[i] = loss.value()[0];
  });
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grads.axpy(scale, partial[i]);
    total += losses[i];
  }
  return total * scale;
}

TrainResult train(model::LmParams params, const tasks::Dataset& data,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  if (config.batch_size == 0) {
    throw ConfigError("train: batch size must be positive");
  }
  if (!(config.optimizer.learning_rate >= 0.0)) {
    throw ConfigError("train: learning rate must be nonnegative");
  }
  if (data.train.empty()) {
    throw DataError("train: empty training split");
  }
  params.config.require_fits(data.max_prompt_length(), data.steps - 1);
  const decoding::DecoderSpec eval_spec =
      config.eval_decoder.value_or(default_eval_decoder(config.objective));
  const auto start = std::chrono::steady_clock::now();

  AdamW optimizer(params, config.optimizer);
  model::LmParams grads = model::LmParams::zeros_like(params);
  TrainResult result;
  result.best_params = params;
  result.best_val_accuracy = -1.0;
  std::vector<std::size_t> order(data.train.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    PrefixOptions prefix = config.prefix;
    if (config.self_feed_from_epoch != 0 && epoch >= config.self_feed_from_epoch) {
      prefix.regime = PrefixRegime::SelfFeeding;
    }
    std::iota(order.begin(), order.end(), 0);
    Stream rng(config.seed, {kShuffleKey, epoch});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(i)));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const tasks::Example*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(&data.train[order[i]]);
      }
      double loss = std::numeric_limits<double>::quiet_NaN();
      try {
        loss = batch_gradient(params, batch, config.objective, prefix, config.supervised_positions,
                              grads);
      } catch (const NumericError&) {
        // a non-finite activation inside the forward pass
      }
      if (!std::isfinite(loss) || !grads.all_finite()) {
        if (config.snapshot_dir) {
          model::Checkpoint snap{params, result.steps,
                                 {{"reason", "non-finite loss"},
                                  {"epoch", epoch},
                                  {"batch_start", b},
                                  {"loss", std::isfinite(loss) ? loss : -1.0}}};
          model::save_checkpoint(*config.snapshot_dir / "nan_snapshot.json", snap);
        }
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(result.steps));
      }
      optimizer.step(params, grads);
      ++result.steps;
      loss_sum += loss;
      ++batches;
    }
    EpochMetrics row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(batches);
    row.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    const bool validate = epoch == config.epochs ||
                          (config.eval_every != 0 && epoch % config.eval_every == 0);
    if (validate && !data.val.empty()) {
      row.val_accuracy = decoding::accuracy(params, data.val, data.steps, eval_spec, config.seed);
      if (row.val_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = row.val_accuracy;
        result.best_params = params;
      }
    }
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  if (result.best_val_accuracy < 0.0) {
    result.best_params = params;
    result.best_val_accuracy = 0.0;
  }
  result.params = std::move(params);
  return result;
}

}  // namespace cot2::training
