#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cot2/decoding/decoders.hpp"
#include "cot2/tasks/dataset.hpp"

namespace cot2::decoding {

struct MetricPoint {
  std::size_t k = 1;
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
};

/// Fraction of examples whose decoded answer is correct. Instance i uses the
/// stream keyed by (seed, i).
double accuracy(const model::LmParams& params,
                const std::vector<tasks::Example>& examples, std::size_t steps,
                const DecoderSpec& spec, std::uint64_t seed = 0);

/// Answers of k_max independent decodes per example and run. Sample s of
/// example i in run r draws from the stream keyed by (seed, r, i, s).
std::vector<std::vector<std::vector<std::size_t>>> sample_answers(
    const model::LmParams& params, const std::vector<tasks::Example>& examples,
    std::size_t steps, const DecoderSpec& spec, std::size_t k_max,
    std::size_t runs, std::uint64_t seed);

/// Solved if any of the first k samples is correct; mean and population std
/// of the per-run accuracy, for every k in `ks`.
std::vector<MetricPoint> pass_at_k(const model::LmParams& params,
                                   const std::vector<tasks::Example>& examples,
                                   std::size_t steps, const DecoderSpec& spec,
                                   const std::vector<std::size_t>& ks,
                                   std::size_t runs, std::uint64_t seed);

/// Solved if the plurality answer among the first k samples is correct; ties
/// are broken uniformly at random with a stream separate from the samples.
std::vector<MetricPoint> maj_at_k(const model::LmParams& params,
                                  const std::vector<tasks::Example>& examples,
                                  std::size_t steps, const DecoderSpec& spec,
                                  const std::vector<std::size_t>& ks,
                                  std::size_t runs, std::uint64_t seed);

/// Plurality vote over `votes`; ties resolved by one uniform draw from `rng`
/// among the tied answers in ascending token order.
std::size_t majority_vote(const std::vector<std::size_t>& votes, Stream& rng);

/// Entropy of alpha in nats, 0 ln 0 = 0.
double step_entropy(const TokenDistribution& alpha);

/// Mean entropy of each step's raw alpha over the examples.
std::vector<double> mean_step_entropy(const model::LmParams& params,
                                      const std::vector<tasks::Example>& examples,
                                      std::size_t steps, const DecoderSpec& spec,
                                      std::uint64_t seed = 0);

}  // namespace cot2::decoding
