#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cot2/common/rng.hpp"
#include "cot2/common/simplex.hpp"
#include "cot2/model/params.hpp"

namespace cot2::decoding {

enum class Sampler { Cot2, Discrete, Mts };

const char* sampler_name(Sampler s);
Sampler parse_sampler(const std::string& name);

/// How tokens are produced at each of the m steps.
struct DecoderSpec {
  Sampler sampler = Sampler::Cot2;
  /// Draws per step for MTS.
  std::size_t k = 1;
  /// Sampling temperature for discrete draws (0 means argmax). Base CoT2
  /// uses it only for the final token.
  double temperature = 0.0;
  /// Transform applied to alpha before it is fed back (base CoT2 only).
  double alpha_temperature = 1.0;
  double alpha_threshold = 0.0;
};

struct DecodeResult {
  /// Raw next-token distributions alpha_1..alpha_m.
  std::vector<TokenDistribution> alphas;
  /// Tokens drawn at each step (empty for base CoT2 steps t < m).
  std::vector<std::vector<std::size_t>> emitted;
  /// Weights over the vocabulary fed back after steps 1..m-1.
  std::vector<std::vector<double>> fed;
  std::size_t answer = 0;
  /// Entropy of each raw alpha_t in nats.
  std::vector<double> entropy;
};

/// Feeds z_t = E^T alpha_t (after the optional alpha transform) for t < m;
/// the answer is argmax alpha_m, or a draw at `final_temperature` when it is
/// positive.
DecodeResult base_cot2_decode(const model::LmParams& params,
                              std::span<const std::size_t> prompt,
                              std::size_t steps, const DecoderSpec& spec,
                              Stream* rng = nullptr);

/// One token per step drawn from alpha_t at `temperature` (argmax at 0) and
/// fed back as its embedding row.
DecodeResult discrete_cot_decode(const model::LmParams& params,
                                 std::span<const std::size_t> prompt,
                                 std::size_t steps, double temperature,
                                 Stream& rng);

/// K i.i.d. draws (with replacement) per step t < m, fed back as the average
/// of their embeddings; one draw at the final step. Every draw consumes one
/// uniform, so K = 1 reproduces discrete_cot_decode on the same stream.
DecodeResult mts_decode(const model::LmParams& params,
                        std::span<const std::size_t> prompt, std::size_t steps,
                        std::size_t k, Stream& rng, double temperature = 1.0);

DecodeResult decode(const model::LmParams& params,
                    std::span<const std::size_t> prompt, std::size_t steps,
                    const DecoderSpec& spec, Stream& rng);

/// Weights over the vocabulary of the average of the drawn tokens' embeddings:
/// count / K per token. When every draw is j the row is exactly one-hot.
std::vector<double> average_draws(std::span<const std::size_t> draws,
                                  std::size_t vocab_size);

/// Draw from alpha at `temperature`; argmax when temperature is 0.
std::size_t draw_token(const TokenDistribution& alpha, double temperature,
                       Stream& rng);

}  // namespace cot2::decoding
