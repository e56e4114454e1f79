#include "cot2/decoding/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cot2/common/error.hpp"
#include "cot2/model/transformer.hpp"

namespace cot2::decoding {
namespace {

model::Prefix start(const model::LmParams& params,
                    std::span<const std::size_t> prompt, std::size_t steps) {
  if (steps == 0) {
    throw UsageError("decode: at least one step is required");
  }
  params.config.require_fits(prompt.size(), steps - 1);
  return model::Prefix{{prompt.begin(), prompt.end()}, {}};
}

void record_alpha(DecodeResult& out, TokenDistribution alpha) {
  out.entropy.push_back(entropy(alpha.probs()));
  out.alphas.push_back(std::move(alpha));
}

}  // namespace

const char* sampler_name(Sampler s) {
  switch (s) {
    case Sampler::Cot2: return "cot2";
    case Sampler::Discrete: return "discrete";
    case Sampler::Mts: return "mts";
  }
  return "unknown";
}

Sampler parse_sampler(const std::string& name) {
  if (name == "cot2") return Sampler::Cot2;
  if (name == "discrete") return Sampler::Discrete;
  if (name == "mts") return Sampler::Mts;
  throw ConfigError("unknown sampler '" + name + "'");
}

std::vector<double> average_draws(std::span<const std::size_t> draws,
                                  std::size_t vocab_size) {
  if (draws.empty()) {
    throw UsageError("average_draws: no draws");
  }
  std::vector<double> row(vocab_size, 0.0);
  for (std::size_t d : draws) {
    if (d >= vocab_size) throw VocabularyError("average_draws: token outside vocabulary");
    row[d] += 1.0;
  }
  for (double& w : row) w /= static_cast<double>(draws.size());
  return row;
}

std::size_t draw_token(const TokenDistribution& alpha, double temperature,
                       Stream& rng) {
  if (temperature < 0.0) {
    throw UsageError("decode: temperature must be nonnegative");
  }
  if (temperature == 0.0) {
    return alpha.argmax();
  }
  if (temperature == 1.0) {
    return sample_categorical(alpha.probs(), rng);
  }
  std::vector<double> p(alpha.size());
  double mx = 0.0;
  for (double a : alpha.probs()) mx = std::max(mx, a);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = alpha[i] > 0.0 ? std::exp((std::log(alpha[i]) - std::log(mx)) / temperature) : 0.0;
  }
  return sample_categorical(p, rng);
}

DecodeResult base_cot2_decode(const model::LmParams& params,
                              std::span<const std::size_t> prompt,
                              std::size_t steps, const DecoderSpec& spec,
                              Stream* rng) {
  model::Prefix prefix = start(params, prompt, steps);
  DecodeResult out;
  for (std::size_t t = 0; t < steps; ++t) {
    TokenDistribution alpha = model::next_distribution(params, prefix);
    if (t + 1 < steps) {
      const TokenDistribution fed =
          model::transform_alpha(alpha, spec.alpha_temperature, spec.alpha_threshold);
      prefix.continuous.push_back(fed.vector());
      out.fed.push_back(fed.vector());
      out.emitted.emplace_back();
    } else {
      std::size_t answer = alpha.argmax();
      if (spec.temperature > 0.0) {
        if (rng == nullptr) {
          throw UsageError("base_cot2_decode: sampling the answer needs a stream");
        }
        answer = draw_token(alpha, spec.temperature, *rng);
      }
      out.answer = answer;
      out.emitted.push_back({answer});
    }
    record_alpha(out, std::move(alpha));
  }
  return out;
}

DecodeResult discrete_cot_decode(const model::LmParams& params,
                                 std::span<const std::size_t> prompt,
                                 std::size_t steps, double temperature,
                                 Stream& rng) {
  model::Prefix prefix = start(params, prompt, steps);
  DecodeResult out;
  for (std::size_t t = 0; t < steps; ++t) {
    TokenDistribution alpha = model::next_distribution(params, prefix);
    const std::size_t token = draw_token(alpha, temperature, rng);
    out.emitted.push_back({token});
    if (t + 1 < steps) {
      std::vector<double> row(alpha.size(), 0.0);
      row[token] = 1.0;
      prefix.continuous.push_back(row);
      out.fed.push_back(std::move(row));
    } else {
      out.answer = token;
    }
    record_alpha(out, std::move(alpha));
  }
  return out;
}

DecodeResult mts_decode(const model::LmParams& params,
                        std::span<const std::size_t> prompt, std::size_t steps,
                        std::size_t k, Stream& rng, double temperature) {
  if (k == 0) {
    throw UsageError("mts_decode: K must be at least 1");
  }
  if (k > params.config.vocab) {
    throw UsageError("mts_decode: K exceeds the vocabulary size");
  }
  model::Prefix prefix = start(params, prompt, steps);
  DecodeResult out;
  for (std::size_t t = 0; t < steps; ++t) {
    TokenDistribution alpha = model::next_distribution(params, prefix);
    if (t + 1 < steps) {
      std::vector<std::size_t> draws(k);
      for (std::size_t r = 0; r < k; ++r) {
        draws[r] = draw_token(alpha, temperature, rng);
      }
      std::vector<double> row = average_draws(draws, alpha.size());
      prefix.continuous.push_back(row);
      out.fed.push_back(std::move(row));
      out.emitted.push_back(std::move(draws));
    } else {
      out.answer = draw_token(alpha, temperature, rng);
      out.emitted.push_back({out.answer});
    }
    record_alpha(out, std::move(alpha));
  }
  return out;
}

DecodeResult decode(const model::LmParams& params,
                    std::span<const std::size_t> prompt, std::size_t steps,
                    const DecoderSpec& spec, Stream& rng) {
  switch (spec.sampler) {
    case Sampler::Cot2:
      return base_cot2_decode(params, prompt, steps, spec, &rng);
    case Sampler::Discrete:
      return discrete_cot_decode(params, prompt, steps, spec.temperature, rng);
    case Sampler::Mts:
      return mts_decode(params, prompt, steps, spec.k, rng, spec.temperature);
  }
  throw UsageError("decode: unknown sampler");
}

}  // namespace cot2::decoding
