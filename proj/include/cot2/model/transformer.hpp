#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cot2/common/simplex.hpp"
#include "cot2/model/params.hpp"
#include "cot2/tensor/tape.hpp"

namespace cot2::model {

/// Parameters placed on a tape. With a gradient buffer every parameter
/// accumulates its adjoint there on backward; without one nothing is tracked.
struct BoundParams {
  struct Block {
    tensor::Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo;
    tensor::Var ln2_gain, ln2_bias, w_up, b_up, w_down, b_down;
  };
  const LmParams* params = nullptr;
  tensor::Var token_embedding, position_embedding;
  std::vector<Block> blocks;
  tensor::Var lnf_gain, lnf_bias, head;
  /// Output projection (d x v): E^T when tied.
  tensor::Var output;
};

BoundParams bind(tensor::Tape& tape, const LmParams& params, LmParams* grads);

/// A prefix: discrete prompt tokens followed by continuous tokens, each given
/// by its weights over the vocabulary (rows of a T_c x v matrix). A one-hot
/// row is exactly the discrete embedding row.
struct Prefix {
  std::vector<std::size_t> tokens;
  std::vector<std::vector<double>> continuous;

  std::size_t length() const { return tokens.size() + continuous.size(); }
};

/// Logits (T x v) for every position of `tokens` followed by `mix` rows
/// (weights over the vocabulary, may be invalid for none). Position t attends
/// to positions <= t only.
tensor::Var forward_logits(const BoundParams& p,
                           std::span<const std::size_t> tokens,
                           tensor::Var mix);

/// Softmax of the last position's logits.
TokenDistribution next_distribution(const LmParams& params, const Prefix& prefix);

/// Next-token distributions at every position of the prefix.
std::vector<TokenDistribution> all_distributions(const LmParams& params,
                                                 const Prefix& prefix);

/// z = E^T alpha. Zero weights are skipped so a one-hot alpha returns the
/// embedding row bit for bit. Throws InvariantError off the simplex.
std::vector<double> continuous_token(const TokenDistribution& alpha,
                                     const tensor::Tensor& embedding);

/// Temperature rescales log alpha; thresholding then zeroes entries below the
/// threshold and renormalizes. If nothing survives, the argmax one-hot is
/// returned. Identity for temperature 1 and threshold 0.
TokenDistribution transform_alpha(const TokenDistribution& alpha,
                                  double temperature, double threshold);

}  // namespace cot2::model
