#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cot2/model/config.hpp"
#include "cot2/tensor/tensor.hpp"

namespace cot2::model {

struct BlockParams {
  tensor::Tensor ln1_gain, ln1_bias;
  tensor::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  tensor::Tensor ln2_gain, ln2_bias;
  tensor::Tensor w_up, b_up, w_down, b_down;
};

/// All trainable arrays of the decoder. Shapes follow ModelConfig.
struct LmParams {
  ModelConfig config;
  tensor::Tensor token_embedding;     // v x d
  tensor::Tensor position_embedding;  // context x d
  std::vector<BlockParams> blocks;
  tensor::Tensor lnf_gain, lnf_bias;
  tensor::Tensor head;  // d x v when untied, empty otherwise

  /// normal(0, 0.02) weights, unit layer-norm gains, zero biases, drawn from
  /// the stream keyed by config.seed.
  static LmParams init(const ModelConfig& config);
  /// Same shapes, every entry zero (gradient buffers).
  static LmParams zeros_like(const LmParams& other);

  /// Stable (name, tensor) enumeration used by optimizers and checkpoints.
  std::vector<std::pair<std::string, tensor::Tensor*>> named();
  std::vector<std::pair<std::string, const tensor::Tensor*>> named() const;

  std::size_t parameter_count() const;
  void fill(double value);
  /// this += scale * other (same shapes).
  void axpy(double scale, const LmParams& other);
  bool all_finite() const;
};

}  // namespace cot2::model
