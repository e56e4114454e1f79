#pragma once

#include <cstddef>

#include "cot2/model/params.hpp"

namespace cot2::training {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay applied to every parameter.
class AdamW {
 public:
  AdamW(const model::LmParams& like, AdamWConfig config);

  void step(model::LmParams& params, const model::LmParams& grads);
  std::size_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  model::LmParams m_, v_;
  std::size_t t_ = 0;
};

}  // namespace cot2::training
