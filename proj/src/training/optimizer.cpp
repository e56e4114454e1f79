#include "cot2/training/optimizer.hpp"

#include <cmath>

#include "cot2/common/error.hpp"

namespace cot2::training {

AdamW::AdamW(const model::LmParams& like, AdamWConfig config)
    : config_(config),
      m_(model::LmParams::zeros_like(like)),
      v_(model::LmParams::zeros_like(like)) {
  if (config.learning_rate < 0.0 || config.weight_decay < 0.0 || config.eps <= 0.0 ||
      config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
    throw ConfigError("adamw: invalid hyperparameters");
  }
}

void AdamW::step(model::LmParams& params, const model::LmParams& grads) {
  ++t_;
  const double lr = config_.learning_rate;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  auto p = params.named();
  const auto g = grads.named();
  auto m = m_.named();
  auto v = v_.named();
  for (std::size_t k = 0; k < p.size(); ++k) {
    tensor::Tensor& pt = *p[k].second;
    const tensor::Tensor& gt = *g[k].second;
    tensor::Tensor& mt = *m[k].second;
    tensor::Tensor& vt = *v[k].second;
    for (std::size_t i = 0; i < pt.size(); ++i) {
      mt[i] = config_.beta1 * mt[i] + (1.0 - config_.beta1) * gt[i];
      vt[i] = config_.beta2 * vt[i] + (1.0 - config_.beta2) * gt[i] * gt[i];
      const double update = (mt[i] / c1) / (std::sqrt(vt[i] / c2) + config_.eps);
      pt[i] -= lr * (update + config_.weight_decay * pt[i]);
    }
  }
}

}  // namespace cot2::training
