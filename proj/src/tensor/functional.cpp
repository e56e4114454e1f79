#include "cot2/tensor/functional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cot2/common/error.hpp"
#include "cot2/tensor/ops.hpp"

namespace cot2::tensor {

TokenDistribution softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw UsageError("softmax: temperature must be positive");
  }
  if (logits.empty()) {
    throw UsageError("softmax: empty logits");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) {
      throw NumericError("softmax: non-finite logit");
    }
    mx = std::max(mx, v);
  }
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    z += p[i];
  }
  for (double& x : p) {
    x /= z;
  }
  return TokenDistribution(std::move(p));
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) {
      throw NumericError("log_softmax: non-finite logit");
    }
    mx = std::max(mx, v);
  }
  double z = 0.0;
  for (double v : logits) {
    z += std::exp(v - mx);
  }
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] - lse;
  }
  return out;
}

double soft_cross_entropy(const TokenDistribution& target,
                          const TokenDistribution& predicted) {
  if (target.size() != predicted.size()) {
    throw DimensionError("soft_cross_entropy: size mismatch");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != 0.0) {
      loss -= target[i] * std::log(std::max(predicted[i], kProbabilityFloor));
    }
  }
  return loss;
}

double kl_divergence(const TokenDistribution& p, const TokenDistribution& q) {
  return soft_cross_entropy(p, q) - entropy(p.probs());
}

}  // namespace cot2::tensor
