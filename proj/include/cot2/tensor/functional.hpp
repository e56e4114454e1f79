#pragma once

#include <span>
#include <vector>

#include "cot2/common/simplex.hpp"

namespace cot2::tensor {

/// Stable softmax of logits / temperature (max subtracted first). Throws
/// NumericError for non-finite logits and UsageError for temperature <= 0.
TokenDistribution softmax(std::span<const double> logits,
                          double temperature = 1.0);

std::vector<double> log_softmax(std::span<const double> logits);

/// -sum target_i log max(predicted_i, 1e-12). Both arguments are validated
/// against the simplex (1e-6).
double soft_cross_entropy(const TokenDistribution& target,
                          const TokenDistribution& predicted);

double kl_divergence(const TokenDistribution& p, const TokenDistribution& q);

}  // namespace cot2::tensor
