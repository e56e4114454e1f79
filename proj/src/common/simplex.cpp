#include "cot2/common/simplex.hpp"

#include <cmath>
#include <sstream>

#include "cot2/common/error.hpp"

namespace cot2 {

void check_simplex(std::span<const double> probs, double tolerance) {
  if (probs.empty()) {
    throw InvariantError("simplex: empty distribution");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!std::isfinite(p) || p < -tolerance) {
      std::ostringstream msg;
      msg << "simplex: entry " << i << " = " << p << " is not a probability";
      throw InvariantError(msg.str());
    }
    total += p;
  }
  if (std::abs(total - 1.0) > tolerance) {
    std::ostringstream msg;
    msg << "simplex: mass " << total << " differs from 1 by more than "
        << tolerance;
    throw InvariantError(msg.str());
  }
}

TokenDistribution::TokenDistribution(std::vector<double> probs, double tolerance)
    : probs_(std::move(probs)) {
  check_simplex(probs_, tolerance);
}

TokenDistribution TokenDistribution::one_hot(std::size_t size,
                                             std::size_t index) {
  if (index >= size) {
    throw UsageError("one_hot: index out of range");
  }
  std::vector<double> p(size, 0.0);
  p[index] = 1.0;
  return TokenDistribution(std::move(p));
}

TokenDistribution TokenDistribution::uniform(std::size_t size) {
  return TokenDistribution(
      std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

std::size_t TokenDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) {
      best = i;
    }
  }
  return best;
}

bool TokenDistribution::is_one_hot() const {
  std::size_t ones = 0;
  for (double p : probs_) {
    if (p == 1.0) {
      ++ones;
    } else if (p != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) {
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace cot2
