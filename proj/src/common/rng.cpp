#include "cot2/common/rng.hpp"

#include "cot2/common/error.hpp"

namespace cot2 {

Stream::Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
    : state_(mix(seed ^ kSeedSalt)) {
  for (std::uint64_t key : keys) {
    state_ = mix(state_ + kGamma + mix(key + kGamma));
  }
}

Stream Stream::fork(std::uint64_t key) const {
  Stream child(0);
  child.state_ = mix(state_ ^ mix(key + 0x2545f4914f6cdd1dULL));
  return child;
}

std::size_t sample_categorical(std::span<const double> probs, double u) {
  if (probs.empty()) {
    throw UsageError("sample_categorical: empty distribution");
  }
  double total = 0.0;
  for (double p : probs) {
    total += p;
  }
  const double target = u * total;
  double cumulative = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) {
      continue;
    }
    last_positive = i;
    cumulative += probs[i];
    if (target < cumulative) {
      return i;
    }
  }
  if (last_positive == probs.size()) {
    throw NumericError("sample_categorical: distribution has no positive mass");
  }
  // Rounding left target at or past the final cumulative sum.
  return last_positive;
}

}  // namespace cot2
