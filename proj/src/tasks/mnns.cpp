#include "cot2/tasks/mnns.hpp"

#include <limits>
#include <map>

#include "cot2/common/error.hpp"

namespace cot2::tasks {

MnnsSolution brute_force_mnns(std::span<const int> digits) {
  const std::size_t m = digits.size();
  if (m == 0 || m > 20) {
    throw UsageError("brute_force_mnns: need 1 to 20 digits, got " +
                     std::to_string(m));
  }
  int best = std::numeric_limits<int>::max();
  std::uint32_t best_mask = 0;
  // Bit (m-1-i) of the mask is the sign of digit i (0 = +1), so ascending
  // masks visit sign vectors in lexicographic order.
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    int s = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const bool negative = (mask >> (m - 1 - i)) & 1u;
      s += negative ? -digits[i] : digits[i];
    }
    if (s >= 0 && s < best) {
      best = s;
      best_mask = mask;
    }
  }
  if (best == std::numeric_limits<int>::max()) {
    throw DataError("brute_force_mnns: no nonnegative signed sum exists");
  }
  MnnsSolution out;
  out.sum = best;
  for (std::size_t i = 0; i < m; ++i) {
    out.signs.push_back(((best_mask >> (m - 1 - i)) & 1u) ? -1 : 1);
  }
  return out;
}

MnnsInstance MnnsInstance::solve(std::vector<int> digits) {
  MnnsSolution sol = brute_force_mnns(digits);
  return MnnsInstance{std::move(digits), sol.sum, std::move(sol.signs)};
}

MnnsTokens::MnnsTokens(int min_digit, int max_digit, int digits_per_instance)
    : min_digit_(min_digit), max_digit_(max_digit) {
  if (min_digit < 1 || max_digit < min_digit || digits_per_instance < 1) {
    throw ConfigError("mnns: invalid digit range or digit count");
  }
  bound_ = digits_per_instance * max_digit;
  bos_ = vocab_.add("BOS");
  eos_ = vocab_.add("EOS");
  arrow_ = vocab_.add("ARROW");
  first_digit_ = vocab_.size();
  for (int d = min_digit; d <= max_digit; ++d) {
    vocab_.add("D" + std::to_string(d));
  }
  first_sum_ = vocab_.size();
  for (int s = -bound_; s <= bound_; ++s) {
    vocab_.add("S" + std::to_string(s));
  }
}

std::size_t MnnsTokens::digit_token(int digit) const {
  if (digit < min_digit_ || digit > max_digit_) {
    throw VocabularyError("mnns: digit " + std::to_string(digit) +
                          " outside the configured range");
  }
  return first_digit_ + static_cast<std::size_t>(digit - min_digit_);
}

std::size_t MnnsTokens::sum_token(int sum) const {
  if (sum < -bound_ || sum > bound_) {
    throw VocabularyError("mnns: partial sum " + std::to_string(sum) +
                          " outside [-" + std::to_string(bound_) + ", " +
                          std::to_string(bound_) + "]");
  }
  return first_sum_ + static_cast<std::size_t>(sum + bound_);
}

bool MnnsTokens::is_sum_token(std::size_t token) const {
  return token >= first_sum_ && token < vocab_.size();
}

int MnnsTokens::sum_value(std::size_t token) const {
  if (!is_sum_token(token)) {
    throw VocabularyError("mnns: token " + std::to_string(token) +
                          " is not a sum token");
  }
  return static_cast<int>(token - first_sum_) - bound_;
}

std::vector<std::size_t> mnns_prompt(const MnnsInstance& instance,
                                     const MnnsTokens& tokens) {
  std::vector<std::size_t> p{tokens.bos()};
  for (int d : instance.digits) {
    p.push_back(tokens.digit_token(d));
  }
  p.push_back(tokens.arrow());
  return p;
}

SupervisionTrace mnns_supervision(const MnnsInstance& instance,
                                  const MnnsTokens& tokens) {
  const std::size_t m = instance.digits.size();
  SupervisionTrace trace;
  std::map<int, std::uint64_t> counts{{0, 1}};
  for (std::size_t t = 0; t + 1 < m; ++t) {
    std::map<int, std::uint64_t> next;
    for (const auto& [s, c] : counts) {
      next[s + instance.digits[t]] += c;
      next[s - instance.digits[t]] += c;
    }
    counts = std::move(next);
    std::vector<std::pair<std::size_t, std::uint64_t>> step;
    for (const auto& [s, c] : counts) {
      step.emplace_back(tokens.sum_token(s), c);
    }
    trace.steps.push_back(SparseStep::from_counts(step));
  }
  trace.steps.push_back(SparseStep::one_hot(tokens.sum_token(instance.optimal_sum)));
  return trace;
}

std::vector<std::size_t> mnns_path(const MnnsInstance& instance,
                                   const MnnsTokens& tokens) {
  std::vector<std::size_t> path;
  int s = 0;
  for (std::size_t t = 0; t < instance.digits.size(); ++t) {
    s += instance.optimal_signs[t] * instance.digits[t];
    path.push_back(tokens.sum_token(s));
  }
  return path;
}

}  // namespace cot2::tasks
