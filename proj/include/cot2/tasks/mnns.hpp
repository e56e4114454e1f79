#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cot2/tasks/supervision.hpp"
#include "cot2/tasks/vocabulary.hpp"

namespace cot2::tasks {

struct MnnsSolution {
  int sum = 0;
  std::vector<int> signs;
};

/// Exhaustive search over the 2^m sign vectors. Among assignments reaching
/// the minimal nonnegative sum, the lexicographically smallest sign vector
/// (+1 before -1) wins.
MnnsSolution brute_force_mnns(std::span<const int> digits);

struct MnnsInstance {
  std::vector<int> digits;
  int optimal_sum = 0;
  std::vector<int> optimal_signs;

  static MnnsInstance solve(std::vector<int> digits);
};

/// Token layout for MNNS: BOS, EOS, ARROW, one token per input digit value and
/// one per output sum in [-S, S], where S = m * max_digit bounds every partial
/// sum.
class MnnsTokens {
 public:
  MnnsTokens(int min_digit, int max_digit, int digits_per_instance);

  const Vocabulary& vocabulary() const { return vocab_; }
  int sum_bound() const { return bound_; }
  int min_digit() const { return min_digit_; }
  int max_digit() const { return max_digit_; }

  std::size_t bos() const { return bos_; }
  std::size_t eos() const { return eos_; }
  std::size_t arrow() const { return arrow_; }
  std::size_t digit_token(int digit) const;
  /// Throws VocabularyError when |sum| exceeds the bound.
  std::size_t sum_token(int sum) const;
  /// Inverse of sum_token; throws VocabularyError for non-sum tokens.
  int sum_value(std::size_t token) const;
  bool is_sum_token(std::size_t token) const;

 private:
  Vocabulary vocab_;
  int min_digit_;
  int max_digit_;
  int bound_;
  std::size_t bos_, eos_, arrow_, first_digit_, first_sum_;
};

/// BOS d_1 ... d_m ARROW.
std::vector<std::size_t> mnns_prompt(const MnnsInstance& instance,
                                     const MnnsTokens& tokens);

/// Step t < m holds count_t(s) / 2^t for each length-t signed partial sum s;
/// step m is one-hot at the optimal sum.
SupervisionTrace mnns_supervision(const MnnsInstance& instance,
                                  const MnnsTokens& tokens);

/// Tokens of the optimal partial sums sigma_1 d_1 + ... + sigma_t d_t.
std::vector<std::size_t> mnns_path(const MnnsInstance& instance,
                                   const MnnsTokens& tokens);

}  // namespace cot2::tasks
