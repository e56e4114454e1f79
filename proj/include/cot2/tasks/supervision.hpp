#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cot2/common/simplex.hpp"

namespace cot2::tasks {

/// Sparse target distribution whose masses are count / denominator. Entries
/// are sorted by token index and carry positive counts.
struct SparseStep {
  std::vector<std::size_t> index;
  std::vector<std::uint64_t> count;
  std::uint64_t denominator = 1;

  double mass(std::size_t k) const {
    return static_cast<double>(count[k]) / static_cast<double>(denominator);
  }
  std::size_t support() const { return index.size(); }
  TokenDistribution dense(std::size_t vocab_size) const;

  static SparseStep one_hot(std::size_t token);
  /// Builds a step from (token, count) pairs; duplicates are merged.
  static SparseStep from_counts(
      const std::vector<std::pair<std::size_t, std::uint64_t>>& counts);

  friend bool operator==(const SparseStep&, const SparseStep&) = default;
};

/// Per-step targets for an m-step generation; the last step is one-hot at the
/// answer token.
struct SupervisionTrace {
  std::vector<SparseStep> steps;

  std::size_t length() const { return steps.size(); }
  std::size_t answer_token() const;
  std::vector<TokenDistribution> dense(std::size_t vocab_size) const;

  /// Trace with every step replaced by the one-hot of `path` at that step.
  static SupervisionTrace from_path(const std::vector<std::size_t>& path);

  friend bool operator==(const SupervisionTrace&,
                         const SupervisionTrace&) = default;
};

}  // namespace cot2::tasks
