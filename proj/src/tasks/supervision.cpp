#include "cot2/tasks/supervision.hpp"

#include <algorithm>
#include <map>

#include "cot2/common/error.hpp"

namespace cot2::tasks {

TokenDistribution SparseStep::dense(std::size_t vocab_size) const {
  std::vector<double> p(vocab_size, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= vocab_size) {
      throw VocabularyError("supervision: token " + std::to_string(index[k]) +
                            " outside vocabulary of size " +
                            std::to_string(vocab_size));
    }
    p[index[k]] = mass(k);
  }
  return TokenDistribution(std::move(p));
}

SparseStep SparseStep::one_hot(std::size_t token) {
  SparseStep s;
  s.index = {token};
  s.count = {1};
  s.denominator = 1;
  return s;
}

SparseStep SparseStep::from_counts(
    const std::vector<std::pair<std::size_t, std::uint64_t>>& counts) {
  std::map<std::size_t, std::uint64_t> merged;
  std::uint64_t total = 0;
  for (const auto& [token, c] : counts) {
    if (c == 0) {
      continue;
    }
    merged[token] += c;
    total += c;
  }
  if (total == 0) {
    throw DataError("supervision: step has no mass");
  }
  SparseStep s;
  for (const auto& [token, c] : merged) {
    s.index.push_back(token);
    s.count.push_back(c);
  }
  s.denominator = total;
  return s;
}

std::size_t SupervisionTrace::answer_token() const {
  if (steps.empty()) {
    throw DataError("supervision: empty trace");
  }
  const SparseStep& last = steps.back();
  if (last.support() != 1) {
    throw DataError("supervision: final step is not one-hot");
  }
  return last.index.front();
}

std::vector<TokenDistribution> SupervisionTrace::dense(
    std::size_t vocab_size) const {
  std::vector<TokenDistribution> out;
  out.reserve(steps.size());
  for (const auto& s : steps) {
    out.push_back(s.dense(vocab_size));
  }
  return out;
}

SupervisionTrace SupervisionTrace::from_path(const std::vector<std::size_t>& path) {
  SupervisionTrace t;
  for (std::size_t token : path) {
    t.steps.push_back(SparseStep::one_hot(token));
  }
  return t;
}

}  // namespace cot2::tasks
