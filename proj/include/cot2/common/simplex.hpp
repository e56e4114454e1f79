#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cot2 {

inline constexpr double kSimplexTolerance = 1e-6;

/// A point on the (v-1)-simplex: nonnegative entries summing to one.
class TokenDistribution {
 public:
  TokenDistribution() = default;

  /// Validates nonnegativity and unit mass within `tolerance`; throws
  /// InvariantError otherwise. The stored values are not renormalized.
  explicit TokenDistribution(std::vector<double> probs,
                             double tolerance = kSimplexTolerance);

  static TokenDistribution one_hot(std::size_t size, std::size_t index);
  static TokenDistribution uniform(std::size_t size);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vector() const { return probs_; }

  std::size_t argmax() const;
  bool is_one_hot() const;

  friend bool operator==(const TokenDistribution&,
                         const TokenDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Throws InvariantError when `probs` is off the simplex by more than
/// `tolerance`.
void check_simplex(std::span<const double> probs,
                   double tolerance = kSimplexTolerance);

/// Shannon entropy in nats with 0 ln 0 = 0.
double entropy(std::span<const double> probs);

}  // namespace cot2
