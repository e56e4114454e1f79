#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cot2/tensor/tape.hpp"

namespace cot2::tensor {

// Differentiable primitives. Rank-1 inputs behave as a single row.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a (r x c) plus a 1 x c bias broadcast over rows.
Var add_row(Var a, Var bias);
Var sum(Var a);

/// Row-wise normalization followed by elementwise gain and bias (both 1 x c).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// tanh approximation used by GPT-2.
Var gelu(Var x);

/// Rows of `table` selected by index.
Var embedding_lookup(Var table, std::span<const std::size_t> indices);
/// weights (T x v) times table (v x d). Zero weights are skipped in the
/// forward sum, so a one-hot row reproduces the table row bit for bit.
Var embedding_mix(Var weights, Var table);

/// scale * q k^T with entries above the diagonal set to -infinity.
Var causal_scores(Var q, Var k, double scale);
/// Row softmax of x / temperature. Accepts -infinity (masked) entries but
/// every row needs at least one finite entry.
Var softmax_rows(Var x, double temperature = 1.0);
Var log_softmax_rows(Var x);

Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

struct GatherEntry {
  std::size_t row;
  std::size_t col;
  double weight;
};

/// Output j is the weighted sum of the listed entries of x in groups[j];
/// returns a 1 x groups.size() row.
Var gather_weighted(Var x, const std::vector<std::vector<GatherEntry>>& groups);

/// Floor applied to probabilities inside logarithms of the loss.
inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_i target_i log max(predicted_i, floor) for one predicted row.
Var soft_cross_entropy(std::span<const double> target, Var predicted);

}  // namespace cot2::tensor
