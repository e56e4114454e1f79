#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cot2::construction {

enum class Hardness { Exact, Finite };

struct ConstructionConfig {
  /// Number of input digits.
  std::size_t n = 0;
  /// Bound on |partial sum|.
  int sum_bound = 0;
  /// Radians per unit of value.
  double omega = 0.0;
  Hardness mode = Hardness::Exact;
  /// Saturation constant for Finite mode.
  double c = 50.0;

  /// omega = pi / (2 (S + 1)) with S = n * max_digit.
  static ConstructionConfig for_mnns(std::size_t n, int max_digit,
                                     Hardness mode = Hardness::Exact, double c = 50.0);

  std::size_t content_size() const { return std::size_t{2} << n; }
  std::size_t position_size() const { return n + 2; }
  std::size_t dim() const { return content_size() + position_size(); }
  /// Throws ConfigError unless n >= 1, omega * S < pi / 2 and c > 0.
  void validate() const;
};

/// Content block of 2^{n+1} reals (cos/sin pairs) and a positional block of
/// n + 2 reals, one-hot for every token that enters attention.
struct TrigToken {
  std::vector<double> content;
  std::vector<double> position;

  /// 1-based index of the one-hot positional block; InvariantError otherwise.
  std::size_t position_index() const;
  std::vector<double> embedding() const;
};

TrigToken blank_token(const ConstructionConfig& cfg);
/// Token holding (cos w v, sin w v) in its first pair at 1-based `position`.
TrigToken value_token(const ConstructionConfig& cfg, long value, std::size_t position);

/// Sparse matrix as (row, col, value) triplets.
struct SparseMatrix {
  std::size_t rows = 0, cols = 0;
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> entries;

  std::vector<double> apply(std::span<const double> x) const;
};

/// Weights of one attention head acting on full token embeddings. The key
/// matrix is c R on the positional block, where R p_j = p_{j-1 mod (n+2)}.
SparseMatrix rotation_matrix(const ConstructionConfig& cfg);
SparseMatrix attention_weights_matrix(const ConstructionConfig& cfg);

/// Attention weights of `query` over `sequence`. Exact mode is the hard limit
/// of the softmax.
std::vector<double> attention_weights(const ConstructionConfig& cfg, const TrigToken& query,
                                      std::span<const TrigToken> sequence);
/// Attention output: the token at position (i+1) mod (n+2) when queried from
/// position i. InvariantError unless exactly one token holds that position.
TrigToken rotation_attention(const ConstructionConfig& cfg, const TrigToken& query,
                             std::span<const TrigToken> sequence);

/// Routing weights over experts 1..n+1 (index 0 is expert 1).
std::vector<double> route_weights(const ConstructionConfig& cfg, const TrigToken& token);
/// 1-based expert chosen for `token`; InvariantError for position n+2.
std::size_t route_expert(const ConstructionConfig& cfg, const TrigToken& token);

/// MLP(x) = W3 (W1 x * W2 x) with x = [z_prev; z_curr] (content blocks).
struct GatedMlp {
  SparseMatrix w1, w2, w3;
  std::vector<double> apply(std::span<const double> z_prev, std::span<const double> z_curr) const;
};

/// Gated MLP of expert j (1 <= j <= n); ConfigError otherwise.
GatedMlp partial_sum_mlp(const ConstructionConfig& cfg, std::size_t j);
/// Output content holds {s_k + d_j} in its first 2^{j-1} pairs and
/// {s_k - d_j} in the next 2^{j-1}, all scaled by 1/2.
TrigToken partial_sum_expert(const ConstructionConfig& cfg, std::size_t j, const TrigToken& z_prev,
                             const TrigToken& z_curr);

/// Selects the smallest nonnegative encoded sum among the first 2^n pairs and
/// returns [cos, sin, 0, ...] of it at the input's scale. Gate and selection
/// arguments are normalized by the largest pair norm and by the angular
/// margins sin(w/2) and 1 - cos(w), so their hard limits sit halfway between
/// neighbouring integers. InvariantError if no pair passes the gate.
TrigToken read_off_expert(const ConstructionConfig& cfg, const TrigToken& z);

/// Nearest integer to atan2(s, c) / omega; InvariantError if the residual is
/// 1e-9 or more.
long decode_angle(double cos_part, double sin_part, double omega);
/// Integers encoded in the first `count` pairs of `token`.
std::vector<long> decode_sums(const ConstructionConfig& cfg, const TrigToken& token,
                              std::size_t count);

struct ConstructionTrace {
  /// Output tokens of the n + 1 generation steps (the last is the answer).
  std::vector<TrigToken> outputs;
  long answer = 0;
};

ConstructionTrace run_construction_trace(const ConstructionConfig& cfg, std::span<const int> digits);
long run_construction(const ConstructionConfig& cfg, std::span<const int> digits);
/// Uses ConstructionConfig::for_mnns(digits.size(), max digit).
long run_construction(std::span<const int> digits);

}  // namespace cot2::construction
