#pragma once

#include <cstddef>
#include <cstdint>

namespace cot2::model {

struct ModelConfig {
  std::size_t layers = 1;
  std::size_t heads = 1;
  std::size_t dim = 24;
  std::size_t vocab = 0;
  std::size_t context = 16;
  std::uint64_t seed = 0;
  /// Output projection shares the token embedding matrix.
  bool tied = true;

  /// Throws ConfigError when dim is not a multiple of heads or a size is zero.
  void validate() const;
  /// Throws ContextError when a prompt of `prompt_length` plus `steps`
  /// generated tokens does not fit.
  void require_fits(std::size_t prompt_length, std::size_t steps) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace cot2::model
