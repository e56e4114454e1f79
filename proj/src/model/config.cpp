#include "cot2/model/config.hpp"

#include <string>

#include "cot2/common/error.hpp"

namespace cot2::model {

void ModelConfig::validate() const {
  if (layers == 0 || heads == 0 || dim == 0 || vocab == 0 || context == 0) {
    throw ConfigError("model: layers, heads, dim, vocab and context must be positive");
  }
  if (dim % heads != 0) {
    throw ConfigError("model: dim " + std::to_string(dim) +
                      " is not divisible by heads " + std::to_string(heads));
  }
}

void ModelConfig::require_fits(std::size_t prompt_length, std::size_t steps) const {
  if (prompt_length + steps > context) {
    throw ContextError("model: prompt of " + std::to_string(prompt_length) +
                       " tokens plus " + std::to_string(steps) +
                       " steps exceeds context " + std::to_string(context));
  }
}

}  // namespace cot2::model
