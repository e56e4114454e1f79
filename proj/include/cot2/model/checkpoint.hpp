#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "cot2/model/params.hpp"

namespace cot2::model {

struct Checkpoint {
  LmParams params;
  std::uint64_t step = 0;
  /// Free-form run metadata (task, vocabulary, training mode).
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Self-describing JSON container: format tag, version, model config, step,
/// metadata and every named tensor with its shape. Doubles are written in
/// shortest round-trip form, so save followed by load is bit-exact.
void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace cot2::model
