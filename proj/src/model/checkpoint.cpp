#include "cot2/model/checkpoint.hpp"

#include <fstream>

#include "cot2/common/error.hpp"

namespace cot2::model {

using nlohmann::json;

namespace {
constexpr const char* kFormat = "cot2-checkpoint";
constexpr int kVersion = 1;
}  // namespace

json config_to_json(const ModelConfig& c) {
  return json{{"layers", c.layers}, {"heads", c.heads},     {"dim", c.dim},
              {"vocab", c.vocab},   {"context", c.context}, {"seed", c.seed},
              {"tied", c.tied}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.context = j.at("context").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.tied = j.at("tied").get<bool>();
  return c;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  json tensors = json::array();
  for (const auto& [name, t] : ckpt.params.named()) {
    tensors.push_back(json{{"name", name},
                           {"shape", t->shape()},
                           {"values", std::vector<double>(t->values().begin(), t->values().end())}});
  }
  const json j{{"format", kFormat},
               {"version", kVersion},
               {"config", config_to_json(ckpt.params.config)},
               {"step", ckpt.step},
               {"metadata", ckpt.metadata},
               {"tensors", tensors}};
  if (file.has_parent_path()) {
    std::filesystem::create_directories(file.parent_path());
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("checkpoint: cannot write " + file.string());
  }
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw MissingInputError("checkpoint: cannot read " + file.string());
  }
  try {
    const json j = json::parse(in);
    if (j.at("format") != kFormat || j.at("version") != kVersion) {
      throw DataError("checkpoint: " + file.string() + " has an unsupported format");
    }
    Checkpoint ckpt;
    ckpt.params = LmParams::init(config_from_json(j.at("config")));
    ckpt.step = j.at("step").get<std::uint64_t>();
    ckpt.metadata = j.value("metadata", json::object());
    auto named = ckpt.params.named();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != named.size()) {
      throw DataError("checkpoint: expected " + std::to_string(named.size()) +
                      " tensors, found " + std::to_string(tensors.size()));
    }
    for (std::size_t k = 0; k < named.size(); ++k) {
      const auto& entry = tensors[k];
      auto& [name, t] = named[k];
      if (entry.at("name") != name) {
        throw DataError("checkpoint: tensor " + std::to_string(k) + " should be " + name);
      }
      tensor::Tensor loaded(entry.at("shape").get<std::vector<std::size_t>>(),
                            entry.at("values").get<std::vector<double>>());
      if (!loaded.same_shape(*t)) {
        throw DataError("checkpoint: " + name + " has shape " + loaded.shape_string() +
                        ", config implies " + t->shape_string());
      }
      *t = std::move(loaded);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError("checkpoint: " + file.string() + ": " + e.what());
  }
}

}  // namespace cot2::model
