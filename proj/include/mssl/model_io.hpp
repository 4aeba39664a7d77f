#pragma once

#include <filesystem>

#include "mssl/model.hpp"
#include "mssl/nn/checkpoint.hpp"

namespace mssl {

/// Saves a float model; `meta` is stored alongside the model config.
inline void save_model(const std::filesystem::path& dir, Model<float>& model, const nlohmann::json& meta = {}) {
  nlohmann::json header;
  header["model"] = model.config();
  header["info"] = meta.is_null() ? nlohmann::json::object() : meta;
  nn::save_tensors(dir, nn::snapshot(model.parameters()), header);
}

struct LoadedModel {
  Model<float> model;
  nlohmann::json info;
};

inline LoadedModel load_model(const std::filesystem::path& dir) {
  const auto tensors = nn::load_tensors(dir);
  const auto cfg = tensors.meta.at("model").get<ModelConfig>();
  LoadedModel out{Model<float>(cfg), tensors.meta.value("info", nlohmann::json::object())};
  nn::restore(out.model.parameters(), tensors);
  return out;
}

}  // namespace mssl
