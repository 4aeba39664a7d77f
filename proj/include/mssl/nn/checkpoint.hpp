#pragma once

// Checkpoint directory: checkpoint.json (names, shapes, config, metadata)
// plus one MSL1 file per tensor under tensors/. Values round-trip bit-exactly.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mssl/feature_io.hpp"
#include "mssl/nn/parameter.hpp"

namespace mssl::nn {

/// Stores an r x c matrix as an r-row, c-column MSL1 record.
inline FeatureMatrix tensor_to_record(const Eigen::MatrixXf& m) {
  FeatureMatrix f;
  f.rows = static_cast<std::uint32_t>(m.rows());
  f.cols = static_cast<std::uint32_t>(m.cols());
  f.data.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(f.data.data(), m.rows(),
                                                                                     m.cols()) = m;
  return f;
}

inline Eigen::MatrixXf record_to_tensor(const FeatureMatrix& f) {
  return Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(f.data.data(),
                                                                                                 f.rows, f.cols);
}

inline std::string tensor_file_name(const std::string& name) {
  std::string out;
  for (char ch : name) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_') ? ch : '_';
  return out + ".msl";
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

struct NamedTensor {
  std::string name;
  Eigen::MatrixXf value;
};

/// Writes tensors plus a JSON header; `header` is stored under "meta".
inline void save_tensors(const std::filesystem::path& dir, const std::vector<NamedTensor>& tensors,
                         const nlohmann::json& header) {
  std::filesystem::create_directories(dir / "tensors");
  nlohmann::json j;
  j["format"] = "mssl-checkpoint-1";
  j["meta"] = header;
  j["tensors"] = nlohmann::json::array();
  for (const auto& t : tensors) {
    const auto file = "tensors/" + tensor_file_name(t.name);
    write_feature_matrix(dir / file, tensor_to_record(t.value));
    j["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"file", file}});
  }
  write_json(dir / "checkpoint.json", j);
}

struct LoadedTensors {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline LoadedTensors load_tensors(const std::filesystem::path& dir) {
  const auto j = read_json(dir / "checkpoint.json");
  if (j.value("format", "") != "mssl-checkpoint-1") throw DataError(dir.string() + ": not an mssl checkpoint");
  LoadedTensors out;
  out.meta = j.at("meta");
  for (const auto& e : j.at("tensors")) {
    auto rec = read_feature_matrix(dir / e.at("file").get<std::string>());
    if (rec.rows != e.at("rows").get<std::uint32_t>() || rec.cols != e.at("cols").get<std::uint32_t>())
      throw ShapeError(dir.string() + ": tensor " + e.at("name").get<std::string>() + " shape disagrees with header");
    out.tensors.push_back({e.at("name").get<std::string>(), record_to_tensor(rec)});
  }
  return out;
}

inline std::vector<NamedTensor> snapshot(const ParameterList<float>& params) {
  std::vector<NamedTensor> out;
  for (auto* p : params) out.push_back({p->name, p->value});
  return out;
}

/// Restores values by name; every parameter must be present with its shape.
inline void restore(const ParameterList<float>& params, const LoadedTensors& src, const std::string& prefix = "") {
  for (auto* p : params) {
    const auto* t = src.find(prefix + p->name);
    if (!t) throw DataError("checkpoint lacks tensor " + prefix + p->name);
    if (t->value.rows() != p->value.rows() || t->value.cols() != p->value.cols())
      throw ShapeError("checkpoint tensor " + p->name + " has shape " + std::to_string(t->value.rows()) + "x" +
                       std::to_string(t->value.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                       std::to_string(p->value.cols()));
    p->value = t->value;
  }
}

}  // namespace mssl::nn
