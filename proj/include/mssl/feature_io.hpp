#pragma once

// "MSL1" dense feature files: magic, u32 rows, u32 cols, rows*cols f32 row-major.
// All integers and floats are little-endian regardless of host order.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mssl/error.hpp"

namespace mssl {

inline constexpr std::array<char, 4> kFeatureMagic = {'M', 'S', 'L', '1'};

/// Row-major float32 matrix as stored on disk. A video file holds one frame
/// per row (n_v x d_v); a query file one word per row (n_q x d_w).
struct FeatureMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  /// Column-per-row view: a rows x cols row-major buffer is exactly a
  /// cols x rows column-major matrix, so frames/words become columns.
  Eigen::MatrixXf as_columns() const {
    return Eigen::Map<const Eigen::MatrixXf>(data.data(), cols, rows);
  }

  static FeatureMatrix from_columns(const Eigen::MatrixXf& m) {
    FeatureMatrix out;
    out.rows = static_cast<std::uint32_t>(m.cols());
    out.cols = static_cast<std::uint32_t>(m.rows());
    out.data.assign(m.data(), m.data() + m.size());
    return out;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<unsigned char> encode_feature_matrix(const FeatureMatrix& m) {
  if (m.data.size() != static_cast<std::size_t>(m.rows) * m.cols) {
    throw ShapeError("feature matrix holds " + std::to_string(m.data.size()) + " values, expected " +
                     std::to_string(static_cast<std::size_t>(m.rows) * m.cols));
  }
  std::vector<unsigned char> out;
  out.reserve(12 + 4 * m.data.size());
  out.insert(out.end(), kFeatureMagic.begin(), kFeatureMagic.end());
  detail::put_u32(out, m.rows);
  detail::put_u32(out, m.cols);
  for (float f : m.data) {
    if (!std::isfinite(f)) throw NumericError("refusing to write non-finite feature value");
    detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline FeatureMatrix decode_feature_matrix(const unsigned char* bytes, std::size_t size,
                                           const std::string& origin = "<memory>") {
  if (size < 12) throw DataError(origin + ": truncated header");
  if (std::memcmp(bytes, kFeatureMagic.data(), 4) != 0) throw DataError(origin + ": bad magic");
  FeatureMatrix m;
  m.rows = detail::get_u32(bytes + 4);
  m.cols = detail::get_u32(bytes + 8);
  const std::size_t count = static_cast<std::size_t>(m.rows) * m.cols;
  if (size - 12 < count * 4) throw DataError(origin + ": truncated payload");
  if (size - 12 > count * 4) throw DataError(origin + ": trailing bytes after payload");
  m.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(detail::get_u32(bytes + 12 + 4 * i));
    if (!std::isfinite(f)) {
      throw NumericError(origin + ": non-finite value (NaN/Inf) at element " + std::to_string(i));
    }
    m.data[i] = f;
  }
  return m;
}

inline void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  const auto bytes = encode_feature_matrix(m);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing feature file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_matrix(bytes.data(), bytes.size(), path.string());
}

}  // namespace mssl
