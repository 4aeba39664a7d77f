#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "mssl/error.hpp"

namespace mssl {

// Sequences are stored one position per column: a d x n matrix holds n
// d-dimensional vectors.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("shape mismatch: " + what);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace mssl
