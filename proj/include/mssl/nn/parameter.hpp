#pragma once

#include <string>
#include <vector>

#include "mssl/nn/tensor.hpp"
#include "mssl/rng.hpp"

namespace mssl::nn {

enum class Init { xavier, zeros, ones, small_normal };

/// Trainable tensor with a gradient accumulator of identical shape.
template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  Init init = Init::xavier;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, Init how)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)), init(how) {}

  void zero_grad() { grad.setZero(); }

  void initialize(Rng& rng) {
    switch (init) {
      case Init::zeros: value.setZero(); break;
      case Init::ones: value.setOnes(); break;
      case Init::small_normal:
        for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = static_cast<T>(0.02 * rng.normal());
        break;
      case Init::xavier: {
        const double bound = std::sqrt(6.0 / static_cast<double>(value.rows() + value.cols()));
        for (Eigen::Index i = 0; i < value.size(); ++i)
          value.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
  }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
void zero_grads(const ParameterList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
std::size_t parameter_count(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

/// Copies values between parameter lists of identical layout (any scalar types).
template <typename To, typename From>
void copy_values(const ParameterList<To>& dst, const ParameterList<From>& src) {
  require_shape(dst.size() == src.size(), "parameter list length");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require_shape(dst[i]->name == src[i]->name, "parameter name " + dst[i]->name + " vs " + src[i]->name);
    require_shape(dst[i]->value.rows() == src[i]->value.rows() && dst[i]->value.cols() == src[i]->value.cols(),
                  "parameter " + dst[i]->name);
    dst[i]->value = src[i]->value.template cast<To>();
  }
}

}  // namespace mssl::nn
