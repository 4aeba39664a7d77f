#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mssl/nn/parameter.hpp"

namespace mssl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Mat<T>> first;   // m
  std::vector<Mat<T>> second;  // v
  std::int64_t step = 0;

  void reset(const nn::ParameterList<T>& params) {
    first.clear();
    second.clear();
    for (auto* p : params) {
      first.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
      second.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
    }
    step = 0;
  }
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
template <typename T>
void adam_step(const nn::ParameterList<T>& params, AdamState<T>& state, double lr, const AdamConfig& cfg) {
  if (state.first.size() != params.size()) {
    if (state.step != 0) throw ShapeError("adam: optimizer state does not match parameter list");
    state.reset(params);
  }
  for (auto* p : params)
    if (!p->grad.allFinite()) throw NumericError("adam: non-finite gradient in " + p->name);
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    require_shape(state.first[i].rows() == p.value.rows() && state.first[i].cols() == p.value.cols(),
                  "adam: state shape for " + p.name);
    state.first[i] = b1 * state.first[i] + (T(1) - b1) * p.grad;
    state.second[i] = b2 * state.second[i] + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * state.first[i].array() / ((state.second[i].array() * inv_c2).sqrt() + eps);
  }
}

}  // namespace mssl
