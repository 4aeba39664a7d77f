#pragma once

// Central finite-difference oracle for analytic gradients (double precision).

#include <algorithm>
#include <cmath>
#include <string>

#include "mssl/nn/parameter.hpp"

namespace mssl::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[index]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;

  void merge(const GradCheckResult& o) {
    if (o.max_rel_error > max_rel_error || coordinates == 0) {
      max_rel_error = std::max(max_rel_error, o.max_rel_error);
      worst = o.worst;
      worst_analytic = o.worst_analytic;
      worst_numeric = o.worst_numeric;
    }
    coordinates += o.coordinates;
  }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Perturbs every coordinate of x (in place, restored afterwards) and compares
/// the central difference of loss() against analytic.
template <typename Loss>
GradCheckResult grad_check(Loss&& loss, Mat<double>& x, const Mat<double>& analytic, double eps = 1e-6,
                           const std::string& label = "x") {
  require_shape(x.rows() == analytic.rows() && x.cols() == analytic.cols(), "grad_check: gradient shape");
  GradCheckResult r;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + eps;
    const double up = loss();
    x.data()[i] = saved - eps;
    const double down = loss();
    x.data()[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: non-finite loss while perturbing " + label);
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.data()[i];
    if (!std::isfinite(a)) throw NumericError("grad_check: non-finite analytic gradient in " + label);
    const double err = relative_error(a, numeric);
    if (err > r.max_rel_error || r.coordinates == 0) {
      r.max_rel_error = std::max(r.max_rel_error, err);
      r.worst = label + "[" + std::to_string(i) + "]";
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
    ++r.coordinates;
  }
  return r;
}

/// Checks the gradients already accumulated in each parameter's grad.
template <typename Loss>
GradCheckResult grad_check(Loss&& loss, const ParameterList<double>& params, double eps = 1e-6) {
  GradCheckResult total;
  for (auto* p : params) {
    const Mat<double> analytic = p->grad;
    total.merge(grad_check(loss, p->value, analytic, eps, p->name));
  }
  return total;
}

}  // namespace mssl::nn
