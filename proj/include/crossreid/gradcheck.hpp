#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "crossreid/tensor.hpp"

namespace crossreid {

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, TensorPtr<T>>>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Compares analytic gradients of a scalar objective against central finite
/// differences, parameter by parameter. `scalar_fn` must rebuild the forward
/// computation from the current parameter values; it receives a tape for the
/// analytic pass and nullptr for the perturbed numeric evaluations. Runs in
/// 64-bit only: finite differences are unreliable at 32-bit.
inline GradCheckReport grad_check(
    const NamedTensors<double>& params,
    const std::function<TensorPtr<double>(Tape<double>*)>& scalar_fn, double rel_tolerance) {
  for (const auto& [name, p] : params) p->zero_grad();

  Tape<double> tape;
  auto out = scalar_fn(&tape);
  if (!out || out->size() != 1) {
    throw ShapeError("grad_check: objective must be a scalar tensor");
  }
  tape.backward(out);

  GradCheckReport report;
  report.tolerance = rel_tolerance;

  for (const auto& [name, p] : params) {
    if (!p->requires_grad) continue;
    for (std::int64_t i = 0; i < p->size(); ++i) {
      const auto si = static_cast<std::size_t>(i);
      const double analytic = p->grad[si];
      if (!std::isfinite(analytic)) {
        throw std::runtime_error("grad_check: non-finite analytic gradient for " + name +
                                 "[" + std::to_string(i) + "]");
      }
      const double x = p->values[si];
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      p->values[si] = x + h;
      const double plus = scalar_fn(nullptr)->item();
      p->values[si] = x - h;
      const double minus = scalar_fn(nullptr)->item();
      p->values[si] = x;
      const double numeric = (plus - minus) / (2.0 * h);
      if (!std::isfinite(numeric)) {
        throw std::runtime_error("grad_check: non-finite numeric gradient for " + name + "[" +
                                 std::to_string(i) + "]");
      }
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace crossreid
