#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dualran/tensor.hpp"

namespace dualran {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Negative-control hook: perturbs the first analytic gradient entry so the
  /// check must fail. Never set outside tests / `gradcheck --corrupt`.
  bool corrupt_analytic = false;
};

struct GradCheckResult {
  /// max over coordinates of |analytic - central| / max(1, |central|)
  double max_deviation = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Checks d f(x) / dx against central differences. f must return a scalar.
double grad_check(const std::function<Tensord(const Tensord&)>& f, const Tensord& x,
                  double epsilon = 1e-4);

/// Checks a closure over named leaf tensors (typically model parameters).
/// Each tensor's values are perturbed in place and restored afterwards.
GradCheckResult grad_check_leaves(const std::function<Tensord()>& f,
                                  const std::vector<std::pair<std::string, Tensord>>& leaves,
                                  const GradCheckOptions& options = {});

}  // namespace dualran
