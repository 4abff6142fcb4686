#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mlc/tensor.hpp"

namespace mlc {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor),
  // so near-zero gradient entries are judged on absolute error.
  double floor = 1e-3;
};

struct GradcheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::string failure;  // non-empty when a non-finite value was seen
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of a scalar-valued `fn` against central
/// differences for every element of every input. Inputs are cloned; the
/// caller's tensors are left untouched.
GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor>& inputs, GradcheckOptions opts = {});

}  // namespace mlc
