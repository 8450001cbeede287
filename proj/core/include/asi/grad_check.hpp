#pragma once

#include <functional>
#include <vector>

#include "asi/tensor.hpp"

namespace asi {

struct GradCheckResult {
  Real max_relative_error = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `fn` at `point` against central
/// differences with the given step. Per coordinate the error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|); the maximum is
/// returned. Throws NumericError on non-finite function values and
/// ContractError when step lies outside [1e-5, 1e-2].
Real grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, Real step);

/// Same check over every coordinate of every tensor in `wrt`, whose values
/// are perturbed in place (and restored) while `fn` is re-evaluated.
GradCheckResult grad_check_tensors(const std::function<Tensor()>& fn, std::vector<Tensor> wrt,
                                   Real step);

}  // namespace asi
