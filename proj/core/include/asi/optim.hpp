#pragma once

#include <cstdint>
#include <vector>

#include "asi/tensor.hpp"

namespace asi {

struct AdamOptions {
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

/// Moment estimates for a fixed list of parameters.
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const std::vector<Tensor>& parameters, AdamOptions opts = {});
};

/// Bias-corrected Adam update. Every parameter must carry a gradient
/// (ContractError otherwise) with the shape recorded in `state`.
void adam_step(AdamState& state, std::vector<Tensor>& parameters, Real lr);

/// Piecewise-constant learning rate with one multiplicative drop.
struct LrSchedule {
  Real base_lr = 5e-4;
  std::uint64_t decay_step = 15000;
  Real decay_factor = 0.2;

  Real lr_at(std::uint64_t step) const { return step < decay_step ? base_lr : base_lr * decay_factor; }
};

}  // namespace asi
