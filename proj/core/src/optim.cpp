#include "asi/optim.hpp"

#include <cmath>

#include "asi/errors.hpp"

namespace asi {

AdamState::AdamState(const std::vector<Tensor>& parameters, AdamOptions opts) : options(opts) {
  for (const auto& p : parameters) {
    first_moment.emplace_back(p.numel(), Real{0});
    second_moment.emplace_back(p.numel(), Real{0});
  }
}

void adam_step(AdamState& state, std::vector<Tensor>& parameters, Real lr) {
  if (parameters.size() != state.first_moment.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                        " parameters, got " + std::to_string(parameters.size()));
  }
  for (std::size_t k = 0; k < parameters.size(); ++k) {
    if (!parameters[k].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(k) + " has no gradient");
    }
    if (parameters[k].numel() != state.first_moment[k].size()) {
      throw ContractError("adam_step: moment arrays misaligned with parameter " +
                          std::to_string(k));
    }
  }

  ++state.step;
  const auto& o = state.options;
  const Real t = static_cast<Real>(state.step);
  const Real correction1 = Real{1} - std::pow(o.beta1, t);
  const Real correction2 = Real{1} - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < parameters.size(); ++k) {
    auto w = parameters[k].mutable_data();
    const auto g = parameters[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = o.beta1 * m[i] + (Real{1} - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (Real{1} - o.beta2) * g[i] * g[i];
      const Real m_hat = m[i] / correction1;
      const Real v_hat = v[i] / correction2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

}  // namespace asi
