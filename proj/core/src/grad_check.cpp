#include "asi/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "asi/errors.hpp"
#include "asi/tape.hpp"

namespace asi {

namespace {

Real scalar_value(const Tensor& t) {
  if (t.numel() != 1) throw ContractError("grad_check: fn must return a scalar");
  const Real v = t.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: fn returned a non-finite value");
  return v;
}

}  // namespace

GradCheckResult grad_check_tensors(const std::function<Tensor()>& fn, std::vector<Tensor> wrt,
                                   Real step) {
  if (!(step >= 1e-5 && step <= 1e-2)) {
    throw ContractError("grad_check: step must lie in [1e-5, 1e-2]");
  }
  std::vector<bool> had_grad_flag;
  for (auto& t : wrt) {
    had_grad_flag.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Tape tape;
  Tensor out;
  {
    TapeGuard guard(tape);
    out = fn();
  }
  scalar_value(out);
  // A function that never touches its inputs records nothing: all-zero grads.
  if (out.requires_grad()) tape.backward(out);

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto values = wrt[k].mutable_data();
    const std::vector<Real> analytic(wrt[k].grad().begin(), wrt[k].grad().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = saved + step;
      const Real plus = scalar_value(fn());
      values[i] = saved - step;
      const Real minus = scalar_value(fn());
      values[i] = saved;
      const Real numeric = (plus - minus) / (2 * step);
      const Real denom = std::max({Real{1}, std::abs(analytic[i]), std::abs(numeric)});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
      ++result.coordinates;
    }
  }
  for (std::size_t k = 0; k < wrt.size(); ++k) wrt[k].set_requires_grad(had_grad_flag[k]);
  return result;
}

Real grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point, Real step) {
  Tensor x = point.clone();
  return grad_check_tensors([&] { return fn(x); }, {x}, step).max_relative_error;
}

}  // namespace asi
