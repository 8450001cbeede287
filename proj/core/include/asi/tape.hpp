#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "asi/tensor.hpp"

namespace asi {

/// Define-by-run record of differentiable operations.
///
/// Operations record themselves on the tape that is active on the calling
/// thread (see TapeGuard) when at least one input requires grad. A fresh tape
/// is built for every training step.
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into inputs.
  using BackwardFn = std::function<void(std::span<const Real> output_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  /// Populates grads of every requires-grad tensor reachable from `loss`.
  /// Leaf gradients accumulate; intermediate gradients are reset per call, so
  /// repeated passes over one tape add identical contributions.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// The tape operations currently record on, or nullptr.
  static Tape* active() noexcept;

 private:
  friend class TapeGuard;

  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Makes a tape active on this thread for the guard's lifetime.
class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape) noexcept;
  ~TapeGuard();
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on this thread (rollouts, matching, evaluation).
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

/// Convenience: records `loss_fn()` on a fresh tape and runs backward.
Tensor compute_gradients(const std::function<Tensor()>& loss_fn);

}  // namespace asi
