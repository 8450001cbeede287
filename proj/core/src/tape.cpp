#include "asi/tape.hpp"

#include <algorithm>
#include <unordered_set>

#include "asi/errors.hpp"

namespace asi {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* Tape::active() noexcept { return g_active_tape; }

TapeGuard::TapeGuard(Tape& tape) noexcept : previous_(g_active_tape) { g_active_tape = &tape; }
TapeGuard::~TapeGuard() { g_active_tape = previous_; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = previous_; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  const auto* loss_impl = loss.impl().get();
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(), [&](const Node& n) {
    return n.output.impl().get() == loss_impl;
  });
  if (it == nodes_.rend()) {
    throw ContractError("backward(): loss was not produced on this tape");
  }

  for (auto& node : nodes_) node.output.zero_grad();
  loss.impl()->grad.assign(1, Real{1});

  std::unordered_set<const detail::TensorImpl*> reached{loss_impl};
  for (; it != nodes_.rend(); ++it) {
    if (!reached.contains(it->output.impl().get())) continue;
    it->backward(it->output.grad());
    for (const auto& in : it->inputs) {
      if (in.requires_grad()) reached.insert(in.impl().get());
    }
  }
}

Tensor compute_gradients(const std::function<Tensor()>& loss_fn) {
  Tape tape;
  Tensor loss;
  {
    TapeGuard guard(tape);
    loss = loss_fn();
  }
  tape.backward(loss);
  return loss;
}

}  // namespace asi
