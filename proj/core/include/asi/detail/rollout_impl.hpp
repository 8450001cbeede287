#pragma once

// Template definitions for asi/train.hpp.

#include "asi/errors.hpp"
#include "asi/tape.hpp"

namespace asi {

template <FrameModel M>
RolloutResult rollout_and_classify(M& model, const Tensor& initial_frame, EnvId env,
                                   std::size_t max_abstract_steps, const EnvConfig& env_config,
                                   bool keep_frames) {
  if (max_abstract_steps == 0) throw ContractError("rollout needs max_abstract_steps >= 1");
  NoGradGuard no_grad;
  RolloutResult result;
  Tensor frame = initial_frame;
  for (std::size_t step = 0; step < max_abstract_steps; ++step) {
    frame = model.forward(frame);
    ++result.forward_passes;
    if (keep_frames) result.frames.push_back(frame);
    if (auto label = classify(env, frame, env_config)) {
      result.label = label;
      break;
    }
  }
  return result;
}

template <FrameModel M>
EvalReport evaluate_accuracy(M& model, const std::vector<Trajectory>& dataset, EnvId env,
                             std::size_t max_abstract_steps, const EnvConfig& env_config) {
  if (dataset.empty()) throw ContractError("evaluate_accuracy: empty dataset");
  EvalReport report;
  std::size_t correct = 0;
  for (const auto& traj : dataset) {
    auto r = rollout_and_classify(model, traj.frames.front(), env, max_abstract_steps, env_config,
                                  /*keep_frames=*/false);
    report.forward_passes += r.forward_passes;
    if (r.label && *r.label == traj.label) ++correct;
    report.predicted.push_back(r.label);
  }
  report.accuracy = static_cast<Real>(correct) / static_cast<Real>(dataset.size());
  report.mean_rollout_length =
      static_cast<Real>(report.forward_passes) / static_cast<Real>(dataset.size());
  return report;
}

}  // namespace asi
