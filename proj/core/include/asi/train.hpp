#pragma once

#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "asi/envs.hpp"
#include "asi/model.hpp"
#include "asi/optim.hpp"
#include "asi/random.hpp"

namespace asi {

enum class Bptt { Full, Detached };

struct TrainConfig {
  std::size_t horizon = 8;                 // H: max frames one prediction may skip
  std::uint64_t exploration_steps = 1000;  // K of mu(t) = max(0, 1 - t / K)
  std::uint64_t sampling_steps = 1000;     // K of eps(t) = max(0, 1 - t / K)
  std::size_t batch_trajectories = 2;
  LrSchedule lr_schedule{1e-3, 2000, 0.2};
  std::uint64_t max_training_steps = 3000;
  /// Stop once this many training forward passes were spent (0: no limit).
  std::uint64_t forward_pass_budget = 0;
  Bptt bptt = Bptt::Full;
  std::uint64_t seed = 0;
  std::size_t evals_per_epoch = 4;
  std::size_t rollout_cap = 2 * kMaxTrajectoryLength;
};

/// mu(step) = max(0, 1 - step / K); ContractError if K == 0.
Real exploration_prob(std::uint64_t step, std::uint64_t k);
/// eps(step) = max(0, 1 - step / K): probability of feeding the ground truth.
Real sampling_prob(std::uint64_t step, std::uint64_t k);

/// One abstract step. Frame indices are zero-based.
struct StepRecord {
  std::size_t abstract_step = 0;  // u
  std::size_t source_t = 0;       // data index the step started from
  std::size_t matched_t = 0;      // data index the prediction was scored against
  std::size_t skip = 0;           // matched_t - source_t
  Real step_loss = 0;
  bool explored = false;
  bool fed_prediction = false;    // input was the model's own previous prediction

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct TrajectoryLossReport {
  Tensor mean_loss;  // differentiable when recorded on a tape
  std::vector<StepRecord> step_records;
  std::uint64_t forward_passes = 0;
};

struct MatchResult {
  std::size_t matched_t = 0;
  Real step_loss = 0;
};

/// argmin over t' in {t+1, ..., min(t+H, T-1)} of bce(prediction, x_t'),
/// smallest t' on ties. ContractError when t >= T-1.
MatchResult temporal_match(const Tensor& prediction, const Trajectory& trajectory, std::size_t t,
                           std::size_t horizon);

/// Independent Bernoulli streams for one trajectory pass.
struct TrajectoryRng {
  Rng explore;
  Rng sampling;

  static TrajectoryRng derive(std::uint64_t seed, std::uint64_t index) {
    return {Rng(derive_seed(seed, stream::kExplore, index)),
            Rng(derive_seed(seed, stream::kSampling, index))};
  }
};

struct Method {
  enum class Kind { Asi, AsiNoExplore, Fixed };
  Kind kind = Kind::Asi;
  std::size_t dt = 1;  // Fixed only

  static Method asi() { return {Kind::Asi, 1}; }
  static Method asi_no_explore() { return {Kind::AsiNoExplore, 1}; }
  static Method fixed(std::size_t dt) { return {Kind::Fixed, dt}; }

  /// "asi", "asi-no-explore", "fixed" (dt 1) or "fixed-<dt>".
  static Method parse(const std::string& name);
  std::string name() const;
  friend bool operator==(const Method&, const Method&) = default;
};

/// One pass of the adaptive-skip training loop over a trajectory.
///
/// Starting from x_0, each abstract step predicts x_hat = f(p) and scores it
/// against a frame within the horizon: a uniformly drawn one with probability
/// mu(training_step), the best-matching one otherwise. The next input is the
/// scored ground-truth frame with probability eps(training_step), else x_hat.
/// `explore` = false pins mu to zero.
TrajectoryLossReport asi_train_trajectory(DynamicsModel& model, const Trajectory& trajectory,
                                          const TrainConfig& config, std::uint64_t training_step,
                                          TrajectoryRng& rng, bool explore = true);

/// The same loop with the scored frame forced to min(t + dt, T-1).
TrajectoryLossReport fixed_train_trajectory(DynamicsModel& model, const Trajectory& trajectory,
                                            std::size_t dt, const TrainConfig& config,
                                            std::uint64_t training_step, TrajectoryRng& rng);

/// Dispatches on the method.
TrajectoryLossReport train_trajectory(DynamicsModel& model, const Trajectory& trajectory,
                                      const Method& method, const TrainConfig& config,
                                      std::uint64_t training_step, TrajectoryRng& rng);

// --------------------------------------------------------------- evaluation

template <class M>
concept FrameModel = requires(M& m, const Tensor& frame) {
  { m.forward(frame) } -> std::convertible_to<Tensor>;
};

struct RolloutResult {
  std::optional<Label> label;
  std::vector<Tensor> frames;  // predictions, in order
  std::uint64_t forward_passes = 0;
};

struct EvalReport {
  Real accuracy = 0;
  std::vector<std::optional<Label>> predicted;
  Real mean_rollout_length = 0;  // forward passes per trajectory
  std::uint64_t forward_passes = 0;
};

/// Feeds each prediction back as the next input and applies the classifier
/// after every step; the first label wins. nullopt after max_abstract_steps.
template <FrameModel M>
RolloutResult rollout_and_classify(M& model, const Tensor& initial_frame, EnvId env,
                                   std::size_t max_abstract_steps, const EnvConfig& env_config = {},
                                   bool keep_frames = true);

template <FrameModel M>
EvalReport evaluate_accuracy(M& model, const std::vector<Trajectory>& dataset, EnvId env,
                             std::size_t max_abstract_steps = 2 * kMaxTrajectoryLength,
                             const EnvConfig& env_config = {});

// ----------------------------------------------------------------- training

/// One validation point. forward_passes counts training passes only.
struct MetricsRow {
  std::string method;
  std::uint64_t seed = 0;
  Real epoch = 0;
  std::uint64_t optimizer_step = 0;
  std::uint64_t forward_passes = 0;
  Real train_loss = 0;     // mean batch loss since the previous row
  Real val_accuracy = 0;
  Real mean_skip = 0;      // mean training skip since the previous row
  Real mean_rollout_length = 0;  // validation forward passes per trajectory
  double wall_ms = 0;
};

struct TrainCallbacks {
  std::function<void(const MetricsRow&)> on_validation;
  /// Called before each epoch with the dataset that epoch trains on.
  std::function<void(std::size_t epoch, const std::vector<Trajectory>&)> on_epoch;
  /// Called after every optimizer step with that step's trajectory reports.
  std::function<void(std::uint64_t step, const std::vector<TrajectoryLossReport>&)> on_step;
};

/// Training data, optionally swapped for `alternate` from `switch_epoch` on.
struct TrainingSchedule {
  const std::vector<Trajectory>* primary = nullptr;
  const std::vector<Trajectory>* alternate = nullptr;
  std::optional<std::size_t> switch_epoch;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::uint64_t optimizer_steps = 0;
  std::uint64_t training_forward_passes = 0;
};

/// Seeded-shuffled epochs, batch_trajectories trajectories per Adam step,
/// evals_per_epoch validation points per epoch plus one when a stopping
/// criterion ends training between them.
TrainResult train(DynamicsModel& model, const TrainingSchedule& data, const TrainConfig& config,
                  const Method& method, const std::vector<Trajectory>& validation, EnvId env,
                  const EnvConfig& env_config = {}, const TrainCallbacks& callbacks = {});

// ---------------------------------------------------------------- skip sweep

struct SweepRow {
  std::size_t dt = 1;
  Real mean_loss = 0;  // converged per-step loss
  Real rate = 0;       // mean_loss / dt
  std::uint64_t forward_passes = 0;
};

struct SweepOptions {
  std::string architecture = "small-conv-3";
  std::size_t n_kernels = 8;
  std::uint64_t forward_pass_budget = 20000;
};

/// Trains one fixed-dt model per entry under an equal forward-pass budget and
/// reports its converged per-step loss (mean over the dataset, no exploration,
/// scheduled sampling at the final schedule value) divided by dt.
std::vector<SweepRow> skip_sweep(const std::vector<Trajectory>& dataset,
                                 const std::vector<std::size_t>& dts, const TrainConfig& config,
                                 const SweepOptions& options = {});

}  // namespace asi

#include "asi/detail/rollout_impl.hpp"
