#include "asi/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "asi/errors.hpp"
#include "asi/ops.hpp"
#include "asi/tape.hpp"

namespace asi {

Real exploration_prob(std::uint64_t step, std::uint64_t k) {
  if (k == 0) throw ContractError("exploration schedule needs K >= 1");
  return std::max(Real{0}, Real{1} - static_cast<Real>(step) / static_cast<Real>(k));
}

Real sampling_prob(std::uint64_t step, std::uint64_t k) {
  if (k == 0) throw ContractError("sampling schedule needs K >= 1");
  return std::max(Real{0}, Real{1} - static_cast<Real>(step) / static_cast<Real>(k));
}

MatchResult temporal_match(const Tensor& prediction, const Trajectory& trajectory, std::size_t t,
                           std::size_t horizon) {
  const std::size_t last = trajectory.length() == 0 ? 0 : trajectory.length() - 1;
  if (t >= last) {
    throw ContractError("temporal_match: no candidates after index " + std::to_string(t) +
                        " in a trajectory of length " + std::to_string(trajectory.length()));
  }
  if (horizon == 0) throw ContractError("temporal_match: horizon must be >= 1");
  const std::size_t upper = std::min(t + horizon, last);
  MatchResult best{t + 1, bce_value(prediction.data(), trajectory.frames[t + 1].data())};
  for (std::size_t c = t + 2; c <= upper; ++c) {
    const Real loss = bce_value(prediction.data(), trajectory.frames[c].data());
    if (loss < best.step_loss) best = {c, loss};
  }
  return best;
}

Method Method::parse(const std::string& name) {
  if (name == "asi") return asi();
  if (name == "asi-no-explore") return asi_no_explore();
  if (name == "fixed") return fixed(1);
  if (name.rfind("fixed-", 0) == 0) {
    const std::string digits = name.substr(6);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      const auto dt = std::stoul(digits);
      if (dt >= 1) return fixed(dt);
    }
  }
  throw ConfigError("unknown method '" + name + "' (expected asi, asi-no-explore, fixed-<dt>)");
}

std::string Method::name() const {
  switch (kind) {
    case Kind::Asi: return "asi";
    case Kind::AsiNoExplore: return "asi-no-explore";
    case Kind::Fixed: return "fixed-" + std::to_string(dt);
  }
  return "unknown";
}

namespace {

enum class Targeting { Adaptive, Fixed };

TrajectoryLossReport unroll(DynamicsModel& model, const Trajectory& traj, const TrainConfig& config,
                            std::uint64_t training_step, TrajectoryRng& rng, Targeting targeting,
                            std::size_t dt, bool explore) {
  if (traj.length() < 2) throw ContractError("training needs trajectories with >= 2 frames");
  const std::size_t last = traj.length() - 1;
  const Real mu = (targeting == Targeting::Adaptive && explore)
                      ? exploration_prob(training_step, config.exploration_steps)
                      : Real{0};
  const Real eps = sampling_prob(training_step, config.sampling_steps);

  TrajectoryLossReport report;
  Tensor total;
  Tensor input = traj.frames.front();
  bool input_is_prediction = false;
  std::size_t t = 0;
  for (std::size_t u = 0; t < last; ++u) {
    Tensor prediction = model.forward(input);
    ++report.forward_passes;

    StepRecord rec;
    rec.abstract_step = u;
    rec.source_t = t;
    rec.fed_prediction = input_is_prediction;
    if (targeting == Targeting::Fixed) {
      rec.matched_t = std::min(t + dt, last);
    } else {
      const std::size_t upper = std::min(t + config.horizon, last);
      rec.explored = rng.explore.bernoulli(mu);
      if (rec.explored) {
        rec.matched_t = static_cast<std::size_t>(rng.explore.uniform_int(
            static_cast<std::int64_t>(t + 1), static_cast<std::int64_t>(upper)));
      } else {
        rec.matched_t = temporal_match(prediction, traj, t, config.horizon).matched_t;
      }
    }
    rec.skip = rec.matched_t - t;

    Tensor step_loss = bce_loss(prediction, traj.frames[rec.matched_t]);
    rec.step_loss = step_loss.item();
    total = total.defined() ? add(total, step_loss) : step_loss;
    report.step_records.push_back(rec);

    if (rng.sampling.bernoulli(eps)) {
      input = traj.frames[rec.matched_t];
      input_is_prediction = false;
    } else {
      input = config.bptt == Bptt::Full ? prediction : prediction.detach();
      input_is_prediction = true;
    }
    t = rec.matched_t;
  }
  report.mean_loss = scale(total, Real{1} / static_cast<Real>(report.step_records.size()));
  return report;
}

}  // namespace

TrajectoryLossReport asi_train_trajectory(DynamicsModel& model, const Trajectory& trajectory,
                                          const TrainConfig& config, std::uint64_t training_step,
                                          TrajectoryRng& rng, bool explore) {
  if (config.horizon == 0) throw ContractError("horizon must be >= 1");
  return unroll(model, trajectory, config, training_step, rng, Targeting::Adaptive, 0, explore);
}

TrajectoryLossReport fixed_train_trajectory(DynamicsModel& model, const Trajectory& trajectory,
                                            std::size_t dt, const TrainConfig& config,
                                            std::uint64_t training_step, TrajectoryRng& rng) {
  if (dt == 0) throw ContractError("fixed skip needs dt >= 1");
  return unroll(model, trajectory, config, training_step, rng, Targeting::Fixed, dt, false);
}

TrajectoryLossReport train_trajectory(DynamicsModel& model, const Trajectory& trajectory,
                                      const Method& method, const TrainConfig& config,
                                      std::uint64_t training_step, TrajectoryRng& rng) {
  switch (method.kind) {
    case Method::Kind::Asi:
      return asi_train_trajectory(model, trajectory, config, training_step, rng, true);
    case Method::Kind::AsiNoExplore:
      return asi_train_trajectory(model, trajectory, config, training_step, rng, false);
    case Method::Kind::Fixed:
      return fixed_train_trajectory(model, trajectory, method.dt, config, training_step, rng);
  }
  throw ContractError("unknown method kind");
}

namespace {

using Validator = std::function<void(MetricsRow&)>;

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, stream::kShuffle, epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult train_impl(DynamicsModel& model, const TrainingSchedule& data, const TrainConfig& config,
                       const Method& method, const Validator& validate,
                       const TrainCallbacks& callbacks) {
  if (data.primary == nullptr || data.primary->empty()) {
    throw ContractError("train: empty training dataset");
  }
  if (data.alternate != nullptr && data.alternate->empty()) {
    throw ContractError("train: empty alternate dataset");
  }
  if (config.batch_trajectories == 0 || config.evals_per_epoch == 0) {
    throw ContractError("train: batch_trajectories and evals_per_epoch must be >= 1");
  }

  const auto started = std::chrono::steady_clock::now();
  std::vector<Tensor> params = model.parameter_tensors();
  AdamState adam(params);
  TrainResult result;

  Real loss_sum = 0;
  std::size_t loss_count = 0;
  Real skip_sum = 0;
  std::size_t skip_count = 0;
  std::uint64_t trajectory_counter = 0;
  bool pending_rows = false;  // trained since the last validation

  auto emit = [&](Real epoch) {
    MetricsRow row;
    row.method = method.name();
    row.seed = config.seed;
    row.epoch = epoch;
    row.optimizer_step = result.optimizer_steps;
    row.forward_passes = result.training_forward_passes;
    row.train_loss = loss_count ? loss_sum / static_cast<Real>(loss_count) : Real{0};
    row.mean_skip = skip_count ? skip_sum / static_cast<Real>(skip_count) : Real{0};
    validate(row);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                      .count();
    loss_sum = skip_sum = 0;
    loss_count = skip_count = 0;
    pending_rows = false;
    result.metrics.push_back(row);
    if (callbacks.on_validation) callbacks.on_validation(row);
  };

  auto exhausted = [&] {
    return result.optimizer_steps >= config.max_training_steps ||
           (config.forward_pass_budget != 0 &&
            result.training_forward_passes >= config.forward_pass_budget);
  };

  Real epoch_position = 0;
  for (std::size_t epoch = 0; !exhausted(); ++epoch) {
    const bool switched = data.switch_epoch && data.alternate && epoch >= *data.switch_epoch;
    const auto& dataset = switched ? *data.alternate : *data.primary;
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, dataset);

    const std::size_t n = dataset.size();
    const std::size_t batch = config.batch_trajectories;
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    std::vector<std::size_t> eval_points;
    for (std::size_t j = 1; j <= config.evals_per_epoch; ++j) {
      eval_points.push_back(std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(static_cast<double>(j * steps_per_epoch) /
                                                   static_cast<double>(config.evals_per_epoch)))));
    }
    const auto order = shuffled_order(n, config.seed, epoch);

    for (std::size_t s = 0; s < steps_per_epoch && !exhausted(); ++s) {
      model.zero_grad();
      Tape tape;
      Tensor loss;
      std::vector<TrajectoryLossReport> reports;
      {
        TapeGuard guard(tape);
        Tensor total;
        for (std::size_t b = 0; b < batch && s * batch + b < n; ++b) {
          TrajectoryRng rng = TrajectoryRng::derive(config.seed, trajectory_counter++);
          auto report = train_trajectory(model, dataset[order[s * batch + b]], method, config,
                                         result.optimizer_steps, rng);
          total = total.defined() ? add(total, report.mean_loss) : report.mean_loss;
          reports.push_back(std::move(report));
        }
        loss = scale(total, Real{1} / static_cast<Real>(reports.size()));
      }
      tape.backward(loss);
      adam_step(adam, params, config.lr_schedule.lr_at(result.optimizer_steps));
      ++result.optimizer_steps;

      loss_sum += loss.item();
      ++loss_count;
      for (const auto& r : reports) {
        result.training_forward_passes += r.forward_passes;
        for (const auto& rec : r.step_records) {
          skip_sum += static_cast<Real>(rec.skip);
          ++skip_count;
        }
      }
      pending_rows = true;
      if (callbacks.on_step) callbacks.on_step(result.optimizer_steps, reports);

      epoch_position = static_cast<Real>(epoch) +
                       static_cast<Real>(s + 1) / static_cast<Real>(steps_per_epoch);
      if (std::find(eval_points.begin(), eval_points.end(), s + 1) != eval_points.end()) {
        emit(epoch_position);
      }
    }
  }
  if (pending_rows) emit(epoch_position);
  return result;
}

}  // namespace

TrainResult train(DynamicsModel& model, const TrainingSchedule& data, const TrainConfig& config,
                  const Method& method, const std::vector<Trajectory>& validation, EnvId env,
                  const EnvConfig& env_config, const TrainCallbacks& callbacks) {
  if (validation.empty()) throw ContractError("train: empty validation dataset");
  return train_impl(
      model, data, config, method,
      [&](MetricsRow& row) {
        const EvalReport report =
            evaluate_accuracy(model, validation, env, config.rollout_cap, env_config);
        row.val_accuracy = report.accuracy;
        row.mean_rollout_length = report.mean_rollout_length;
      },
      callbacks);
}

std::vector<SweepRow> skip_sweep(const std::vector<Trajectory>& dataset,
                                 const std::vector<std::size_t>& dts, const TrainConfig& config,
                                 const SweepOptions& options) {
  if (dataset.empty()) throw ContractError("skip_sweep: empty dataset");
  const Shape& s = dataset.front().frames.front().shape();
  const FrameShape frame_shape{s.at(0), s.at(1), s.at(2)};

  std::vector<SweepRow> rows;
  for (std::size_t dt : dts) {
    if (dt == 0) throw ContractError("skip_sweep: every dt must be >= 1");
    TrainConfig cfg = config;
    cfg.forward_pass_budget = options.forward_pass_budget;
    cfg.max_training_steps = std::numeric_limits<std::uint64_t>::max();
    DynamicsModel model = DynamicsModel::build(options.architecture, options.n_kernels, frame_shape,
                                               derive_seed(config.seed, dt));
    const Method method = Method::fixed(dt);
    const TrainingSchedule data{&dataset, nullptr, std::nullopt};
    const TrainResult trained = train_impl(model, data, cfg, method, [](MetricsRow&) {}, {});

    NoGradGuard no_grad;
    Real total = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      TrajectoryRng rng = TrajectoryRng::derive(derive_seed(config.seed, stream::kRetry), i);
      total += fixed_train_trajectory(model, dataset[i], dt, cfg, trained.optimizer_steps, rng)
                   .mean_loss.item();
    }
    SweepRow row;
    row.dt = dt;
    row.mean_loss = total / static_cast<Real>(dataset.size());
    row.rate = row.mean_loss / static_cast<Real>(dt);
    row.forward_passes = trained.training_forward_passes;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace asi
