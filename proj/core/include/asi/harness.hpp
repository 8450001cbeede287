#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asi/envs.hpp"
#include "asi/train.hpp"

namespace asi {

/// Everything one `train` invocation needs. Unset paths mean "generate".
struct ExperimentConfig {
  EnvId env = EnvId::ChainWorld;
  EnvConfig env_config;
  Method method = Method::asi();
  TrainConfig train = desk_train_config();
  std::string architecture = "small-conv-3";
  std::size_t n_kernels = 8;
  std::size_t n_train = 200;
  std::size_t n_valid = 200;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out_dir = "runs";
  std::filesystem::path train_data;
  std::filesystem::path valid_data;
  std::filesystem::path alternate_data;
  std::optional<std::size_t> switch_epoch;
  bool save_checkpoints = true;

  /// H=8, lr 1e-3 dropping at 2/3 of max_training_steps, and both schedule
  /// lengths at one third of max_training_steps.
  static TrainConfig desk_train_config(std::uint64_t max_training_steps = 6000);

  /// ConfigError on out-of-range values or a switch without alternate data.
  void validate() const;
};

/// Flat JSON object; keys are listed by config_keys(). `overrides` are
/// (key, command-line text) pairs applied on top, one for one; text is read
/// as the key's type ("8", "asi", "1,2,3" for seeds). Keys not given fall
/// back to desk defaults, with exploration_k, sampling_k and lr_decay_step
/// derived from max_training_steps. Unknown keys and ill-typed values raise
/// ConfigError naming the key.
ExperimentConfig parse_experiment_config(
    std::string_view json_text, const std::vector<std::pair<std::string, std::string>>& overrides = {});
ExperimentConfig load_experiment_config(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Known keys in documentation order, with a one-line description each.
const std::vector<std::pair<std::string, std::string>>& config_keys();

// ------------------------------------------------------------------- metrics

inline constexpr std::string_view kMetricsHeader =
    "method,seed,epoch,optimizer_step,forward_passes,train_loss,val_accuracy,mean_skip,wall_ms";

std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
/// Parses a file written by write_metrics_csv. FormatError on a bad header or row.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// Stable sort by (method, seed, optimizer_step): the shard merge order.
void merge_metrics(std::vector<MetricsRow>& rows);

// -------------------------------------------------------------------- runner

struct ExperimentData {
  std::vector<Trajectory> train;
  std::vector<Trajectory> valid;
  std::vector<Trajectory> alternate;  // empty unless a switch is configured
};

/// Reads configured dataset files or generates the splits from `seed`.
ExperimentData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

struct RunOutput {
  std::uint64_t seed = 0;
  TrainResult result;
  std::vector<std::string> log;  // "epoch <e> train_fingerprint <hex>" lines
  std::optional<DynamicsModel> model;
};

/// One seed: data, fresh model, training. Does not touch the filesystem
/// beyond reading configured datasets.
RunOutput run_seed(const ExperimentConfig& config, std::uint64_t seed,
                   const TrainCallbacks& extra_callbacks = {});

struct ExperimentResult {
  std::vector<MetricsRow> metrics;  // merged
  std::vector<RunOutput> runs;      // in seed order
};

/// Runs every configured seed on up to `threads` workers, merges the shards,
/// and writes metrics.csv, <method>_s<seed>.log and (optionally)
/// <method>_s<seed>.asimodel into out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t threads);

/// Worker bound from ASI_THREADS, else the hardware concurrency (min 1).
std::size_t worker_threads_from_env();

// ----------------------------------------------------------------- gradcheck

struct GradCheckEntry {
  std::string name;
  Real max_relative_error = 0;
  std::size_t coordinates = 0;
};

/// Central-difference checks of every differentiable op and of the full
/// small-conv-3 and asi-conv-7 losses on random inputs drawn from `seed`.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed, Real step = 1e-5);

}  // namespace asi
