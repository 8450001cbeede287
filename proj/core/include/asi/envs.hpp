#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asi/model.hpp"
#include "asi/tensor.hpp"

namespace asi {

enum class EnvId { FunnelLite, ChainWorld };

std::string_view env_name(EnvId env);
/// Accepts "funnel-lite"/"funnel" and "chain-world"/"chain".
EnvId parse_env(std::string_view name);

using Label = std::uint32_t;

/// Frames are [1, 16, 16] tensors with values in [0, 1].
inline constexpr std::size_t kFrameSize = 16;
inline constexpr FrameShape kFrameShape{1, kFrameSize, kFrameSize};
inline constexpr std::size_t kMaxTrajectoryLength = 64;

inline constexpr Real kBlobIntensity = 1.0;
inline constexpr Real kTraceIntensity = 0.5;
inline constexpr Real kObstacleIntensity = 0.25;
/// Pixels above this count as part of the agent/ball blob.
inline constexpr Real kBlobThreshold = 0.75;

struct FunnelConfig {
  std::size_t obstacle_rows = 3;  // 1..3; the last row always holds a funnel per bin
  std::size_t bins = 3;           // 2..5
  Real bounciness = 0.6;          // wall restitution inside funnels, [0, 1]
  Real jitter = 0.3;              // max horizontal perturbation of upper funnels (px)
};

struct ChainConfig {
  std::size_t segments = 4;       // 1..12
  std::size_t min_duration = 2;   // frames per segment, inclusive range
  std::size_t max_duration = 9;
  std::size_t branches = 3;       // 2..5 terminals
  std::size_t position_noise = 1; // max per-axis jitter (px) of within-segment positions
};

struct EnvConfig {
  FunnelConfig funnel;
  ChainConfig chain;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

struct Trajectory {
  std::vector<Tensor> frames;
  Label label = 0;
  std::optional<EnvId> env;  // unknown for trajectories read back from disk
  std::uint64_t seed = 0;

  std::size_t length() const noexcept { return frames.size(); }
};

/// Deterministic in (config, env, seed). Regenerates with derived seeds when a
/// draw exceeds kMaxTrajectoryLength; NumericError after 8 retries.
Trajectory gen_trajectory(const EnvConfig& config, EnvId env, std::uint64_t seed);

/// Trajectory i uses seed derive_seed(master_seed, stream::kDataset, i).
std::vector<Trajectory> gen_dataset(const EnvConfig& config, EnvId env, std::size_t count,
                                    std::uint64_t master_seed);

/// Hand-specified outcome classifier.
///
/// funnel-lite: bin index when the centroid of blob pixels lies in the bottom
/// two-row landing band. chain-world: index of the terminal region holding the
/// most blob pixels (smallest index on ties). Otherwise nullopt.
std::optional<Label> classify(EnvId env, const Tensor& frame, const EnvConfig& config = {});

/// Number of distinct labels the environment can produce.
std::size_t label_count(EnvId env, const EnvConfig& config = {});

/// Dataset file: "ASITRAJ1", u32 count, then per trajectory u32 label, u32 T,
/// u16 height, u16 width, u8 channels and T*C*H*W f32 values (all LE).
void write_dataset(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);
std::vector<Trajectory> read_dataset(const std::filesystem::path& path);

/// Order-sensitive 64-bit digest of labels and frame values.
std::uint64_t dataset_fingerprint(const std::vector<Trajectory>& trajectories);

}  // namespace asi
