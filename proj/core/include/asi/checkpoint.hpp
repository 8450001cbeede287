#pragma once

#include <filesystem>

#include "asi/model.hpp"

namespace asi {

inline constexpr char kCheckpointMagic[8] = {'A', 'S', 'I', 'M', 'O', 'D', 'E', 'L'};

/// Writes "ASIMODEL" followed by one record per parameter:
///   u16 LE name length, UTF-8 name, u8 rank, u32 LE dims, f32 LE values.
/// A leading record named "meta.input_shape" (rank 1, dims {3}) stores C, H, W.
void save_checkpoint(const DynamicsModel& model, const std::filesystem::path& path);

/// Rebuilds a model; the architecture is inferred from the layer records.
DynamicsModel load_checkpoint(const std::filesystem::path& path);

}  // namespace asi
