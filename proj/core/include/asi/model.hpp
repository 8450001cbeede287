#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "asi/tensor.hpp"

namespace asi {

/// Channel-first frame dimensions.
struct FrameShape {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;

  Shape as_shape() const { return {channels, height, width}; }
  std::size_t numel() const { return channels * height * width; }
  friend bool operator==(const FrameShape&, const FrameShape&) = default;
};

std::string to_string(const FrameShape& shape);

struct ConvLayerSpec {
  std::size_t out_channels;
  std::size_t kernel;
};

/// Layer list of a convolutional dynamics model. The raw model input is
/// concatenated to the feature map right before layer `concat_before`.
/// ReLU follows every layer but the last, which is followed by a sigmoid.
struct ArchitectureSpec {
  std::string name;
  std::vector<ConvLayerSpec> layers;
  std::size_t concat_before = 0;
};

/// "asi-conv-7" or "small-conv-3"; throws ConfigError for anything else.
ArchitectureSpec architecture_spec(std::string_view name, std::size_t n_kernels,
                                   std::size_t channels);

struct NamedParameter {
  std::string name;
  Tensor value;
};

/// Differentiable map from a frame to the predicted next (abstract) frame.
class DynamicsModel {
 public:
  /// He-normal weights (std = sqrt(2 / fan_in)), zero biases, seeded.
  static DynamicsModel build(std::string_view architecture, std::size_t n_kernels,
                             FrameShape input_shape, std::uint64_t seed);

  /// Assembles a model around existing parameters (checkpoint loading).
  /// Parameter names and shapes must match the architecture exactly.
  static DynamicsModel from_parameters(ArchitectureSpec spec, FrameShape input_shape,
                                       std::vector<NamedParameter> parameters);

  /// One application of f. Values of the result lie in (0, 1).
  Tensor forward(const Tensor& frame);

  const ArchitectureSpec& architecture() const noexcept { return spec_; }
  const FrameShape& input_shape() const noexcept { return input_shape_; }
  std::size_t n_kernels() const noexcept { return spec_.layers.front().out_channels; }

  std::vector<NamedParameter>& parameters() noexcept { return params_; }
  const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Number of forward() calls made on this instance.
  std::uint64_t forward_passes() const noexcept { return forward_passes_; }

 private:
  DynamicsModel(ArchitectureSpec spec, FrameShape input_shape, std::vector<NamedParameter> params);

  ArchitectureSpec spec_;
  FrameShape input_shape_;
  std::vector<NamedParameter> params_;  // weight, bias per layer
  std::uint64_t forward_passes_ = 0;
};

/// Closed-form parameter count of an architecture.
std::size_t parameter_count(const ArchitectureSpec& spec, std::size_t input_channels);

}  // namespace asi
