#include "asi/model.hpp"

#include <algorithm>
#include <cmath>

#include "asi/errors.hpp"
#include "asi/ops.hpp"
#include "asi/random.hpp"

namespace asi {

std::string to_string(const FrameShape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

ArchitectureSpec architecture_spec(std::string_view name, std::size_t n_kernels,
                                   std::size_t channels) {
  if (n_kernels == 0 || channels == 0) {
    throw ConfigError("architecture needs positive n_kernels and channels");
  }
  if (name == "asi-conv-7") {
    return {std::string(name),
            {{n_kernels, 5}, {n_kernels, 5}, {n_kernels, 5}, {n_kernels, 7}, {n_kernels, 5},
             {n_kernels, 1}, {channels, 1}},
            5};
  }
  if (name == "small-conv-3") {
    return {std::string(name), {{n_kernels, 3}, {n_kernels, 3}, {channels, 3}}, 2};
  }
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected asi-conv-7 or small-conv-3)");
}

namespace {

std::size_t layer_in_channels(const ArchitectureSpec& spec, std::size_t layer,
                              std::size_t input_channels) {
  std::size_t in = layer == 0 ? input_channels : spec.layers[layer - 1].out_channels;
  if (layer == spec.concat_before) in += input_channels;
  return in;
}

Shape weight_shape(const ArchitectureSpec& spec, std::size_t layer, std::size_t channels) {
  const auto& l = spec.layers[layer];
  return {l.out_channels, layer_in_channels(spec, layer, channels), l.kernel, l.kernel};
}

std::string weight_name(std::size_t layer) { return "conv" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "conv" + std::to_string(layer) + ".bias"; }

}  // namespace

std::size_t parameter_count(const ArchitectureSpec& spec, std::size_t input_channels) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    total += shape_numel(weight_shape(spec, i, input_channels)) + spec.layers[i].out_channels;
  }
  return total;
}

DynamicsModel::DynamicsModel(ArchitectureSpec spec, FrameShape input_shape,
                             std::vector<NamedParameter> params)
    : spec_(std::move(spec)), input_shape_(input_shape), params_(std::move(params)) {}

DynamicsModel DynamicsModel::build(std::string_view architecture, std::size_t n_kernels,
                                   FrameShape input_shape, std::uint64_t seed) {
  ArchitectureSpec spec = architecture_spec(architecture, n_kernels, input_shape.channels);
  std::size_t largest = 0;
  for (const auto& l : spec.layers) largest = std::max(largest, l.kernel);
  if (input_shape.height < largest || input_shape.width < largest) {
    throw DimensionError(spec.name + " needs spatial dims >= " + std::to_string(largest) +
                         ", got " + to_string(input_shape));
  }

  Rng rng(derive_seed(seed, stream::kInit));
  std::vector<NamedParameter> params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    Shape ws = weight_shape(spec, i, input_shape.channels);
    const Real fan_in = static_cast<Real>(ws[1] * ws[2] * ws[3]);
    const Real stddev = std::sqrt(Real{2} / fan_in);
    std::vector<Real> w(shape_numel(ws));
    for (auto& v : w) v = stddev * rng.normal();
    params.push_back({weight_name(i), Tensor::from(std::move(ws), std::move(w))});
    params.push_back({bias_name(i), Tensor::zeros({spec.layers[i].out_channels})});
  }
  for (auto& p : params) p.value.set_requires_grad(true);
  return DynamicsModel(std::move(spec), input_shape, std::move(params));
}

DynamicsModel DynamicsModel::from_parameters(ArchitectureSpec spec, FrameShape input_shape,
                                             std::vector<NamedParameter> parameters) {
  if (parameters.size() != 2 * spec.layers.size()) {
    throw ConfigError(spec.name + " expects " + std::to_string(2 * spec.layers.size()) +
                      " parameter tensors, got " + std::to_string(parameters.size()));
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& w = parameters[2 * i];
    const auto& b = parameters[2 * i + 1];
    if (w.name != weight_name(i) || b.name != bias_name(i)) {
      throw ConfigError("unexpected parameter names '" + w.name + "', '" + b.name + "' for layer " +
                        std::to_string(i));
    }
    const Shape ws = weight_shape(spec, i, input_shape.channels);
    if (w.value.shape() != ws || b.value.shape() != Shape{spec.layers[i].out_channels}) {
      throw DimensionError("layer " + std::to_string(i) + " expects weight " + shape_string(ws) +
                           ", got " + shape_string(w.value.shape()));
    }
  }
  for (auto& p : parameters) p.value.set_requires_grad(true);
  return DynamicsModel(std::move(spec), input_shape, std::move(parameters));
}

Tensor DynamicsModel::forward(const Tensor& frame) {
  if (frame.shape() != input_shape_.as_shape()) {
    throw DimensionError("model expects frame " + shape_string(input_shape_.as_shape()) +
                         ", got " + shape_string(frame.shape()));
  }
  ++forward_passes_;
  Tensor x = frame;
  const std::size_t n = spec_.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i == spec_.concat_before) x = concat_channels(x, frame);
    x = conv2d(x, params_[2 * i].value, params_[2 * i + 1].value, 1);
    x = i + 1 < n ? relu(x) : sigmoid(x);
  }
  return x;
}

std::vector<Tensor> DynamicsModel::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t DynamicsModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void DynamicsModel::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

}  // namespace asi
