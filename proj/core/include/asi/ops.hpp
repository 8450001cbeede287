#pragma once

#include <cstddef>
#include <span>

#include "asi/tensor.hpp"

namespace asi {

inline constexpr Real kBceClipEps = 1e-7;

enum class Activation { Relu, Sigmoid };

/// 2-D convolution with "same" padding over a single [C_in, H, W] sample.
///
/// kernels: [C_out, C_in, kh, kw] with odd kh and kw; bias: [C_out].
/// Output: [C_out, ceil(H / stride), ceil(W / stride)]. Each output value is
/// bias[o] followed by the taps accumulated in (c_in, ky, kx) order.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride = 1);

Tensor activation(const Tensor& input, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }

/// Stacks b's channels after a's; spatial dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, end) of a [C, H, W] tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

/// Mean pixel-wise binary cross entropy. The prediction is clipped into
/// [clip_eps, 1 - clip_eps] before the logs; the target is a constant.
Tensor bce_loss(const Tensor& prediction, const Tensor& target, Real clip_eps = kBceClipEps);

/// Untaped BCE on raw values. bce_loss uses the same routine, so values agree
/// bit for bit.
Real bce_value(std::span<const Real> prediction, std::span<const Real> target,
               Real clip_eps = kBceClipEps);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace asi
