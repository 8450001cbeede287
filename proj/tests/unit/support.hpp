#pragma once
// Shared fixtures for the unit suites: random tensors, a naive convolution
// oracle and stub frame models for the rollout tests.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "asi/envs.hpp"
#include "asi/random.hpp"
#include "asi/tensor.hpp"

namespace asi::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, Real lo = -1, Real hi = 1) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor random_param(Rng& rng, Shape shape, Real lo = -1, Real hi = 1) {
  Tensor t = random_tensor(rng, std::move(shape), lo, hi);
  t.set_requires_grad(true);
  return t;
}

/// Element-by-element "same" convolution, summed as bias then (c, ky, kx).
inline std::vector<Real> naive_conv(const Tensor& in, const Tensor& k, const Tensor& b,
                                    std::size_t stride) {
  const std::size_t cin = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
  const auto x = in.data();
  const auto kv = k.data();
  std::vector<Real> out(cout * ho * wo);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        Real acc = b.data()[o];
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long y = static_cast<long>(i * stride + ky) - static_cast<long>(kh / 2);
              const long xx = static_cast<long>(j * stride + kx) - static_cast<long>(kw / 2);
              if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += x[(c * h + y) * w + xx] * kv[((o * cin + c) * kh + ky) * kw + kx];
            }
        out[(o * ho + i) * wo + j] = acc;
      }
  return out;
}

inline Real scalar_bce(Real p, Real t, Real eps = 1e-7) {
  p = std::fmin(std::fmax(p, eps), 1 - eps);
  return -(t * std::log(p) + (1 - t) * std::log(1 - p));
}

/// f(x) = x.
struct IdentityModel {
  std::uint64_t calls = 0;
  Tensor forward(const Tensor& frame) {
    ++calls;
    return frame;
  }
};

/// f(x) = 0 everywhere.
struct ZeroModel {
  std::uint64_t calls = 0;
  Tensor forward(const Tensor& frame) {
    ++calls;
    return Tensor::zeros(frame.shape());
  }
};

/// Replays the ground-truth frames of whichever dataset trajectory the
/// rollout started from (recognised by the first frame's storage).
struct ReplayModel {
  const std::vector<Trajectory>* data = nullptr;
  std::size_t current = 0;
  std::size_t index = 0;
  std::uint64_t calls = 0;
  Tensor forward(const Tensor& frame) {
    ++calls;
    for (std::size_t k = 0; k < data->size(); ++k) {
      if ((*data)[k].frames.front().same_storage(frame)) {
        current = k;
        index = 0;
      }
    }
    const auto& frames = (*data)[current].frames;
    index = std::min(index + 1, frames.size() - 1);
    return frames[index];
  }
};

/// Emits the terminal frame of a uniformly drawn label.
struct RandomLabelModel {
  std::map<Label, Tensor> terminals;
  Rng rng{7};
  Tensor forward(const Tensor&) {
    const auto pick = static_cast<Label>(rng.uniform_int(0, static_cast<std::int64_t>(terminals.size()) - 1));
    return terminals.at(pick);
  }
};

}  // namespace asi::testing
