#include "asi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "asi/errors.hpp"
#include "asi/tape.hpp"

namespace asi {

namespace {

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

/// Records `fn` when a tape is active and some input needs gradients.
Tensor finish(Tensor out, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  for (Real v : out.data()) {
    if (!std::isfinite(v)) throw NumericError("operation produced a non-finite value");
  }
  Tape* tape = Tape::active();
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (tape != nullptr && needs) {
    out.impl()->requires_grad = true;
    out.impl()->is_leaf = false;
    tape->record(std::move(inputs), out, std::move(fn));
  }
  return out;
}

/// Gradient buffer of `impl`, allocated on first use.
std::vector<Real>& grad_of(const ImplPtr& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), Real{0});
  return impl->grad;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

using Vec4 = Real __attribute__((vector_size(4 * sizeof(Real))));

inline Vec4 load4(const Real* p) {
  Vec4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

/// Stride-1 forward for 16-wide rows: each output row stays in registers
/// across all taps. Per-element accumulation order matches the generic loop.
void conv_rows16(const Real* pad, const Real* k, const Real* b, Real* o, std::size_t cin,
                 std::size_t cout, std::size_t kh, std::size_t kw, std::size_t ho, std::size_t hp,
                 std::size_t wp) {
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t y = 0; y < ho; ++y) {
      Vec4 a0 = {b[co], b[co], b[co], b[co]};
      Vec4 a1 = a0, a2 = a0, a3 = a0;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const Real* kern = k + (co * cin + ci) * kh * kw;
        const Real* iplane = pad + ci * hp * wp;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const Real* irow = iplane + (y + ky) * wp;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const Real wt = kern[ky * kw + kx];
            const Real* r = irow + kx;
            a0 += wt * load4(r);
            a1 += wt * load4(r + 4);
            a2 += wt * load4(r + 8);
            a3 += wt * load4(r + 12);
          }
        }
      }
      Real* dst = o + (co * ho + y) * 16;
      std::memcpy(dst, &a0, sizeof a0);
      std::memcpy(dst + 4, &a1, sizeof a1);
      std::memcpy(dst + 8, &a2, sizeof a2);
      std::memcpy(dst + 12, &a3, sizeof a3);
    }
  }
}

Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real{1} / (Real{1} + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  require_rank(bias, 1, "conv2d bias");
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");

  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv2d: kernels axis 1 (C_in=" + std::to_string(kernels.dim(1)) +
                         ") != input axis 0 (C=" + std::to_string(cin) + ")");
  }
  if (bias.dim(0) != cout) {
    throw DimensionError("conv2d: bias axis 0 (" + std::to_string(bias.dim(0)) +
                         ") != kernels axis 0 (C_out=" + std::to_string(cout) + ")");
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw DimensionError("conv2d: same padding needs odd kernel axes 2,3, got " +
                         std::to_string(kh) + "x" + std::to_string(kw));
  }

  const std::size_t ph = kh / 2, pw = kw / 2;
  const std::size_t hp = h + 2 * ph, wp = w + 2 * pw;
  const std::size_t ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;

  // Zero-padded copy of the input so the tap loops run without bounds checks.
  auto padded = std::make_shared<std::vector<Real>>(cin * hp * wp, Real{0});
  {
    const auto in = input.data();
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(&in[(c * h + y) * w], w, &(*padded)[(c * hp + y + ph) * wp + pw]);
  }

  Tensor out = Tensor::zeros({cout, ho, wo});
  {
    auto o = out.mutable_data();
    const auto k = kernels.data();
    const auto b = bias.data();
    const Real* pad = padded->data();
    if (stride == 1 && wo == 16) {
      conv_rows16(pad, k.data(), b.data(), o.data(), cin, cout, kh, kw, ho, hp, wp);
    } else {
    for (std::size_t co = 0; co < cout; ++co) {
      Real* oplane = &o[co * ho * wo];
      std::fill_n(oplane, ho * wo, b[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const Real* iplane = pad + ci * hp * wp;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const Real wt = k[((co * cin + ci) * kh + ky) * kw + kx];
            for (std::size_t y = 0; y < ho; ++y) {
              const Real* irow = iplane + (y * stride + ky) * wp + kx;
              Real* orow = oplane + y * wo;
              if (stride == 1) {
                for (std::size_t x = 0; x < wo; ++x) orow[x] += wt * irow[x];
              } else {
                for (std::size_t x = 0; x < wo; ++x) orow[x] += wt * irow[x * stride];
              }
            }
          }
        }
      }
    }
    }
  }

  ImplPtr in_i = input.impl(), k_i = kernels.impl(), b_i = bias.impl();
  return finish(std::move(out), {input, kernels, bias},
                [=](std::span<const Real> g) {
                  const Real* pad = padded->data();
                  if (b_i->requires_grad) {
                    auto& gb = grad_of(b_i);
                    for (std::size_t co = 0; co < cout; ++co) {
                      Real s = 0;
                      for (std::size_t i = 0; i < ho * wo; ++i) s += g[co * ho * wo + i];
                      gb[co] += s;
                    }
                  }
                  const bool fast = stride == 1 && wo == 16;
                  if (k_i->requires_grad && fast) {
                    auto& gk = grad_of(k_i);
                    for (std::size_t co = 0; co < cout; ++co) {
                      const Real* gplane = &g[co * ho * wo];
                      for (std::size_t ci = 0; ci < cin; ++ci) {
                        const Real* iplane = pad + ci * hp * wp;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                          for (std::size_t kx = 0; kx < kw; ++kx) {
                            Vec4 acc = {0, 0, 0, 0};
                            for (std::size_t y = 0; y < ho; ++y) {
                              const Real* r = iplane + (y + ky) * wp + kx;
                              const Real* gr = gplane + y * 16;
                              acc += load4(gr) * load4(r) + load4(gr + 4) * load4(r + 4) +
                                     load4(gr + 8) * load4(r + 8) + load4(gr + 12) * load4(r + 12);
                            }
                            gk[((co * cin + ci) * kh + ky) * kw + kx] += acc[0] + acc[1] + acc[2] + acc[3];
                          }
                        }
                      }
                    }
                  } else if (k_i->requires_grad) {
                    auto& gk = grad_of(k_i);
                    // Per-column partial sums keep the inner loop vectorizable.
                    std::vector<Real> acc(wo);
                    for (std::size_t co = 0; co < cout; ++co) {
                      const Real* gplane = &g[co * ho * wo];
                      for (std::size_t ci = 0; ci < cin; ++ci) {
                        const Real* iplane = pad + ci * hp * wp;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                          for (std::size_t kx = 0; kx < kw; ++kx) {
                            std::fill(acc.begin(), acc.end(), Real{0});
                            for (std::size_t y = 0; y < ho; ++y) {
                              const Real* irow = iplane + (y * stride + ky) * wp + kx;
                              const Real* grow = gplane + y * wo;
                              if (stride == 1) {
                                for (std::size_t x = 0; x < wo; ++x) acc[x] += grow[x] * irow[x];
                              } else {
                                for (std::size_t x = 0; x < wo; ++x) acc[x] += grow[x] * irow[x * stride];
                              }
                            }
                            Real s = 0;
                            for (Real v : acc) s += v;
                            gk[((co * cin + ci) * kh + ky) * kw + kx] += s;
                          }
                        }
                      }
                    }
                  }
                  if (in_i->requires_grad && fast && h == 16) {
                    // Full correlation of the padded output gradient with the
                    // transposed, flipped kernels.
                    std::vector<Real> gp(cout * hp * wp, Real{0});
                    for (std::size_t co = 0; co < cout; ++co)
                      for (std::size_t y = 0; y < ho; ++y)
                        std::copy_n(&g[(co * ho + y) * wo], wo, &gp[(co * hp + y + ph) * wp + pw]);
                    const auto& k = k_i->data;
                    std::vector<Real> flipped(k.size());
                    for (std::size_t co = 0; co < cout; ++co)
                      for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                          for (std::size_t kx = 0; kx < kw; ++kx)
                            flipped[((ci * cout + co) * kh + kh - 1 - ky) * kw + kw - 1 - kx] =
                                k[((co * cin + ci) * kh + ky) * kw + kx];
                    const std::vector<Real> zero(cin, Real{0});
                    std::vector<Real> gin(cin * h * w);
                    conv_rows16(gp.data(), flipped.data(), zero.data(), gin.data(), cout, cin, kh, kw,
                                h, hp, wp);
                    auto& gi = grad_of(in_i);
                    for (std::size_t i = 0; i < gin.size(); ++i) gi[i] += gin[i];
                  } else if (in_i->requires_grad) {
                    std::vector<Real> gpad(cin * hp * wp, Real{0});
                    const auto& k = k_i->data;
                    for (std::size_t co = 0; co < cout; ++co) {
                      const Real* gplane = &g[co * ho * wo];
                      for (std::size_t ci = 0; ci < cin; ++ci) {
                        Real* gip = gpad.data() + ci * hp * wp;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                          for (std::size_t kx = 0; kx < kw; ++kx) {
                            const Real wt = k[((co * cin + ci) * kh + ky) * kw + kx];
                            for (std::size_t y = 0; y < ho; ++y) {
                              Real* irow = gip + (y * stride + ky) * wp + kx;
                              const Real* grow = gplane + y * wo;
                              if (stride == 1) {
                                for (std::size_t x = 0; x < wo; ++x) irow[x] += wt * grow[x];
                              } else {
                                for (std::size_t x = 0; x < wo; ++x) irow[x * stride] += wt * grow[x];
                              }
                            }
                          }
                        }
                      }
                    }
                    auto& gi = grad_of(in_i);
                    for (std::size_t c = 0; c < cin; ++c)
                      for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t x = 0; x < w; ++x)
                          gi[(c * h + y) * w + x] += gpad[(c * hp + y + ph) * wp + x + pw];
                  }
                });
}

Tensor activation(const Tensor& input, Activation kind) {
  Tensor out = Tensor::zeros(input.shape());
  const auto in = input.data();
  auto o = out.mutable_data();
  if (kind == Activation::Relu) {
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0 ? in[i] : Real{0};
  } else {
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = sigmoid_scalar(in[i]);
  }
  ImplPtr in_i = input.impl(), out_i = out.impl();
  std::weak_ptr<detail::TensorImpl> out_w = out_i;
  return finish(std::move(out), {input}, [in_i, out_w, kind](std::span<const Real> g) {
    auto& gi = grad_of(in_i);
    if (kind == Activation::Relu) {
      const auto& x = in_i->data;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0) gi[i] += g[i];
    } else {
      const auto& s = out_w.lock()->data;
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * s[i] * (Real{1} - s[i]);
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels lhs");
  require_rank(b, 3, "concat_channels rhs");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_channels: spatial mismatch on axes 1,2: " +
                         shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const std::size_t na = a.numel();
  std::vector<Real> values(a.data().begin(), a.data().end());
  values.insert(values.end(), b.data().begin(), b.data().end());
  Tensor out = Tensor::from({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(values));
  ImplPtr a_i = a.impl(), b_i = b.impl();
  return finish(std::move(out), {a, b}, [a_i, b_i, na](std::span<const Real> g) {
    if (a_i->requires_grad) {
      auto& ga = grad_of(a_i);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (b_i->requires_grad) {
      auto& gb = grad_of(b_i);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 3, "slice_channels input");
  if (begin >= end || end > x.dim(0)) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for axis 0 of " +
                         shape_string(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  const auto src = x.data();
  std::vector<Real> values(src.begin() + begin * plane, src.begin() + end * plane);
  Tensor out = Tensor::from({end - begin, x.dim(1), x.dim(2)}, std::move(values));
  ImplPtr x_i = x.impl();
  const std::size_t offset = begin * plane;
  return finish(std::move(out), {x}, [x_i, offset](std::span<const Real> g) {
    auto& gx = grad_of(x_i);
    for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
  });
}

Real bce_value(std::span<const Real> prediction, std::span<const Real> target, Real clip_eps) {
  Real total = 0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const Real p = std::clamp(prediction[i], clip_eps, Real{1} - clip_eps);
    const Real t = target[i];
    total -= t * std::log(p) + (Real{1} - t) * std::log(Real{1} - p);
  }
  return total / static_cast<Real>(prediction.size());
}

Tensor bce_loss(const Tensor& prediction, const Tensor& target, Real clip_eps) {
  require_same_shape(prediction, target, "bce_loss");
  Tensor out = Tensor::scalar(bce_value(prediction.data(), target.data(), clip_eps));
  ImplPtr p_i = prediction.impl();
  std::vector<Real> t(target.data().begin(), target.data().end());
  return finish(std::move(out), {prediction},
                [p_i, t = std::move(t), clip_eps](std::span<const Real> g) {
                  auto& gp = grad_of(p_i);
                  const auto& p = p_i->data;
                  const Real scale = g[0] / static_cast<Real>(p.size());
                  for (std::size_t i = 0; i < p.size(); ++i) {
                    if (p[i] <= clip_eps || p[i] >= Real{1} - clip_eps) continue;
                    gp[i] += scale * (p[i] - t[i]) / (p[i] * (Real{1} - p[i]));
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  ImplPtr a_i = a.impl(), b_i = b.impl();
  return finish(std::move(out), {a, b}, [a_i, b_i](std::span<const Real> g) {
    for (const auto& impl : {a_i, b_i}) {
      if (!impl->requires_grad) continue;
      auto& gi = grad_of(impl);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  ImplPtr a_i = a.impl(), b_i = b.impl();
  return finish(std::move(out), {a, b}, [a_i, b_i](std::span<const Real> g) {
    if (a_i->requires_grad) {
      auto& ga = grad_of(a_i);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b_i->data[i];
    }
    if (b_i->requires_grad) {
      auto& gb = grad_of(b_i);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a_i->data[i];
    }
  });
}

Tensor scale(const Tensor& x, Real factor) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  const auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] * factor;
  ImplPtr x_i = x.impl();
  return finish(std::move(out), {x}, [x_i, factor](std::span<const Real> g) {
    auto& gx = grad_of(x_i);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  ImplPtr x_i = x.impl();
  return finish(Tensor::scalar(s), {x}, [x_i](std::span<const Real> g) {
    auto& gx = grad_of(x_i);
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  const Real n = static_cast<Real>(x.numel());
  ImplPtr x_i = x.impl();
  return finish(Tensor::scalar(s / n), {x}, [x_i, n](std::span<const Real> g) {
    auto& gx = grad_of(x_i);
    for (auto& v : gx) v += g[0] / n;
  });
}

}  // namespace asi
