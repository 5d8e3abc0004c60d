#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rangeseg/error.hpp"
#include "rangeseg/tensor.hpp"

namespace rangeseg {

// ---------------------------------------------------------------------------
// Elementwise kernels
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > Scalar(0) ? x[i] : Scalar(0);
  return y;
}

/// d(relu)/dx evaluated at the pre-activation; the kink at 0 takes slope 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& pre, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx(pre.shape());
  for (std::size_t i = 0; i < pre.size(); ++i)
    gx[i] = pre[i] > Scalar(0) ? gy[i] : Scalar(0);
  return gx;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = Scalar(1) / (Scalar(1) + std::exp(-x[i]));
  return y;
}

/// Takes the forward output y = sigmoid(x), not the input.
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& gy) {
  Tensor<Scalar> gx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (Scalar(1) - y[i]);
  return gx;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("add: shape " + Tensor<Scalar>::shape_string(a.shape()) +
                         " vs " + Tensor<Scalar>::shape_string(b.shape()));
  }
  Tensor<Scalar> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename Scalar>
Tensor<Scalar> hadamard(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("hadamard: shape " + Tensor<Scalar>::shape_string(a.shape()) +
                         " vs " + Tensor<Scalar>::shape_string(b.shape()));
  }
  Tensor<Scalar> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

// ---------------------------------------------------------------------------
// linear: y = x W + b over the last axis
// ---------------------------------------------------------------------------

/// x: [*, Cin], weight: [Cin, Cout], bias: [Cout] -> [*, Cout].
/// Each output row is accumulated independently in a fixed order, so row
/// permutations of x permute the output rows bit-exactly.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  if (x.rank() < 1 || weight.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("linear: x rank " + std::to_string(x.rank()) +
                         ", weight rank " + std::to_string(weight.rank()));
  }
  const std::size_t cin = x.shape().back();
  const std::size_t cout = weight.extent(1);
  if (weight.extent(0) != cin || bias.extent(0) != cout) {
    throw DimensionError("linear: x[*," + std::to_string(cin) + "] x weight " +
                         Tensor<Scalar>::shape_string(weight.shape()) + " + bias " +
                         Tensor<Scalar>::shape_string(bias.shape()));
  }
  typename Tensor<Scalar>::Shape out_shape = x.shape();
  out_shape.back() = cout;
  Tensor<Scalar> y(out_shape);
  const std::size_t rows = cin ? x.size() / cin : 0;
  const Scalar* xp = x.data();
  const Scalar* wp = weight.data();
  const Scalar* bp = bias.data();
  Scalar* yp = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    Scalar* yr = yp + r * cout;
    for (std::size_t c = 0; c < cout; ++c) yr[c] = bp[c];
    const Scalar* xr = xp + r * cin;
    for (std::size_t k = 0; k < cin; ++k) {
      const Scalar xv = xr[k];
      const Scalar* wk = wp + k * cout;
      for (std::size_t c = 0; c < cout; ++c) yr[c] += xv * wk[c];
    }
  }
  return y;
}

template <typename Scalar>
struct LinearGrad {
  Tensor<Scalar> gx;
  Tensor<Scalar> gweight;
  Tensor<Scalar> gbias;
};

template <typename Scalar>
LinearGrad<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                   const Tensor<Scalar>& gy) {
  const std::size_t cin = x.shape().back();
  const std::size_t cout = weight.extent(1);
  const std::size_t rows = cin ? x.size() / cin : 0;
  LinearGrad<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(weight.shape()),
                       Tensor<Scalar>({cout})};
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* xr = x.data() + r * cin;
    const Scalar* gyr = gy.data() + r * cout;
    Scalar* gxr = g.gx.data() + r * cin;
    for (std::size_t c = 0; c < cout; ++c) g.gbias[c] += gyr[c];
    for (std::size_t k = 0; k < cin; ++k) {
      const Scalar* wk = weight.data() + k * cout;
      Scalar* gwk = g.gweight.data() + k * cout;
      Scalar acc = 0;
      for (std::size_t c = 0; c < cout; ++c) {
        acc += gyr[c] * wk[c];
        gwk[c] += xr[k] * gyr[c];
      }
      gxr[k] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation over HWC images
// ---------------------------------------------------------------------------

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t dilation, std::size_t padding) {
  const std::size_t eff = (k - 1) * dilation + 1;
  if (in + 2 * padding < eff) {
    throw DimensionError("conv2d: effective kernel extent " + std::to_string(eff) +
                         " exceeds padded input extent " +
                         std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - eff) / stride + 1;
}

namespace detail {

/// Lay out input patches as a [OH*OW, k*k*Cin] row-major matrix; zero padding.
template <typename Scalar>
Tensor<Scalar> im2col(const Tensor<Scalar>& x, std::size_t k, std::size_t stride,
                      std::size_t dilation, std::size_t padding, std::size_t oh,
                      std::size_t ow) {
  const std::size_t h = x.extent(0), w = x.extent(1), cin = x.extent(2);
  Tensor<Scalar> cols({oh * ow, k * k * cin});
  Scalar* cp = cols.data();
  for (std::size_t oi = 0; oi < oh; ++oi) {
    const std::ptrdiff_t base_i = static_cast<std::ptrdiff_t>(oi * stride) -
                                  static_cast<std::ptrdiff_t>(padding);
    for (std::size_t oj = 0; oj < ow; ++oj) {
      const std::ptrdiff_t base_j = static_cast<std::ptrdiff_t>(oj * stride) -
                                    static_cast<std::ptrdiff_t>(padding);
      for (std::size_t ki = 0; ki < k; ++ki) {
        const std::ptrdiff_t ii = base_i + static_cast<std::ptrdiff_t>(ki * dilation);
        for (std::size_t kj = 0; kj < k; ++kj) {
          const std::ptrdiff_t jj = base_j + static_cast<std::ptrdiff_t>(kj * dilation);
          if (ii >= 0 && ii < static_cast<std::ptrdiff_t>(h) && jj >= 0 &&
              jj < static_cast<std::ptrdiff_t>(w)) {
            const Scalar* src = x.data() + (static_cast<std::size_t>(ii) * w +
                                            static_cast<std::size_t>(jj)) *
                                               cin;
            std::copy(src, src + cin, cp);
          }
          cp += cin;
        }
      }
    }
  }
  return cols;
}

}  // namespace detail

/// x: [H,W,Cin], kernel: [k,k,Cin,Cout] -> [H',W',Cout].
/// Cross-correlation (no kernel flip), zero padding.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                      std::size_t stride = 1, std::size_t dilation = 1,
                      std::size_t padding = 0) {
  if (x.rank() != 3 || kernel.rank() != 4) {
    throw DimensionError("conv2d: x rank " + std::to_string(x.rank()) +
                         ", kernel rank " + std::to_string(kernel.rank()));
  }
  if (kernel.extent(0) != kernel.extent(1)) {
    throw DimensionError("conv2d: kernel must be square, got " +
                         Tensor<Scalar>::shape_string(kernel.shape()));
  }
  const std::size_t k = kernel.extent(0);
  const std::size_t cin = kernel.extent(2), cout = kernel.extent(3);
  if (x.extent(2) != cin) {
    throw DimensionError("conv2d: input channels " + std::to_string(x.extent(2)) +
                         " vs kernel channels " + std::to_string(cin));
  }
  const std::size_t oh = conv_out_extent(x.extent(0), k, stride, dilation, padding);
  const std::size_t ow = conv_out_extent(x.extent(1), k, stride, dilation, padding);
  Tensor<Scalar> cols = detail::im2col(x, k, stride, dilation, padding, oh, ow);
  Tensor<Scalar> y({oh, ow, cout});
  // [OH*OW, k*k*Cin] x [k*k*Cin, Cout]; the kernel's natural 2D view.
  y.matrix_view(oh * ow, cout).noalias() =
      cols.matrix_view(oh * ow, k * k * cin) * kernel.matrix_view(k * k * cin, cout);
  return y;
}

template <typename Scalar>
struct Conv2dGrad {
  Tensor<Scalar> gx;
  Tensor<Scalar> gkernel;
};

template <typename Scalar>
Conv2dGrad<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                                   std::size_t stride, std::size_t dilation,
                                   std::size_t padding, const Tensor<Scalar>& gy) {
  const std::size_t k = kernel.extent(0);
  const std::size_t cin = kernel.extent(2), cout = kernel.extent(3);
  const std::size_t oh = gy.extent(0), ow = gy.extent(1);
  const std::size_t h = x.extent(0), w = x.extent(1);
  Tensor<Scalar> cols = detail::im2col(x, k, stride, dilation, padding, oh, ow);
  Conv2dGrad<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(kernel.shape())};
  g.gkernel.matrix_view(k * k * cin, cout).noalias() =
      cols.matrix_view(oh * ow, k * k * cin).transpose() *
      gy.matrix_view(oh * ow, cout);
  Tensor<Scalar> gcols({oh * ow, k * k * cin});
  gcols.matrix_view(oh * ow, k * k * cin).noalias() =
      gy.matrix_view(oh * ow, cout) * kernel.matrix_view(k * k * cin, cout).transpose();
  // col2im scatter-add
  const Scalar* cp = gcols.data();
  for (std::size_t oi = 0; oi < oh; ++oi) {
    const std::ptrdiff_t base_i = static_cast<std::ptrdiff_t>(oi * stride) -
                                  static_cast<std::ptrdiff_t>(padding);
    for (std::size_t oj = 0; oj < ow; ++oj) {
      const std::ptrdiff_t base_j = static_cast<std::ptrdiff_t>(oj * stride) -
                                    static_cast<std::ptrdiff_t>(padding);
      for (std::size_t ki = 0; ki < k; ++ki) {
        const std::ptrdiff_t ii = base_i + static_cast<std::ptrdiff_t>(ki * dilation);
        for (std::size_t kj = 0; kj < k; ++kj) {
          const std::ptrdiff_t jj = base_j + static_cast<std::ptrdiff_t>(kj * dilation);
          if (ii >= 0 && ii < static_cast<std::ptrdiff_t>(h) && jj >= 0 &&
              jj < static_cast<std::ptrdiff_t>(w)) {
            Scalar* dst = g.gx.data() + (static_cast<std::size_t>(ii) * w +
                                         static_cast<std::size_t>(jj)) *
                                            cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += cp[c];
          }
          cp += cin;
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

/// Numerically stable softmax along the given axis.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of rank " +
                         std::to_string(x.rank()));
  }
  const std::size_t n = x.extent(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= x.extent(a);
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.extent(a);
  Tensor<Scalar> y(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Scalar m = x[base];
      for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[base + i * inner]);
      Scalar sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Scalar e = std::exp(x[base + i * inner] - m);
        y[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < n; ++i) y[base + i * inner] /= sum;
    }
  }
  return y;
}

/// Takes the forward output y = softmax(x, axis).
template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& gy,
                                std::size_t axis) {
  const std::size_t n = y.extent(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= y.extent(a);
  for (std::size_t a = axis + 1; a < y.rank(); ++a) inner *= y.extent(a);
  Tensor<Scalar> gx(y.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Scalar dot = 0;
      for (std::size_t i = 0; i < n; ++i)
        dot += gy[base + i * inner] * y[base + i * inner];
      for (std::size_t i = 0; i < n; ++i)
        gx[base + i * inner] = y[base + i * inner] * (gy[base + i * inner] - dot);
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// channel norm (inference-mode statistics) and fused norm+relu
// ---------------------------------------------------------------------------

inline constexpr double kNormEps = 1e-5;

/// Affine per-channel normalization over the last axis:
///   y = scale * (x - running_mean) / sqrt(running_var + eps) + shift.
template <typename Scalar>
Tensor<Scalar> channel_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& scale,
                            const Tensor<Scalar>& shift, const Tensor<Scalar>& running_mean,
                            const Tensor<Scalar>& running_var) {
  const std::size_t c = x.shape().back();
  if (scale.size() != c || shift.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw DimensionError("channel_norm: parameter extents do not match channels " +
                         std::to_string(c));
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (!(running_var[i] > Scalar(0))) {
      throw ValueError("channel_norm: non-positive running variance at channel " +
                       std::to_string(i));
    }
  }
  std::vector<Scalar> inv(c);
  for (std::size_t i = 0; i < c; ++i)
    inv[i] = Scalar(1) / std::sqrt(running_var[i] + Scalar(kNormEps));
  Tensor<Scalar> y(x.shape());
  const std::size_t rows = c ? x.size() / c : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* xr = x.data() + r * c;
    Scalar* yr = y.data() + r * c;
    for (std::size_t i = 0; i < c; ++i)
      yr[i] = scale[i] * (xr[i] - running_mean[i]) * inv[i] + shift[i];
  }
  return y;
}

template <typename Scalar>
struct ChannelNormGrad {
  Tensor<Scalar> gx;
  Tensor<Scalar> gscale;
  Tensor<Scalar> gshift;
};

/// Gradients w.r.t. input and the learnable scale/shift; running statistics
/// are buffers, not parameters.
template <typename Scalar>
ChannelNormGrad<Scalar> channel_norm_backward(const Tensor<Scalar>& x,
                                              const Tensor<Scalar>& scale,
                                              const Tensor<Scalar>& running_mean,
                                              const Tensor<Scalar>& running_var,
                                              const Tensor<Scalar>& gy) {
  const std::size_t c = x.shape().back();
  std::vector<Scalar> inv(c);
  for (std::size_t i = 0; i < c; ++i)
    inv[i] = Scalar(1) / std::sqrt(running_var[i] + Scalar(kNormEps));
  ChannelNormGrad<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>({c}),
                            Tensor<Scalar>({c})};
  const std::size_t rows = c ? x.size() / c : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* xr = x.data() + r * c;
    const Scalar* gyr = gy.data() + r * c;
    Scalar* gxr = g.gx.data() + r * c;
    for (std::size_t i = 0; i < c; ++i) {
      gxr[i] = gyr[i] * scale[i] * inv[i];
      g.gscale[i] += gyr[i] * (xr[i] - running_mean[i]) * inv[i];
      g.gshift[i] += gyr[i];
    }
  }
  return g;
}

/// Inference-mode normalization followed by ReLU.
template <typename Scalar>
Tensor<Scalar> norm_act(const Tensor<Scalar>& x, const Tensor<Scalar>& scale,
                        const Tensor<Scalar>& shift, const Tensor<Scalar>& running_mean,
                        const Tensor<Scalar>& running_var) {
  return relu(channel_norm(x, scale, shift, running_mean, running_var));
}

// ---------------------------------------------------------------------------
// bilinear resize
// ---------------------------------------------------------------------------

namespace detail {

struct ResizeTap {
  std::size_t lo;
  std::size_t hi;
  double frac;  // weight of hi; lo gets 1 - frac
};

inline ResizeTap resize_tap(std::size_t out_idx, std::size_t in_extent,
                            std::size_t out_extent) {
  const double src = (static_cast<double>(out_idx) + 0.5) *
                         (static_cast<double>(in_extent) / static_cast<double>(out_extent)) -
                     0.5;
  const double f = std::floor(src);
  const std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(f);
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(in_extent) - 1;
  ResizeTap t;
  t.lo = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i0, 0, last));
  t.hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i0 + 1, 0, last));
  t.frac = src - f;
  return t;
}

}  // namespace detail

/// Resample an [H,W,C] image to [h,w,C] with align-corners-false sampling and
/// edge clamping. The identity when (h,w) == (H,W).
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, std::size_t h, std::size_t w) {
  if (x.rank() != 3) {
    throw DimensionError("bilinear_resize: expected rank-3 image, got rank " +
                         std::to_string(x.rank()));
  }
  if (h < 1 || w < 1) throw DimensionError("bilinear_resize: target extent must be >= 1");
  const std::size_t ih = x.extent(0), iw = x.extent(1), c = x.extent(2);
  if (h == ih && w == iw) return x;
  Tensor<Scalar> y({h, w, c});
  std::vector<detail::ResizeTap> col_taps(w);
  for (std::size_t j = 0; j < w; ++j) col_taps[j] = detail::resize_tap(j, iw, w);
  for (std::size_t i = 0; i < h; ++i) {
    const detail::ResizeTap ty = detail::resize_tap(i, ih, h);
    const Scalar wy1 = static_cast<Scalar>(ty.frac);
    const Scalar wy0 = Scalar(1) - wy1;
    for (std::size_t j = 0; j < w; ++j) {
      const detail::ResizeTap& tx = col_taps[j];
      const Scalar wx1 = static_cast<Scalar>(tx.frac);
      const Scalar wx0 = Scalar(1) - wx1;
      const Scalar* p00 = &x.at(ty.lo, tx.lo, 0);
      const Scalar* p01 = &x.at(ty.lo, tx.hi, 0);
      const Scalar* p10 = &x.at(ty.hi, tx.lo, 0);
      const Scalar* p11 = &x.at(ty.hi, tx.hi, 0);
      Scalar* yp = &y.at(i, j, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        yp[ch] = wy0 * (wx0 * p00[ch] + wx1 * p01[ch]) +
                 wy1 * (wx0 * p10[ch] + wx1 * p11[ch]);
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> bilinear_resize_backward(const Tensor<Scalar>& gy, std::size_t in_h,
                                        std::size_t in_w) {
  const std::size_t h = gy.extent(0), w = gy.extent(1), c = gy.extent(2);
  Tensor<Scalar> gx({in_h, in_w, c});
  if (h == in_h && w == in_w) return gy;
  for (std::size_t i = 0; i < h; ++i) {
    const detail::ResizeTap ty = detail::resize_tap(i, in_h, h);
    const Scalar wy1 = static_cast<Scalar>(ty.frac);
    const Scalar wy0 = Scalar(1) - wy1;
    for (std::size_t j = 0; j < w; ++j) {
      const detail::ResizeTap tx = detail::resize_tap(j, in_w, w);
      const Scalar wx1 = static_cast<Scalar>(tx.frac);
      const Scalar wx0 = Scalar(1) - wx1;
      const Scalar* gp = &gy.at(i, j, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        gx.at(ty.lo, tx.lo, ch) += wy0 * wx0 * gp[ch];
        gx.at(ty.lo, tx.hi, ch) += wy0 * wx1 * gp[ch];
        gx.at(ty.hi, tx.lo, ch) += wy1 * wx0 * gp[ch];
        gx.at(ty.hi, tx.hi, ch) += wy1 * wx1 * gp[ch];
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// channel concat / split (last axis)
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no operands");
  typename Tensor<Scalar>::Shape lead = parts[0]->shape();
  lead.pop_back();
  std::size_t total_c = 0;
  for (const auto* p : parts) {
    typename Tensor<Scalar>::Shape pl = p->shape();
    const std::size_t pc = pl.back();
    pl.pop_back();
    if (pl != lead) {
      throw DimensionError("concat_channels: leading extents differ: " +
                           Tensor<Scalar>::shape_string(parts[0]->shape()) + " vs " +
                           Tensor<Scalar>::shape_string(p->shape()));
    }
    total_c += pc;
  }
  typename Tensor<Scalar>::Shape out_shape = lead;
  out_shape.push_back(total_c);
  Tensor<Scalar> y(out_shape);
  const std::size_t rows = Tensor<Scalar>::count(lead);
  std::size_t offset = 0;
  for (const auto* p : parts) {
    const std::size_t pc = p->shape().back();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(p->data() + r * pc, p->data() + (r + 1) * pc,
                y.data() + r * total_c + offset);
    }
    offset += pc;
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return concat_channels<Scalar>({&a, &b});
}

/// Inverse of concat_channels for gradients: slice gy back into per-part tensors.
template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(const Tensor<Scalar>& y,
                                           const std::vector<std::size_t>& widths) {
  typename Tensor<Scalar>::Shape lead = y.shape();
  const std::size_t total_c = lead.back();
  lead.pop_back();
  const std::size_t rows = Tensor<Scalar>::count(lead);
  std::vector<Tensor<Scalar>> parts;
  parts.reserve(widths.size());
  std::size_t offset = 0;
  for (std::size_t wc : widths) {
    typename Tensor<Scalar>::Shape ps = lead;
    ps.push_back(wc);
    Tensor<Scalar> part(ps);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(y.data() + r * total_c + offset, y.data() + r * total_c + offset + wc,
                part.data() + r * wc);
    }
    parts.push_back(std::move(part));
    offset += wc;
  }
  if (offset != total_c) {
    throw DimensionError("split_channels: widths sum " + std::to_string(offset) +
                         " != channels " + std::to_string(total_c));
  }
  return parts;
}

}  // namespace rangeseg
