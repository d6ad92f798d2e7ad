// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "shotnet/parallel.hpp"

namespace shotnet {

void ConvSpec::validate() const {
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv stride must be 1 or 2, got " + std::to_string(stride));
  }
  const bool k1 = kernel_h == 1 && kernel_w == 1;
  const bool k3 = kernel_h == 3 && kernel_w == 3;
  if (!k1 && !k3) {
    throw ConfigError("conv kernel must be 1x1 or 3x3, got " + std::to_string(kernel_h) + "x" +
                      std::to_string(kernel_w));
  }
  if (out_channels < 1) throw ConfigError("conv out_channels must be >= 1");
}

int conv_output_extent(int input, int kernel, int stride, Padding padding) {
  if (padding == Padding::kSameCeil) return (input + stride - 1) / stride;
  if (input < kernel) {
    throw ShapeError("valid convolution: input extent " + std::to_string(input) +
                     " smaller than kernel " + std::to_string(kernel));
  }
  return (input - kernel) / stride + 1;
}

int conv_pad_before(int input, int kernel, int stride, Padding padding) {
  if (padding == Padding::kNone) return 0;
  const int out = conv_output_extent(input, kernel, stride, padding);
  const int total = std::max((out - 1) * stride + kernel - input, 0);
  return total / 2;
}

namespace ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int n, c, h, w;
  int o, kh, kw;
  int oh, ow;
  int pad_top, pad_left;
  int stride;
  bool direct;  // 1x1, stride 1: the input plane is already the column matrix

  int patch() const { return c * kh * kw; }
  int out_plane() const { return oh * ow; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights,
                           const ConvSpec& spec, const char* op) {
  spec.validate();
  require_rank(input.shape(), 4, std::string(op) + " input");
  require_rank(weights.shape(), 4, std::string(op) + " weights");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.o = weights.dim(0);
  g.kh = weights.dim(2);
  g.kw = weights.dim(3);
  g.stride = spec.stride;
  if (weights.dim(0) != spec.out_channels) {
    throw ShapeError(std::string(op) + ": weight dim 0 (out channels) is " +
                     std::to_string(weights.dim(0)) + " but spec requests " +
                     std::to_string(spec.out_channels));
  }
  if (g.kh != spec.kernel_h || g.kw != spec.kernel_w) {
    throw ShapeError(std::string(op) + ": weight kernel dims " + shape_string(weights.shape()) +
                     " disagree with spec kernel");
  }
  g.oh = conv_output_extent(g.h, g.kh, g.stride, spec.padding);
  g.ow = conv_output_extent(g.w, g.kw, g.stride, spec.padding);
  g.pad_top = conv_pad_before(g.h, g.kh, g.stride, spec.padding);
  g.pad_left = conv_pad_before(g.w, g.kw, g.stride, spec.padding);
  g.direct = g.kh == 1 && g.kw == 1 && g.stride == 1;
  return g;
}

template <typename T>
void check_bias(const Tensor<T>* bias, int channels, const char* op) {
  if (bias == nullptr) return;
  if (bias->rank() != 1 || bias->dim(0) != channels) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_string(bias->shape()) +
                     " does not match " + std::to_string(channels) + " output channels");
  }
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const int plane = g.out_plane();
  for (int c = 0; c < g.c; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = col + (static_cast<std::size_t>(c * g.kh + ki) * g.kw + kj) * plane;
        for (int oi = 0; oi < g.oh; ++oi) {
          const int ii = oi * g.stride - g.pad_top + ki;
          T* dst = row + oi * g.ow;
          if (ii < 0 || ii >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ii) * g.w;
          for (int oj = 0; oj < g.ow; ++oj) {
            const int jj = oj * g.stride - g.pad_left + kj;
            dst[oj] = (jj >= 0 && jj < g.w) ? src[jj] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const int plane = g.out_plane();
  for (int c = 0; c < g.c; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c * g.kh + ki) * g.kw + kj) * plane;
        for (int oi = 0; oi < g.oh; ++oi) {
          const int ii = oi * g.stride - g.pad_top + ki;
          if (ii < 0 || ii >= g.h) continue;
          T* dst = xc + static_cast<std::size_t>(ii) * g.w;
          const T* src = row + oi * g.ow;
          for (int oj = 0; oj < g.ow; ++oj) {
            const int jj = oj * g.stride - g.pad_left + kj;
            if (jj >= 0 && jj < g.w) dst[jj] += src[oj];
          }
        }
      }
    }
  }
}

template <typename T>
void require_grad_size(std::span<T> grad, std::size_t size, const char* what) {
  if (!grad.empty() && grad.size() != size) {
    throw ShapeError(std::string(what) + ": gradient buffer has " + std::to_string(grad.size()) +
                     " elements, expected " + std::to_string(size));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                 const ConvSpec& spec) {
  if (spec.depthwise) throw ConfigError("conv2d called with a depthwise spec");
  const ConvGeometry g = conv_geometry(input, weights, spec, "conv2d");
  if (weights.dim(1) != g.c) {
    throw ShapeError("conv2d: weight dim 1 (input channels) is " + std::to_string(weights.dim(1)) +
                     " but input has C=" + std::to_string(g.c));
  }
  check_bias(bias, g.o, "conv2d");

  Tensor<T> out({g.n, g.o, g.oh, g.ow});
  const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.o) * g.out_plane();
  MapConstMat<T> wmat(weights.ptr(), g.o, g.patch());

  parallel_for(static_cast<std::size_t>(g.n), [&](std::size_t n) {
    const T* x = input.ptr() + n * in_stride;
    MapMat<T> y(out.ptr() + n * out_stride, g.o, g.out_plane());
    if (g.direct) {
      y.noalias() = wmat * MapConstMat<T>(x, g.c, g.out_plane());
    } else {
      std::vector<T> col(static_cast<std::size_t>(g.patch()) * g.out_plane());
      im2col(x, g, col.data());
      y.noalias() = wmat * MapConstMat<T>(col.data(), g.patch(), g.out_plane());
    }
    if (bias != nullptr) {
      for (int o = 0; o < g.o; ++o) y.row(o).array() += (*bias)[o];
    }
  });
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                     const Tensor<T>& grad_output, const ConvSpec& spec,
                     std::span<T> grad_input, std::span<T> grad_weights,
                     std::span<T> grad_bias) {
  const ConvGeometry g = conv_geometry(input, weights, spec, "conv2d_backward");
  require_same_shape(grad_output.shape(), Shape{g.n, g.o, g.oh, g.ow}, "conv2d_backward grad");
  require_grad_size(grad_input, input.size(), "conv2d_backward input");
  require_grad_size(grad_weights, weights.size(), "conv2d_backward weights");
  require_grad_size(grad_bias, static_cast<std::size_t>(g.o), "conv2d_backward bias");

  const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.o) * g.out_plane();
  MapConstMat<T> wmat(weights.ptr(), g.o, g.patch());

  // Per-sample weight gradients are reduced in sample order afterwards so the
  // result does not depend on the thread count.
  const bool want_w = !grad_weights.empty();
  std::vector<RowMat<T>> partial_w(want_w ? g.n : 0);

  parallel_for(static_cast<std::size_t>(g.n), [&](std::size_t n) {
    MapConstMat<T> dy(grad_output.ptr() + n * out_stride, g.o, g.out_plane());
    const T* x = input.ptr() + n * in_stride;
    std::vector<T> col;
    if (!g.direct && want_w) {
      col.resize(static_cast<std::size_t>(g.patch()) * g.out_plane());
      im2col(x, g, col.data());
    }
    if (want_w) {
      const T* cols = g.direct ? x : col.data();
      partial_w[n].noalias() = dy * MapConstMat<T>(cols, g.patch(), g.out_plane()).transpose();
    }
    if (!grad_input.empty()) {
      if (g.direct) {
        MapMat<T> dx(grad_input.data() + n * in_stride, g.c, g.out_plane());
        dx.noalias() += wmat.transpose() * dy;
      } else {
        RowMat<T> dcol = wmat.transpose() * dy;
        col2im_add(dcol.data(), g, grad_input.data() + n * in_stride);
      }
    }
  });

  if (want_w) {
    RowMat<T> total = RowMat<T>::Zero(g.o, g.patch());
    for (const auto& p : partial_w) total += p;
    MapMat<T>(grad_weights.data(), g.o, g.patch()) += total;
  }
  if (!grad_bias.empty()) {
    for (int o = 0; o < g.o; ++o) {
      T sum = 0;
      for (int n = 0; n < g.n; ++n) {
        const T* dy = grad_output.ptr() + n * out_stride + static_cast<std::size_t>(o) * g.out_plane();
        for (int i = 0; i < g.out_plane(); ++i) sum += dy[i];
      }
      grad_bias[o] += sum;
    }
  }
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                           const Tensor<T>* bias, const ConvSpec& spec) {
  if (!spec.depthwise) throw ConfigError("depthwise_conv2d called with a dense spec");
  const ConvGeometry g = conv_geometry(input, weights, spec, "depthwise_conv2d");
  if (g.o != g.c || weights.dim(1) != 1) {
    throw ShapeError("depthwise_conv2d: weights " + shape_string(weights.shape()) +
                     " must be [C,1,Kh,Kw] with C=" + std::to_string(g.c));
  }
  check_bias(bias, g.c, "depthwise_conv2d");

  Tensor<T> out({g.n, g.c, g.oh, g.ow});
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_plane());
  const int kk = g.kh * g.kw;

  parallel_for(static_cast<std::size_t>(g.n) * g.c, [&](std::size_t nc) {
    const int c = static_cast<int>(nc % g.c);
    const T* x = input.ptr() + nc * in_plane;
    const T* k = weights.ptr() + static_cast<std::size_t>(c) * kk;
    T* y = out.ptr() + nc * out_plane;
    const T b = bias ? (*bias)[c] : T(0);
    for (int oi = 0; oi < g.oh; ++oi) {
      for (int oj = 0; oj < g.ow; ++oj) {
        T acc = 0;
        for (int ki = 0; ki < g.kh; ++ki) {
          const int ii = oi * g.stride - g.pad_top + ki;
          if (ii < 0 || ii >= g.h) continue;
          const T* xr = x + static_cast<std::size_t>(ii) * g.w;
          for (int kj = 0; kj < g.kw; ++kj) {
            const int jj = oj * g.stride - g.pad_left + kj;
            if (jj < 0 || jj >= g.w) continue;
            acc += k[ki * g.kw + kj] * xr[jj];
          }
        }
        y[oi * g.ow + oj] = acc + b;
      }
    }
  });
  return out;
}

template <typename T>
void depthwise_conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_output, const ConvSpec& spec,
                               std::span<T> grad_input, std::span<T> grad_weights,
                               std::span<T> grad_bias) {
  const ConvGeometry g = conv_geometry(input, weights, spec, "depthwise_conv2d_backward");
  require_same_shape(grad_output.shape(), Shape{g.n, g.c, g.oh, g.ow},
                     "depthwise_conv2d_backward grad");
  require_grad_size(grad_input, input.size(), "depthwise_conv2d_backward input");
  require_grad_size(grad_weights, weights.size(), "depthwise_conv2d_backward weights");
  require_grad_size(grad_bias, static_cast<std::size_t>(g.c), "depthwise_conv2d_backward bias");

  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_plane());
  const int kk = g.kh * g.kw;
  const bool want_w = !grad_weights.empty();
  std::vector<T> partial_w(want_w ? static_cast<std::size_t>(g.n) * g.c * kk : 0, T(0));

  parallel_for(static_cast<std::size_t>(g.n) * g.c, [&](std::size_t nc) {
    const int c = static_cast<int>(nc % g.c);
    const T* x = input.ptr() + nc * in_plane;
    const T* k = weights.ptr() + static_cast<std::size_t>(c) * kk;
    const T* dy = grad_output.ptr() + nc * out_plane;
    T* dx = grad_input.empty() ? nullptr : grad_input.data() + nc * in_plane;
    T* dk = want_w ? partial_w.data() + nc * kk : nullptr;
    for (int oi = 0; oi < g.oh; ++oi) {
      for (int oj = 0; oj < g.ow; ++oj) {
        const T d = dy[oi * g.ow + oj];
        for (int ki = 0; ki < g.kh; ++ki) {
          const int ii = oi * g.stride - g.pad_top + ki;
          if (ii < 0 || ii >= g.h) continue;
          for (int kj = 0; kj < g.kw; ++kj) {
            const int jj = oj * g.stride - g.pad_left + kj;
            if (jj < 0 || jj >= g.w) continue;
            const std::size_t xi = static_cast<std::size_t>(ii) * g.w + jj;
            if (dx) dx[xi] += d * k[ki * g.kw + kj];
            if (dk) dk[ki * g.kw + kj] += d * x[xi];
          }
        }
      }
    }
  });

  if (want_w) {
    for (int n = 0; n < g.n; ++n) {
      const T* p = partial_w.data() + static_cast<std::size_t>(n) * g.c * kk;
      for (std::size_t i = 0; i < static_cast<std::size_t>(g.c) * kk; ++i) grad_weights[i] += p[i];
    }
  }
  if (!grad_bias.empty()) {
    for (int c = 0; c < g.c; ++c) {
      T sum = 0;
      for (int n = 0; n < g.n; ++n) {
        const T* dy = grad_output.ptr() + (static_cast<std::size_t>(n) * g.c + c) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) sum += dy[i];
      }
      grad_bias[c] += sum;
    }
  }
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode,
                     double decay, double epsilon, BatchNormCache<T>* cache) {
  if (!(epsilon > 0.0)) throw ConfigError("batch_norm epsilon must be > 0");
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("batch_norm decay must be in [0,1]");
  require_rank(input.shape(), 4, "batch_norm input");
  const int n = input.dim(0), c = input.dim(1);
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  for (const Tensor<T>* p : {&params.gamma, &params.beta, &params.running_mean, &params.running_var}) {
    require_same_shape(p->shape(), Shape{c}, "batch_norm parameter");
  }
  if (params.moments) {
    params.moments->sum.resize(c, 0.0);
    params.moments->sum_sq.resize(c, 0.0);
  }

  Tensor<T> out(input.shape());
  std::vector<T> inv_std(c);
  Tensor<T> normalized;
  if (cache) normalized = Tensor<T>(input.shape());

  parallel_for(static_cast<std::size_t>(c), [&](std::size_t ch) {
    T mean, var;
    if (mode == Mode::kTrain) {
      const double count = static_cast<double>(n) * plane;
      double sum = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* x = input.ptr() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += x[i];
      }
      const double m = sum / count;
      double sq = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* x = input.ptr() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = x[i] - m;
          sq += d * d;
        }
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(sq / count);
      params.running_mean[ch] =
          static_cast<T>(decay * params.running_mean[ch] + (1.0 - decay) * m);
      params.running_var[ch] =
          static_cast<T>(decay * params.running_var[ch] + (1.0 - decay) * (sq / count));
    } else {
      mean = params.running_mean[ch];
      var = params.running_var[ch];
      if (params.moments) {
        double sum = 0.0, sq = 0.0;
        for (int b = 0; b < n; ++b) {
          const T* x = input.ptr() + (static_cast<std::size_t>(b) * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum += x[i];
            sq += static_cast<double>(x[i]) * x[i];
          }
        }
        params.moments->sum[ch] += sum;
        params.moments->sum_sq[ch] += sq;
      }
    }
    const T istd = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    inv_std[ch] = istd;
    const T g = params.gamma[ch], bt = params.beta[ch];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const T* x = input.ptr() + off;
      T* y = out.ptr() + off;
      T* xh = cache ? normalized.ptr() + off : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (x[i] - mean) * istd;
        if (xh) xh[i] = h;
        y[i] = g * h + bt;
      }
    }
  });

  if (mode == Mode::kInfer && params.moments) params.moments->count += static_cast<double>(n) * plane;
  if (cache) {
    cache->mode = mode;
    cache->inv_std = std::move(inv_std);
    cache->normalized = std::move(normalized);
  }
  return out;
}

template <typename T>
void batch_norm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                         const Tensor<T>& grad_output, std::span<T> grad_input,
                         std::span<T> grad_gamma, std::span<T> grad_beta) {
  const Tensor<T>& xh = cache.normalized;
  require_same_shape(grad_output.shape(), xh.shape(), "batch_norm_backward grad");
  const int n = xh.dim(0), c = xh.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xh.dim(2)) * xh.dim(3);
  require_grad_size(grad_input, xh.size(), "batch_norm_backward input");
  require_grad_size(grad_gamma, static_cast<std::size_t>(c), "batch_norm_backward gamma");
  require_grad_size(grad_beta, static_cast<std::size_t>(c), "batch_norm_backward beta");
  const double count = static_cast<double>(n) * plane;

  parallel_for(static_cast<std::size_t>(c), [&](std::size_t ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += grad_output[off + i];
        sum_dy_xh += static_cast<double>(grad_output[off + i]) * xh[off + i];
      }
    }
    if (!grad_gamma.empty()) grad_gamma[ch] += static_cast<T>(sum_dy_xh);
    if (!grad_beta.empty()) grad_beta[ch] += static_cast<T>(sum_dy);
    if (grad_input.empty()) return;
    const T scale = gamma[ch] * cache.inv_std[ch];
    if (cache.mode == Mode::kInfer) {
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) grad_input[off + i] += scale * grad_output[off + i];
      }
      return;
    }
    const T mean_dy = static_cast<T>(sum_dy / count);
    const T mean_dy_xh = static_cast<T>(sum_dy_xh / count);
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        grad_input[off + i] += scale * (grad_output[off + i] - mean_dy - xh[off + i] * mean_dy_xh);
      }
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
void relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output,
                   std::span<T> grad_input) {
  require_same_shape(grad_output.shape(), input.shape(), "relu_backward");
  require_grad_size(grad_input, input.size(), "relu_backward input");
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i] > T(0)) grad_input[i] += grad_output[i];
  }
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& input, int target_h, int target_w) {
  require_rank(input.shape(), 4, "upsample_nearest2x input");
  const int h = input.dim(2), w = input.dim(3);
  if ((target_h != 2 * h && target_h != 2 * h - 1) || (target_w != 2 * w && target_w != 2 * w - 1)) {
    throw ShapeError("upsample_nearest2x: target " + std::to_string(target_h) + "x" +
                     std::to_string(target_w) + " not reachable from " + std::to_string(h) + "x" +
                     std::to_string(w) + " (allowed 2H-1..2H, 2W-1..2W)");
  }
  const int nc = input.dim(0) * input.dim(1);
  Tensor<T> out({input.dim(0), input.dim(1), target_h, target_w});
  for (int p = 0; p < nc; ++p) {
    const T* x = input.ptr() + static_cast<std::size_t>(p) * h * w;
    T* y = out.ptr() + static_cast<std::size_t>(p) * target_h * target_w;
    for (int i = 0; i < target_h; ++i) {
      for (int j = 0; j < target_w; ++j) y[i * target_w + j] = x[(i / 2) * w + j / 2];
    }
  }
  return out;
}

template <typename T>
void upsample_nearest2x_backward(const Tensor<T>& grad_output, std::span<T> grad_input,
                                 const Shape& input_shape) {
  require_rank(input_shape, 4, "upsample_nearest2x_backward input");
  require_grad_size(grad_input, shape_numel(input_shape), "upsample_nearest2x_backward input");
  const int h = input_shape[2], w = input_shape[3];
  const int th = grad_output.dim(2), tw = grad_output.dim(3);
  const int nc = input_shape[0] * input_shape[1];
  for (int p = 0; p < nc; ++p) {
    const T* dy = grad_output.ptr() + static_cast<std::size_t>(p) * th * tw;
    T* dx = grad_input.data() + static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < th; ++i) {
      for (int j = 0; j < tw; ++j) dx[(i / 2) * w + j / 2] += dy[i * tw + j];
    }
  }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "elementwise_add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> flatten_anchor_maps(const std::vector<const Tensor<T>*>& maps, int per_anchor) {
  if (maps.empty()) throw ShapeError("flatten_anchor_maps: no maps");
  const int n = maps.front()->dim(0);
  int total = 0;
  for (const auto* m : maps) {
    require_rank(m->shape(), 4, "flatten_anchor_maps map");
    if (m->dim(0) != n) throw ShapeError("flatten_anchor_maps: batch sizes differ");
    if (m->dim(1) % per_anchor != 0) {
      throw ShapeError("flatten_anchor_maps: channel count " + std::to_string(m->dim(1)) +
                       " not a multiple of " + std::to_string(per_anchor));
    }
    total += m->dim(1) / per_anchor * m->dim(2) * m->dim(3);
  }
  Tensor<T> out({n, total, per_anchor});
  for (int b = 0; b < n; ++b) {
    T* dst = out.ptr() + static_cast<std::size_t>(b) * total * per_anchor;
    for (const auto* m : maps) {
      const int ch = m->dim(1), hh = m->dim(2), ww = m->dim(3);
      const int anchors = ch / per_anchor;
      const std::size_t plane = static_cast<std::size_t>(hh) * ww;
      const T* src = m->ptr() + static_cast<std::size_t>(b) * ch * plane;
      for (std::size_t cell = 0; cell < plane; ++cell) {
        for (int a = 0; a < anchors; ++a) {
          for (int p = 0; p < per_anchor; ++p) {
            *dst++ = src[static_cast<std::size_t>(a * per_anchor + p) * plane + cell];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void flatten_anchor_maps_backward(const Tensor<T>& grad_output, int per_anchor,
                                  const std::vector<Shape>& map_shapes,
                                  const std::vector<std::span<T>>& grad_maps) {
  const int n = grad_output.dim(0);
  const int total = grad_output.dim(1);
  for (int b = 0; b < n; ++b) {
    const T* src = grad_output.ptr() + static_cast<std::size_t>(b) * total * per_anchor;
    for (std::size_t k = 0; k < map_shapes.size(); ++k) {
      const Shape& s = map_shapes[k];
      const int ch = s[1];
      const int anchors = ch / per_anchor;
      const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
      const std::size_t count = plane * anchors * per_anchor;
      if (grad_maps[k].empty()) {
        src += count;
        continue;
      }
      T* dst = grad_maps[k].data() + static_cast<std::size_t>(b) * ch * plane;
      for (std::size_t cell = 0; cell < plane; ++cell) {
        for (int a = 0; a < anchors; ++a) {
          for (int p = 0; p < per_anchor; ++p) {
            dst[static_cast<std::size_t>(a * per_anchor + p) * plane + cell] += *src++;
          }
        }
      }
    }
  }
}

#define SHOTNET_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,          \
                            const ConvSpec&);                                               \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                const ConvSpec&, std::span<T>, std::span<T>, std::span<T>); \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, \
                                      const ConvSpec&);                                     \
  template void depthwise_conv2d_backward(const Tensor<T>&, const Tensor<T>&,               \
                                          const Tensor<T>&, const ConvSpec&, std::span<T>,  \
                                          std::span<T>, std::span<T>);                      \
  template Tensor<T> batch_norm(const Tensor<T>&, BatchNormParams<T>&, Mode, double, double, \
                                BatchNormCache<T>*);                                        \
  template void batch_norm_backward(const BatchNormCache<T>&, const Tensor<T>&,             \
                                    const Tensor<T>&, std::span<T>, std::span<T>,           \
                                    std::span<T>);                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template void relu_backward(const Tensor<T>&, const Tensor<T>&, std::span<T>);            \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&, int, int);                        \
  template void upsample_nearest2x_backward(const Tensor<T>&, std::span<T>, const Shape&);  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> flatten_anchor_maps(const std::vector<const Tensor<T>*>&, int);        \
  template void flatten_anchor_maps_backward(const Tensor<T>&, int, const std::vector<Shape>&, \
                                             const std::vector<std::span<T>>&);

SHOTNET_INSTANTIATE_OPS(float)
SHOTNET_INSTANTIATE_OPS(double)

#undef SHOTNET_INSTANTIATE_OPS

}  // namespace ops
}  // namespace shotnet
