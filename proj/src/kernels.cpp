#include "sentinet/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "sentinet/parallel.hpp"

namespace sentinet {

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel)
    throw ShapeError("window of " + std::to_string(kernel) + " does not fit input extent " +
                     std::to_string(in) + " with pad " + std::to_string(pad));
  if (stride == 0) throw SpecError("stride must be >= 1");
  return (in + 2 * pad - kernel) / stride + 1;
}

void check_conv_spec(const ConvSpec& spec, std::size_t in_channels) {
  if (spec.groups == 0) throw SpecError("groups must be >= 1");
  if (spec.stride == 0) throw SpecError("stride must be >= 1");
  if (in_channels % spec.groups != 0)
    throw SpecError("input channels " + std::to_string(in_channels) +
                    " not divisible by groups " + std::to_string(spec.groups));
  if (spec.out_channels % spec.groups != 0)
    throw SpecError("output channels " + std::to_string(spec.out_channels) +
                    " not divisible by groups " + std::to_string(spec.groups));
  if (spec.kernel_h == 0 || spec.kernel_w == 0) throw SpecError("kernel must be >= 1");
}

void check_lrn_spec(const LrnSpec& spec) {
  if (spec.n == 0 || spec.n % 2 == 0) throw SpecError("lrn window must be odd and >= 1");
  if (spec.beta <= 0.0) throw SpecError("lrn beta must be > 0");
  if (spec.k <= 0.0) throw SpecError("lrn k must be > 0");
}

bool checked_mode() {
  static const bool on = [] {
    const char* env = std::getenv("SENTINET_CHECKED");
    return env && *env && *env != '0';
  }();
  return on;
}

template <class T>
void assert_all_finite(const TensorT<T>& t, const char* op) {
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(static_cast<double>(t.data[i])))
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
  }
}

namespace {

template <class T>
void maybe_check(const TensorT<T>& t, const char* op) {
  if (checked_mode()) assert_all_finite(t, op);
}

template <class T>
void expect_rank(const TensorT<T>& t, std::size_t r, const char* what) {
  if (t.rank() != r)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(t));
}

// C[M x N] += A[M x K] * B[K x N], all row-major. The per-element reduction
// runs in ascending k, fixed regardless of threading.
template <class T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  parallel_for(m, [&](std::size_t row0, std::size_t row1) {
    for (std::size_t i = row0; i < row1; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      std::size_t kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        const T a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
        const T* b0 = b + kk * n;
        const T* b1 = b0 + n;
        const T* b2 = b1 + n;
        const T* b3 = b2 + n;
        for (std::size_t j = 0; j < n; ++j)
          crow[j] = ((((crow[j] + a0 * b0[j]) + a1 * b1[j]) + a2 * b2[j]) + a3 * b3[j]);
      }
      for (; kk < k; ++kk) {
        const T a0 = arow[kk];
        const T* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += a0 * brow[j];
      }
    }
  });
}

// C[M x N] += A[M x K] * B[N x K]^T: rows of both operands are contiguous.
template <class T>
void gemm_bt_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  parallel_for(m, [&](std::size_t row0, std::size_t row1) {
    for (std::size_t i = row0; i < row1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        std::size_t kk = 0;
        for (; kk + 4 <= k; kk += 4) {
          s0 += arow[kk] * brow[kk];
          s1 += arow[kk + 1] * brow[kk + 1];
          s2 += arow[kk + 2] * brow[kk + 2];
          s3 += arow[kk + 3] * brow[kk + 3];
        }
        T s = ((s0 + s1) + s2) + s3;
        for (; kk < k; ++kk) s += arow[kk] * brow[kk];
        crow[j] += s;
      }
    }
  });
}

// C[M x N] += A[K x M]^T * B[K x N].
template <class T>
void gemm_at_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  // Sequential over k so each output element accumulates in fixed order.
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* arow = a + kk * m;
    const T* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T a0 = arow[i];
      if (a0 == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a0 * brow[j];
    }
  }
}

struct ConvDims {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_h, out_w;
  std::size_t group_in, group_out;
  std::size_t patch;  // group_in * kh * kw
};

template <class T>
ConvDims conv_dims(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias,
                   const ConvSpec& spec) {
  expect_rank(input, 4, "conv2d input");
  expect_rank(weights, 4, "conv2d weights");
  ConvDims d;
  d.batch = input.shape[0];
  d.in_c = input.shape[1];
  d.in_h = input.shape[2];
  d.in_w = input.shape[3];
  check_conv_spec(spec, d.in_c);
  d.group_in = d.in_c / spec.groups;
  d.group_out = spec.out_channels / spec.groups;
  if (weights.shape[0] != spec.out_channels || weights.shape[1] != d.group_in ||
      weights.shape[2] != spec.kernel_h || weights.shape[3] != spec.kernel_w)
    throw ShapeError("conv2d weights " + shape_str(weights) + " do not match spec [" +
                     std::to_string(spec.out_channels) + "x" + std::to_string(d.group_in) + "x" +
                     std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w) + "]");
  if (bias.rank() != 1 || bias.shape[0] != spec.out_channels)
    throw ShapeError("conv2d bias " + shape_str(bias) + " must be [" +
                     std::to_string(spec.out_channels) + "]");
  d.out_h = conv_out_size(d.in_h, spec.kernel_h, spec.stride, spec.pad);
  d.out_w = conv_out_size(d.in_w, spec.kernel_w, spec.stride, spec.pad);
  d.patch = d.group_in * spec.kernel_h * spec.kernel_w;
  return d;
}

// Gathers the patch matrix for one (sample, group): rows are (c,u,v) in
// row-major order, matching the dense-layer flatten convention; columns are
// output positions.
template <class T>
void im2col(const T* in, const ConvDims& d, const ConvSpec& spec, T* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.pad);
  const std::size_t positions = d.out_h * d.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.group_in; ++c) {
    const T* plane = in + c * d.in_h * d.in_w;
    for (std::size_t u = 0; u < spec.kernel_h; ++u) {
      for (std::size_t v = 0; v < spec.kernel_w; ++v, ++row) {
        T* out = cols + row * positions;
        for (std::size_t y = 0; y < d.out_h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec.stride + u) - pad;
          T* orow = out + y * d.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) {
            for (std::size_t x = 0; x < d.out_w; ++x) orow[x] = T(0);
            continue;
          }
          const T* irow = plane + static_cast<std::size_t>(iy) * d.in_w;
          for (std::size_t x = 0; x < d.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * spec.stride + v) - pad;
            orow[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.in_w))
                          ? T(0)
                          : irow[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Scatter-adds patch gradients back to the input plane.
template <class T>
void col2im_add(const T* cols, const ConvDims& d, const ConvSpec& spec, T* in) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.pad);
  const std::size_t positions = d.out_h * d.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < d.group_in; ++c) {
    T* plane = in + c * d.in_h * d.in_w;
    for (std::size_t u = 0; u < spec.kernel_h; ++u) {
      for (std::size_t v = 0; v < spec.kernel_w; ++v, ++row) {
        const T* src = cols + row * positions;
        for (std::size_t y = 0; y < d.out_h; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec.stride + u) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
          T* irow = plane + static_cast<std::size_t>(iy) * d.in_w;
          const T* srow = src + y * d.out_w;
          for (std::size_t x = 0; x < d.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * spec.stride + v) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
            irow[static_cast<std::size_t>(ix)] += srow[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias,
                  const ConvSpec& spec) {
  const ConvDims d = conv_dims(input, weights, bias, spec);
  TensorT<T> out({d.batch, spec.out_channels, d.out_h, d.out_w});
  const std::size_t positions = d.out_h * d.out_w;
  std::vector<T> cols(d.patch * positions);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t g = 0; g < spec.groups; ++g) {
      const T* in_base = input.data.data() + (n * d.in_c + g * d.group_in) * d.in_h * d.in_w;
      im2col(in_base, d, spec, cols.data());
      T* out_base = out.data.data() + (n * spec.out_channels + g * d.group_out) * positions;
      for (std::size_t kc = 0; kc < d.group_out; ++kc) {
        const T b = bias.data[g * d.group_out + kc];
        T* orow = out_base + kc * positions;
        for (std::size_t p = 0; p < positions; ++p) orow[p] = b;
      }
      const T* w_base = weights.data.data() + g * d.group_out * d.patch;
      gemm_accumulate(d.group_out, positions, d.patch, w_base, cols.data(), out_base);
    }
  }
  maybe_check(out, "conv2d");
  return out;
}

template <class T>
TensorT<T> conv2d_direct(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias,
                         const ConvSpec& spec) {
  const ConvDims d = conv_dims(input, weights, bias, spec);
  TensorT<T> out({d.batch, spec.out_channels, d.out_h, d.out_w});
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.pad);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t k = 0; k < spec.out_channels; ++k) {
      const std::size_t g = k / d.group_out;
      for (std::size_t y = 0; y < d.out_h; ++y) {
        for (std::size_t x = 0; x < d.out_w; ++x) {
          T acc = bias.data[k];
          for (std::size_t c = 0; c < d.group_in; ++c) {
            for (std::size_t u = 0; u < spec.kernel_h; ++u) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * spec.stride + u) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.in_h)) continue;
              for (std::size_t v = 0; v < spec.kernel_w; ++v) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * spec.stride + v) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.in_w)) continue;
                acc += input.at4(n, g * d.group_in + c, static_cast<std::size_t>(iy),
                                 static_cast<std::size_t>(ix)) *
                       weights.at4(k, c, u, v);
              }
            }
          }
          out.at4(n, k, y, x) = acc;
        }
      }
    }
  }
  return out;
}

template <class T>
ConvGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const ConvSpec& spec, const TensorT<T>& dout) {
  TensorT<T> bias({spec.out_channels});
  const ConvDims d = conv_dims(input, weights, bias, spec);
  if (dout.shape != std::vector<std::size_t>{d.batch, spec.out_channels, d.out_h, d.out_w})
    throw ShapeError("conv2d upstream gradient " + shape_str(dout) + " does not match output");

  ConvGrads<T> g;
  g.input = TensorT<T>(input.shape);
  g.weights = TensorT<T>(weights.shape);
  g.bias = TensorT<T>({spec.out_channels});
  const std::size_t positions = d.out_h * d.out_w;
  std::vector<T> cols(d.patch * positions);
  std::vector<T> dcols(d.patch * positions);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t grp = 0; grp < spec.groups; ++grp) {
      const T* in_base = input.data.data() + (n * d.in_c + grp * d.group_in) * d.in_h * d.in_w;
      im2col(in_base, d, spec, cols.data());
      const T* dout_base =
          dout.data.data() + (n * spec.out_channels + grp * d.group_out) * positions;
      // dW += dout * cols^T
      gemm_bt_accumulate(d.group_out, d.patch, positions, dout_base,
                         cols.data(), g.weights.data.data() + grp * d.group_out * d.patch);
      // db += row sums of dout
      for (std::size_t kc = 0; kc < d.group_out; ++kc) {
        const T* row = dout_base + kc * positions;
        T s = 0;
        for (std::size_t p = 0; p < positions; ++p) s += row[p];
        g.bias.data[grp * d.group_out + kc] += s;
      }
      // dcols = W^T * dout, then scatter back
      std::fill(dcols.begin(), dcols.end(), T(0));
      gemm_at_accumulate(d.patch, positions, d.group_out,
                         weights.data.data() + grp * d.group_out * d.patch, dout_base,
                         dcols.data());
      col2im_add(dcols.data(),
                 d, spec,
                 g.input.data.data() + (n * d.in_c + grp * d.group_in) * d.in_h * d.in_w);
    }
  }
  maybe_check(g.input, "conv2d_backward");
  return g;
}

template <class T>
PoolResult<T> maxpool(const TensorT<T>& input, const PoolSpec& spec) {
  expect_rank(input, 4, "maxpool input");
  if (spec.kernel == 0 || spec.stride == 0) throw SpecError("maxpool kernel and stride must be >= 1");
  const std::size_t N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
  const std::size_t Ho = conv_out_size(H, spec.kernel, spec.stride, 0);
  const std::size_t Wo = conv_out_size(W, spec.kernel, spec.stride, 0);
  PoolResult<T> r{TensorT<T>({N, C, Ho, Wo}), std::vector<std::size_t>(N * C * Ho * Wo)};
  std::size_t o = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = input.data.data() + (n * C + c) * H * W;
      const std::size_t plane_off = (n * C + c) * H * W;
      for (std::size_t y = 0; y < Ho; ++y) {
        for (std::size_t x = 0; x < Wo; ++x, ++o) {
          const std::size_t y0 = y * spec.stride, x0 = x * spec.stride;
          T best = plane[y0 * W + x0];
          std::size_t best_idx = y0 * W + x0;
          for (std::size_t u = 0; u < spec.kernel; ++u) {
            const T* row = plane + (y0 + u) * W;
            for (std::size_t v = 0; v < spec.kernel; ++v) {
              const std::size_t idx = (y0 + u) * W + (x0 + v);
              if (row[x0 + v] > best) {  // strict: ties keep the smallest flat index
                best = row[x0 + v];
                best_idx = idx;
              }
            }
          }
          r.output.data[o] = best;
          r.argmax[o] = plane_off + best_idx;
        }
      }
    }
  }
  maybe_check(r.output, "maxpool");
  return r;
}

template <class T>
TensorT<T> maxpool_backward(const std::vector<std::size_t>& argmax,
                            const std::vector<std::size_t>& input_shape, const TensorT<T>& dout) {
  if (argmax.size() != dout.numel())
    throw ShapeError("maxpool_backward: argmax count " + std::to_string(argmax.size()) +
                     " does not match upstream gradient " + shape_str(dout));
  TensorT<T> din(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) din.data[argmax[i]] += dout.data[i];
  return din;
}

template <class T>
TensorT<T> lrn(const TensorT<T>& input, const LrnSpec& spec) {
  expect_rank(input, 4, "lrn input");
  check_lrn_spec(spec);
  const std::size_t N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
  const std::size_t half = (spec.n - 1) / 2;
  const T alpha_n = static_cast<T>(spec.alpha / static_cast<double>(spec.n));
  const T k0 = static_cast<T>(spec.k);
  const T beta = static_cast<T>(spec.beta);
  TensorT<T> out(input.shape);
  const std::size_t hw = H * W;
  for (std::size_t n = 0; n < N; ++n) {
    const T* in_s = input.data.data() + n * C * hw;
    T* out_s = out.data.data() + n * C * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t lo = c >= half ? c - half : 0;
        const std::size_t hi = std::min(C - 1, c + half);
        T s = 0;
        for (std::size_t j = lo; j <= hi; ++j) {
          const T a = in_s[j * hw + p];
          s += a * a;
        }
        out_s[c * hw + p] = in_s[c * hw + p] * std::pow(k0 + alpha_n * s, -beta);
      }
    }
  }
  maybe_check(out, "lrn");
  return out;
}

template <class T>
TensorT<T> lrn_backward(const TensorT<T>& input, const LrnSpec& spec, const TensorT<T>& dout) {
  expect_rank(input, 4, "lrn input");
  check_lrn_spec(spec);
  if (!input.same_shape(dout))
    throw ShapeError("lrn upstream gradient " + shape_str(dout) + " does not match input");
  const std::size_t N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
  const std::size_t half = (spec.n - 1) / 2;
  const T alpha_n = static_cast<T>(spec.alpha / static_cast<double>(spec.n));
  const T k0 = static_cast<T>(spec.k);
  const T beta = static_cast<T>(spec.beta);
  TensorT<T> din(input.shape);
  const std::size_t hw = H * W;
  std::vector<T> scale(C), t(C);
  for (std::size_t n = 0; n < N; ++n) {
    const T* in_s = input.data.data() + n * C * hw;
    const T* g_s = dout.data.data() + n * C * hw;
    T* din_s = din.data.data() + n * C * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t lo = c >= half ? c - half : 0;
        const std::size_t hi = std::min(C - 1, c + half);
        T s = 0;
        for (std::size_t j = lo; j <= hi; ++j) {
          const T a = in_s[j * hw + p];
          s += a * a;
        }
        const T denom = k0 + alpha_n * s;
        scale[c] = std::pow(denom, -beta);
        // g_c * a_c * denom^(-beta-1)
        t[c] = g_s[c * hw + p] * in_s[c * hw + p] * scale[c] / denom;
      }
      for (std::size_t i = 0; i < C; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(C - 1, i + half);
        T acc = 0;
        for (std::size_t c = lo; c <= hi; ++c) acc += t[c];
        din_s[i * hw + p] =
            g_s[i * hw + p] * scale[i] - T(2) * alpha_n * beta * in_s[i * hw + p] * acc;
      }
    }
  }
  maybe_check(din, "lrn_backward");
  return din;
}

template <class T>
TensorT<T> relu(const TensorT<T>& input) {
  TensorT<T> out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
  return out;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& dout) {
  if (!input.same_shape(dout))
    throw ShapeError("relu upstream gradient " + shape_str(dout) + " does not match input");
  TensorT<T> din(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    din.data[i] = input.data[i] > T(0) ? dout.data[i] : T(0);
  return din;
}

template <class T>
TensorT<T> dense(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias) {
  expect_rank(input, 2, "dense input");
  expect_rank(weights, 2, "dense weights");
  const std::size_t N = input.shape[0], d = input.shape[1];
  const std::size_t m = weights.shape[0];
  if (weights.shape[1] != d)
    throw ShapeError("dense input dimension " + std::to_string(d) + " does not match weights " +
                     shape_str(weights) + " on axis 1");
  if (bias.rank() != 1 || bias.shape[0] != m)
    throw ShapeError("dense bias " + shape_str(bias) + " must be [" + std::to_string(m) + "]");
  TensorT<T> out({N, m});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 0; j < m; ++j) out.at2(n, j) = bias.data[j];
  gemm_bt_accumulate(N, m, d, input.data.data(), weights.data.data(), out.data.data());
  maybe_check(out, "dense");
  return out;
}

template <class T>
DenseGrads<T> dense_backward(const TensorT<T>& input, const TensorT<T>& weights,
                             const TensorT<T>& dout) {
  expect_rank(input, 2, "dense input");
  expect_rank(weights, 2, "dense weights");
  expect_rank(dout, 2, "dense upstream gradient");
  const std::size_t N = input.shape[0], d = input.shape[1], m = weights.shape[0];
  if (dout.shape[0] != N || dout.shape[1] != m)
    throw ShapeError("dense upstream gradient " + shape_str(dout) + " must be [" +
                     std::to_string(N) + "x" + std::to_string(m) + "]");
  DenseGrads<T> g{TensorT<T>({N, d}), TensorT<T>({m, d}), TensorT<T>({m})};
  // din = dout * W
  gemm_accumulate(N, d, m, dout.data.data(), weights.data.data(), g.input.data.data());
  // dW = dout^T * input
  gemm_at_accumulate(m, d, N, dout.data.data(), input.data.data(), g.weights.data.data());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t j = 0; j < m; ++j) g.bias.data[j] += dout.at2(n, j);
  return g;
}

template <class T>
TensorT<T> softmax(const TensorT<T>& logits) {
  expect_rank(logits, 2, "softmax logits");
  const std::size_t N = logits.shape[0], m = logits.shape[1];
  TensorT<T> probs(logits.shape);
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = logits.data.data() + n * m;
    T* prow = probs.data.data() + n * m;
    T mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < m; ++j) {
      prow[j] = std::exp(row[j] - mx);
      z += prow[j];
    }
    for (std::size_t j = 0; j < m; ++j) prow[j] /= z;
  }
  maybe_check(probs, "softmax");
  return probs;
}

template <class T>
XentResult<T> softmax_cross_entropy(const TensorT<T>& logits, std::span<const int> labels) {
  expect_rank(logits, 2, "softmax logits");
  const std::size_t N = logits.shape[0], m = logits.shape[1];
  if (labels.size() != N)
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch " +
                     std::to_string(N));
  for (std::size_t n = 0; n < N; ++n)
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= m)
      throw SpecError("label " + std::to_string(labels[n]) + " at row " + std::to_string(n) +
                      " out of range [0," + std::to_string(m) + ")");
  XentResult<T> r;
  r.probs = softmax(logits);
  double loss = 0.0;  // 64-bit accumulation
  for (std::size_t n = 0; n < N; ++n) {
    const T p = r.probs.at2(n, static_cast<std::size_t>(labels[n]));
    loss -= std::log(std::max(static_cast<double>(p), 1e-45));
  }
  r.loss = loss / static_cast<double>(N);
  return r;
}

template <class T>
TensorT<T> softmax_cross_entropy_backward(const TensorT<T>& probs, std::span<const int> labels) {
  expect_rank(probs, 2, "softmax probs");
  const std::size_t N = probs.shape[0];
  TensorT<T> dlogits(probs.shape);
  const T inv_n = T(1) / static_cast<T>(N);
  for (std::size_t i = 0; i < probs.data.size(); ++i) dlogits.data[i] = probs.data[i] * inv_n;
  for (std::size_t n = 0; n < N; ++n)
    dlogits.at2(n, static_cast<std::size_t>(labels[n])) -= inv_n;
  return dlogits;
}

template <class T>
HingeResult<T> hinge_loss(const TensorT<T>& scores, std::span<const int> labels,
                          double reg_strength, const TensorT<T>* weights) {
  if (scores.rank() != 1)
    throw ShapeError("hinge scores must be rank 1, got " + shape_str(scores));
  const std::size_t N = scores.shape[0];
  if (labels.size() != N)
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match scores " +
                     std::to_string(N));
  HingeResult<T> r;
  r.dscores = TensorT<T>({N});
  double loss = 0.0;
  const T inv_n = T(1) / static_cast<T>(N);
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n] != 1 && labels[n] != -1)
      throw SpecError("hinge label at row " + std::to_string(n) + " must be +1 or -1, got " +
                      std::to_string(labels[n]));
    const T margin = T(1) - static_cast<T>(labels[n]) * scores.data[n];
    if (margin > T(0)) {
      loss += static_cast<double>(margin);
      r.dscores.data[n] = -static_cast<T>(labels[n]) * inv_n;
    }
  }
  r.loss = loss / static_cast<double>(N);
  if (weights) {
    double w2 = 0.0;
    for (const T w : weights->data) w2 += static_cast<double>(w) * static_cast<double>(w);
    r.loss += reg_strength * w2;
  }
  return r;
}

#define SENTINET_INSTANTIATE(T)                                                                    \
  template void assert_all_finite<T>(const TensorT<T>&, const char*);                              \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,           \
                                const ConvSpec&);                                                  \
  template TensorT<T> conv2d_direct<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,   \
                                       const ConvSpec&);                                           \
  template ConvGrads<T> conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const ConvSpec&, \
                                           const TensorT<T>&);                                     \
  template PoolResult<T> maxpool<T>(const TensorT<T>&, const PoolSpec&);                           \
  template TensorT<T> maxpool_backward<T>(const std::vector<std::size_t>&,                         \
                                          const std::vector<std::size_t>&, const TensorT<T>&);     \
  template TensorT<T> lrn<T>(const TensorT<T>&, const LrnSpec&);                                   \
  template TensorT<T> lrn_backward<T>(const TensorT<T>&, const LrnSpec&, const TensorT<T>&);       \
  template TensorT<T> relu<T>(const TensorT<T>&);                                                  \
  template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> dense<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);           \
  template DenseGrads<T> dense_backward<T>(const TensorT<T>&, const TensorT<T>&,                   \
                                           const TensorT<T>&);                                     \
  template TensorT<T> softmax<T>(const TensorT<T>&);                                               \
  template XentResult<T> softmax_cross_entropy<T>(const TensorT<T>&, std::span<const int>);        \
  template TensorT<T> softmax_cross_entropy_backward<T>(const TensorT<T>&, std::span<const int>);  \
  template HingeResult<T> hinge_loss<T>(const TensorT<T>&, std::span<const int>, double,           \
                                         const TensorT<T>*);

SENTINET_INSTANTIATE(float)
SENTINET_INSTANTIATE(double)

#undef SENTINET_INSTANTIATE

}  // namespace sentinet
