#pragma once

// Raw numeric routines shared by the float32 tape ops and the float64
// shadow evaluation used for gradient checking. All reductions run in a
// fixed row-major sequential order so results are reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace eat::kernels {

inline int conv_out_dim(int size, int k, int stride, int pad) {
  return (size + 2 * pad - k) / stride + 1;
}

// Smallest output index whose receptive field starts inside the input.
inline int conv_first_out(int pad, int k_off, int stride) {
  int d = pad - k_off;
  if (d <= 0) return 0;
  return (d + stride - 1) / stride;
}

// One past the largest output index still inside the input.
inline int conv_last_out(int size, int pad, int k_off, int stride, int out_size) {
  int d = size - 1 + pad - k_off;
  if (d < 0) return 0;
  return std::min(out_size, d / stride + 1);
}

template <typename T>
void conv2d_forward(const T* in, int c_in, int h, int w,
                    const T* ker, int c_out, int k, int stride, int pad,
                    T* out, int oh, int ow) {
  std::fill(out, out + static_cast<std::size_t>(c_out) * oh * ow, T(0));
  for (int co = 0; co < c_out; ++co) {
    T* op = out + static_cast<std::size_t>(co) * oh * ow;
    for (int ci = 0; ci < c_in; ++ci) {
      const T* ip = in + static_cast<std::size_t>(ci) * h * w;
      const T* kp = ker + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int oy0 = conv_first_out(pad, ky, stride);
        const int oy1 = conv_last_out(h, pad, ky, stride, oh);
        for (int kx = 0; kx < k; ++kx) {
          const T kv = kp[ky * k + kx];
          const int ox0 = conv_first_out(pad, kx, stride);
          const int ox1 = conv_last_out(w, pad, kx, stride, ow);
          for (int oy = oy0; oy < oy1; ++oy) {
            const T* irow = ip + static_cast<std::size_t>(oy * stride + ky - pad) * w + kx - pad;
            T* orow = op + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += kv * irow[ox * stride];
          }
        }
      }
    }
  }
}

// Accumulates into din; caller provides a zero-initialized buffer when a
// fresh gradient is wanted.
template <typename T>
void conv2d_backward_input(const T* dout, int c_out, int oh, int ow,
                           const T* ker, int c_in, int k, int stride, int pad,
                           T* din, int h, int w) {
  for (int co = 0; co < c_out; ++co) {
    const T* dop = dout + static_cast<std::size_t>(co) * oh * ow;
    for (int ci = 0; ci < c_in; ++ci) {
      T* dip = din + static_cast<std::size_t>(ci) * h * w;
      const T* kp = ker + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int oy0 = conv_first_out(pad, ky, stride);
        const int oy1 = conv_last_out(h, pad, ky, stride, oh);
        for (int kx = 0; kx < k; ++kx) {
          const T kv = kp[ky * k + kx];
          const int ox0 = conv_first_out(pad, kx, stride);
          const int ox1 = conv_last_out(w, pad, kx, stride, ow);
          for (int oy = oy0; oy < oy1; ++oy) {
            T* drow = dip + static_cast<std::size_t>(oy * stride + ky - pad) * w + kx - pad;
            const T* dorow = dop + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox0; ox < ox1; ++ox) drow[ox * stride] += kv * dorow[ox];
          }
        }
      }
    }
  }
}

// Accumulates into dker, same contract as conv2d_backward_input.
template <typename T>
void conv2d_backward_kernel(const T* dout, int c_out, int oh, int ow,
                            const T* in, int c_in, int h, int w,
                            int k, int stride, int pad, T* dker) {
  for (int co = 0; co < c_out; ++co) {
    const T* dop = dout + static_cast<std::size_t>(co) * oh * ow;
    for (int ci = 0; ci < c_in; ++ci) {
      const T* ip = in + static_cast<std::size_t>(ci) * h * w;
      T* dkp = dker + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int oy0 = conv_first_out(pad, ky, stride);
        const int oy1 = conv_last_out(h, pad, ky, stride, oh);
        for (int kx = 0; kx < k; ++kx) {
          const int ox0 = conv_first_out(pad, kx, stride);
          const int ox1 = conv_last_out(w, pad, kx, stride, ow);
          T acc = 0;
          for (int oy = oy0; oy < oy1; ++oy) {
            const T* irow = ip + static_cast<std::size_t>(oy * stride + ky - pad) * w + kx - pad;
            const T* dorow = dop + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox0; ox < ox1; ++ox) acc += dorow[ox] * irow[ox * stride];
          }
          dkp[ky * k + kx] += acc;
        }
      }
    }
  }
}

// Column-major patch matrix: row q = (ci,ky,kx), column p = (oy,ox). The
// convolution then runs as contiguous axpy passes, which vectorize without
// reordering any per-element accumulation.
template <typename T>
void im2col_t(const T* in, int c_in, int h, int w, int k, int stride, int pad,
              int oh, int ow, T* patches_t) {
  const int np = oh * ow;
  int q = 0;
  for (int ci = 0; ci < c_in; ++ci) {
    const T* ip = in + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++q) {
        T* row = patches_t + static_cast<std::size_t>(q) * np;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = ip + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// out[co][p] = sum_q kernel[co][q] * patches_t[q][p]
template <typename T>
void conv2d_forward_cols(const T* patches_t, const T* kernel, int c_out, int cols, int np, T* out) {
  for (int co = 0; co < c_out; ++co) {
    T* __restrict orow = out + static_cast<std::size_t>(co) * np;
    std::fill(orow, orow + np, T(0));
    const T* krow = kernel + static_cast<std::size_t>(co) * cols;
    for (int q = 0; q < cols; ++q) {
      const T kv = krow[q];
      const T* __restrict prow = patches_t + static_cast<std::size_t>(q) * np;
      for (int p = 0; p < np; ++p) orow[p] += kv * prow[p];
    }
  }
}

// dker[co][q] += dot(dout[co][.], patches_t[q][.]); plain sequential sums.
template <typename T>
void conv2d_backward_kernel_cols(const T* dout, const T* patches_t, int c_out, int cols, int np, T* dker) {
  for (int co = 0; co < c_out; ++co) {
    const T* dorow = dout + static_cast<std::size_t>(co) * np;
    T* dkrow = dker + static_cast<std::size_t>(co) * cols;
    for (int q = 0; q < cols; ++q) {
      const T* prow = patches_t + static_cast<std::size_t>(q) * np;
      T acc = 0;
      for (int p = 0; p < np; ++p) acc += dorow[p] * prow[p];
      dkrow[q] += acc;
    }
  }
}

// dpatches_t[q][p] += sum_co dout[co][p] * kernel[co][q]
template <typename T>
void conv2d_backward_patches_cols(const T* dout, const T* kernel, int c_out, int cols, int np, T* dpatches_t) {
  for (int co = 0; co < c_out; ++co) {
    const T* __restrict dorow = dout + static_cast<std::size_t>(co) * np;
    const T* krow = kernel + static_cast<std::size_t>(co) * cols;
    for (int q = 0; q < cols; ++q) {
      const T kv = krow[q];
      T* __restrict drow = dpatches_t + static_cast<std::size_t>(q) * np;
      for (int p = 0; p < np; ++p) drow[p] += kv * dorow[p];
    }
  }
}

// Scatters patch gradients back onto the input plane; accumulates into din.
template <typename T>
void col2im_t(const T* dpatches_t, int c_in, int h, int w, int k, int stride, int pad,
              int oh, int ow, T* din) {
  const int np = oh * ow;
  int q = 0;
  for (int ci = 0; ci < c_in; ++ci) {
    T* dp = din + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++q) {
        const T* row = dpatches_t + static_cast<std::size_t>(q) * np;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = dp + static_cast<std::size_t>(iy) * w;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void matmul(const T* a, int m, int k, const T* b, int n, T* out) {
  std::fill(out, out + static_cast<std::size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* __restrict orow = out + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* __restrict brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// dA = dC * B^T
template <typename T>
void matmul_backward_a(const T* dout, int m, int n, const T* b, int k, T* da) {
  for (int i = 0; i < m; ++i) {
    const T* drow = dout + static_cast<std::size_t>(i) * n;
    T* darow = da + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const T* brow = b + static_cast<std::size_t>(kk) * n;
      T acc = 0;
      for (int j = 0; j < n; ++j) acc += drow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// dB = A^T * dC
template <typename T>
void matmul_backward_b(const T* dout, int m, int n, const T* a, int k, T* db) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    const T* drow = dout + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      T* __restrict dbrow = db + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * drow[j];
    }
  }
}

template <typename T>
void relu(const T* in, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// Rows of width d, max-subtracted for stability.
template <typename T>
void softmax_rows(const T* in, int rows, int d, T* out) {
  for (int r = 0; r < rows; ++r) {
    const T* irow = in + static_cast<std::size_t>(r) * d;
    T* orow = out + static_cast<std::size_t>(r) * d;
    T mx = irow[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, irow[i]);
    T sum = 0;
    for (int i = 0; i < d; ++i) {
      orow[i] = std::exp(irow[i] - mx);
      sum += orow[i];
    }
    for (int i = 0; i < d; ++i) orow[i] /= sum;
  }
}

inline constexpr double kLogClamp = 1e-12;

// CE = -(1/D) * sum gt_i * log(max(p_i, clamp))
template <typename T>
T cross_entropy(const T* gt, const T* p, int d) {
  T acc = 0;
  for (int i = 0; i < d; ++i) acc += gt[i] * std::log(std::max(p[i], T(kLogClamp)));
  return -acc / T(d);
}

template <typename T>
void maxpool2d(const T* in, int c, int h, int w, int k, int stride,
               T* out, int oh, int ow, int* argmax) {
  for (int ci = 0; ci < c; ++ci) {
    const T* ip = in + static_cast<std::size_t>(ci) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int best = oy * stride * w + ox * stride;
        T bv = ip[best];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const int idx = (oy * stride + ky) * w + ox * stride + kx;
            if (ip[idx] > bv) {
              bv = ip[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(ci) * oh + oy) * ow + ox;
        out[o] = bv;
        if (argmax) argmax[o] = ci * h * w + best;
      }
    }
  }
}

template <typename T>
void avgpool_global(const T* in, int c, int h, int w, T* out) {
  const T inv = T(1) / T(h * w);
  for (int ci = 0; ci < c; ++ci) {
    const T* ip = in + static_cast<std::size_t>(ci) * h * w;
    T acc = 0;
    for (int i = 0; i < h * w; ++i) acc += ip[i];
    out[ci] = acc * inv;
  }
}

// Half-pixel-center bilinear resampling of one plane.
template <typename T>
void bilinear_resize(const T* in, int h, int w, T* out, int oh, int ow) {
  for (int y = 0; y < oh; ++y) {
    T sy = (T(y) + T(0.5)) * T(h) / T(oh) - T(0.5);
    sy = std::min(std::max(sy, T(0)), T(h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, h - 1);
    const T fy = sy - T(y0);
    for (int x = 0; x < ow; ++x) {
      T sx = (T(x) + T(0.5)) * T(w) / T(ow) - T(0.5);
      sx = std::min(std::max(sx, T(0)), T(w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, w - 1);
      const T fx = sx - T(x0);
      const T top = in[y0 * w + x0] * (T(1) - fx) + in[y0 * w + x1] * fx;
      const T bot = in[y1 * w + x0] * (T(1) - fx) + in[y1 * w + x1] * fx;
      out[y * ow + x] = top * (T(1) - fy) + bot * fy;
    }
  }
}

}  // namespace eat::kernels
