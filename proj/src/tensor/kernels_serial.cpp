// Serial reference kernels. Straight nested loops; each output element is
// accumulated over the same index order as the OpenMP versions.

#include <algorithm>

#include "hgtnet/kernels.hpp"

namespace hgt::kernels::serial {

namespace {

inline double a_at(const GemmShape& s, std::span<const double> a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double b_at(const GemmShape& s, std::span<const double> b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

}  // namespace

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = accumulate ? c[i * s.n + j] : 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += a_at(s, a, i, p) * b_at(s, b, p, j);
      c[i * s.n + j] = acc;
    }
  }
}

void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const double> a,
                  std::span<const double> b, std::span<double> c, bool accumulate) {
  const std::size_t sa = s.m * s.k, sb = s.k * s.n, sc = s.m * s.n;
  for (std::size_t t = 0; t < batch; ++t) {
    gemm(s, a.subspan(t * sa, sa), b.subspan(t * sb, sb), c.subspan(t * sc, sc), accumulate);
  }
}

void conv2d_forward(const Conv2dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t f = 0; f < s.out_channels; ++f) {
      for (std::size_t oy = 0; oy < s.out_h; ++oy) {
        for (std::size_t ox = 0; ox < s.out_w; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[f];
          for (std::size_t c = 0; c < s.in_channels; ++c) {
            for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
              for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.padding);
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) ||
                    ix >= static_cast<long>(s.width)) {
                  continue;
                }
                acc += w[((f * s.in_channels + c) * s.kernel_h + ky) * s.kernel_w + kx] *
                       x[((b * s.in_channels + c) * s.height + iy) * s.width + ix];
              }
            }
          }
          y[((b * s.out_channels + f) * s.out_h + oy) * s.out_w + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      for (std::size_t f = 0; f < s.out_channels; ++f) {
        for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
          for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
            const double wv = w[((f * s.in_channels + c) * s.kernel_h + ky) * s.kernel_w + kx];
            for (std::size_t oy = 0; oy < s.out_h; ++oy) {
              for (std::size_t ox = 0; ox < s.out_w; ++ox) {
                const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.padding);
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) ||
                    ix >= static_cast<long>(s.width)) {
                  continue;
                }
                dx[((b * s.in_channels + c) * s.height + iy) * s.width + ix] +=
                    dy[((b * s.out_channels + f) * s.out_h + oy) * s.out_w + ox] * wv;
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const Conv2dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
  for (std::size_t f = 0; f < s.out_channels; ++f) {
    if (!dbias.empty()) {
      double acc = dbias[f];
      for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t o = 0; o < s.out_h * s.out_w; ++o) {
          acc += dy[(b * s.out_channels + f) * s.out_h * s.out_w + o];
        }
      }
      dbias[f] = acc;
    }
    if (dw.empty()) continue;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          double& acc = dw[((f * s.in_channels + c) * s.kernel_h + ky) * s.kernel_w + kx];
          for (std::size_t b = 0; b < s.batch; ++b) {
            for (std::size_t oy = 0; oy < s.out_h; ++oy) {
              for (std::size_t ox = 0; ox < s.out_w; ++ox) {
                const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.padding);
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s.height) ||
                    ix >= static_cast<long>(s.width)) {
                  continue;
                }
                acc += dy[((b * s.out_channels + f) * s.out_h + oy) * s.out_w + ox] *
                       x[((b * s.in_channels + c) * s.height + iy) * s.width + ix];
              }
            }
          }
        }
      }
    }
  }
}

void max_pool2d_forward(const Pool2dShape& s, std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax) {
  for (std::size_t p = 0; p < s.planes; ++p) {
    for (std::size_t oy = 0; oy < s.out_h; ++oy) {
      for (std::size_t ox = 0; ox < s.out_w; ++ox) {
        std::size_t best = (p * s.height + oy * s.stride) * s.width + ox * s.stride;
        for (std::size_t ky = 0; ky < s.window; ++ky) {
          for (std::size_t kx = 0; kx < s.window; ++kx) {
            const std::size_t idx = (p * s.height + oy * s.stride + ky) * s.width + ox * s.stride + kx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * s.out_h + oy) * s.out_w + ox;
        y[o] = x[best];
        argmax[o] = best;
      }
    }
  }
}

void max_pool2d_backward(const Pool2dShape& s, std::span<const double> dy,
                         std::span<const std::size_t> argmax, std::span<double> dx) {
  const std::size_t n = s.planes * s.out_h * s.out_w;
  for (std::size_t o = 0; o < n; ++o) dx[argmax[o]] += dy[o];
}

}  // namespace hgt::kernels::serial
