// OpenMP kernels. Parallel loops run over independent output blocks only
// (rows, planes, filters), never over a reduction, so results match the
// serial reference bitwise.

#include <omp.h>

#include <algorithm>
#include <cstdint>

#include "hgtnet/kernels.hpp"

namespace hgt::kernels {

namespace {

int g_threads = 0;

int threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

// Output index range [lo, hi) whose input coordinate o * stride + k - pad lies in [0, extent).
struct Range {
  std::int64_t lo, hi;
};

Range valid_range(std::size_t out, std::size_t extent, std::size_t stride, std::size_t k,
                  std::size_t pad) {
  const auto s = static_cast<std::int64_t>(stride);
  const std::int64_t shift = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(pad);
  std::int64_t lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
  std::int64_t hi_in = static_cast<std::int64_t>(extent) - 1 - shift;
  std::int64_t hi = hi_in < 0 ? 0 : hi_in / s + 1;
  hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(out));
  return {lo, std::max(lo, hi)};
}

}  // namespace

void set_num_threads(int n) { g_threads = n; }
int num_threads() { return threads(); }

namespace omp {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  gemm_batched(1, s, a, b, c, accumulate);
}

void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const double> a,
                  std::span<const double> b, std::span<double> c, bool accumulate) {
  const std::size_t m = s.m, n = s.n, k = s.k;
  const auto rows = static_cast<std::int64_t>(batch * m);
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static) num_threads(threads()) if (rows * n * k > 32768)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::size_t t = static_cast<std::size_t>(r) / m;
    const std::size_t i = static_cast<std::size_t>(r) % m;
    const double* at = ap + t * m * k;
    const double* bt = bp + t * k * n;
    double* crow = cp + t * m * n + i * n;
    if (s.trans_b) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = accumulate ? crow[j] : 0.0;
        const double* bcol = bt + j * k;
        if (s.trans_a) {
          for (std::size_t p = 0; p < k; ++p) acc += at[p * m + i] * bcol[p];
        } else {
          const double* arow = at + i * k;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bcol[p];
        }
        crow[j] = acc;
      }
    } else {
      if (!accumulate) std::fill(crow, crow + n, 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = s.trans_a ? at[p * m + i] : at[i * k + p];
        const double* brow = bt + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void conv2d_forward(const Conv2dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const auto planes = static_cast<std::int64_t>(s.batch * s.out_channels);
  const std::size_t in_plane = s.height * s.width;
  const std::size_t out_plane = s.out_h * s.out_w;
  const std::size_t ksize = s.kernel_h * s.kernel_w;
#pragma omp parallel for schedule(static) num_threads(threads())
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const std::size_t b = static_cast<std::size_t>(pl) / s.out_channels;
    const std::size_t f = static_cast<std::size_t>(pl) % s.out_channels;
    double* yp = y.data() + static_cast<std::size_t>(pl) * out_plane;
    std::fill(yp, yp + out_plane, bias.empty() ? 0.0 : bias[f]);
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* xp = x.data() + (b * s.in_channels + c) * in_plane;
      const double* wp = w.data() + (f * s.in_channels + c) * ksize;
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        const Range ry = valid_range(s.out_h, s.height, s.stride, ky, s.padding);
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          const Range rx = valid_range(s.out_w, s.width, s.stride, kx, s.padding);
          const double wv = wp[ky * s.kernel_w + kx];
          for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
            const std::size_t iy = oy * s.stride + ky - s.padding;
            const double* xrow = xp + iy * s.width;
            double* yrow = yp + oy * s.out_w;
            if (s.stride == 1) {
              const std::int64_t off = static_cast<std::int64_t>(kx) - static_cast<std::int64_t>(s.padding);
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) yrow[ox] += wv * xrow[ox + off];
            } else {
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) {
                yrow[ox] += wv * xrow[ox * s.stride + kx - s.padding];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const auto planes = static_cast<std::int64_t>(s.batch * s.in_channels);
  const std::size_t in_plane = s.height * s.width;
  const std::size_t out_plane = s.out_h * s.out_w;
  const std::size_t ksize = s.kernel_h * s.kernel_w;
#pragma omp parallel for schedule(static) num_threads(threads())
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const std::size_t b = static_cast<std::size_t>(pl) / s.in_channels;
    const std::size_t c = static_cast<std::size_t>(pl) % s.in_channels;
    double* dxp = dx.data() + static_cast<std::size_t>(pl) * in_plane;
    for (std::size_t f = 0; f < s.out_channels; ++f) {
      const double* dyp = dy.data() + (b * s.out_channels + f) * out_plane;
      const double* wp = w.data() + (f * s.in_channels + c) * ksize;
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        const Range ry = valid_range(s.out_h, s.height, s.stride, ky, s.padding);
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          const Range rx = valid_range(s.out_w, s.width, s.stride, kx, s.padding);
          const double wv = wp[ky * s.kernel_w + kx];
          for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
            double* dxrow = dxp + (oy * s.stride + ky - s.padding) * s.width;
            const double* dyrow = dyp + oy * s.out_w;
            for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) {
              dxrow[ox * s.stride + kx - s.padding] += dyrow[ox] * wv;
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
  const std::size_t in_plane = s.height * s.width;
  const std::size_t out_plane = s.out_h * s.out_w;
  const std::size_t ksize = s.kernel_h * s.kernel_w;
#pragma omp parallel for schedule(static) num_threads(threads())
  for (std::int64_t fi = 0; fi < static_cast<std::int64_t>(s.out_channels); ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    if (!dbias.empty()) {
      double acc = dbias[f];
      for (std::size_t b = 0; b < s.batch; ++b) {
        const double* dyp = dy.data() + (b * s.out_channels + f) * out_plane;
        for (std::size_t o = 0; o < out_plane; ++o) acc += dyp[o];
      }
      dbias[f] = acc;
    }
    if (dw.empty()) continue;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
        const Range ry = valid_range(s.out_h, s.height, s.stride, ky, s.padding);
        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
          const Range rx = valid_range(s.out_w, s.width, s.stride, kx, s.padding);
          double acc = dw[(f * s.in_channels + c) * ksize + ky * s.kernel_w + kx];
          for (std::size_t b = 0; b < s.batch; ++b) {
            const double* dyp = dy.data() + (b * s.out_channels + f) * out_plane;
            const double* xp = x.data() + (b * s.in_channels + c) * in_plane;
            for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
              const double* xrow = xp + (oy * s.stride + ky - s.padding) * s.width;
              const double* dyrow = dyp + oy * s.out_w;
              for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) {
                acc += dyrow[ox] * xrow[ox * s.stride + kx - s.padding];
              }
            }
          }
          dw[(f * s.in_channels + c) * ksize + ky * s.kernel_w + kx] = acc;
        }
      }
    }
  }
}

void max_pool2d_forward(const Pool2dShape& s, std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax) {
#pragma omp parallel for schedule(static) num_threads(threads())
  for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(s.planes); ++pi) {
    const auto p = static_cast<std::size_t>(pi);
    const std::size_t base = p * s.height * s.width;
    for (std::size_t oy = 0; oy < s.out_h; ++oy) {
      for (std::size_t ox = 0; ox < s.out_w; ++ox) {
        std::size_t best = base + oy * s.stride * s.width + ox * s.stride;
        double best_v = x[best];
        for (std::size_t ky = 0; ky < s.window; ++ky) {
          const std::size_t row = base + (oy * s.stride + ky) * s.width + ox * s.stride;
          for (std::size_t kx = 0; kx < s.window; ++kx) {
            if (x[row + kx] > best_v) {
              best_v = x[row + kx];
              best = row + kx;
            }
          }
        }
        const std::size_t o = (p * s.out_h + oy) * s.out_w + ox;
        y[o] = best_v;
        argmax[o] = best;
      }
    }
  }
}

void max_pool2d_backward(const Pool2dShape& s, std::span<const double> dy,
                         std::span<const std::size_t> argmax, std::span<double> dx) {
  const std::size_t per_plane = s.out_h * s.out_w;
#pragma omp parallel for schedule(static) num_threads(threads())
  for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(s.planes); ++pi) {
    const std::size_t begin = static_cast<std::size_t>(pi) * per_plane;
    for (std::size_t o = begin; o < begin + per_plane; ++o) dx[argmax[o]] += dy[o];
  }
}

}  // namespace omp
}  // namespace hgt::kernels
