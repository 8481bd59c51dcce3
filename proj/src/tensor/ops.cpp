#include "hgtnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hgtnet/errors.hpp"
#include "hgtnet/kernels.hpp"

namespace hgt {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::vector<double> copy_data(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

// ---- elementwise and broadcasting ----

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = copy_data(a);
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "add",
                             [a, b](std::span<const double> g) {
                               for (const Tensor* t : {&a, &b}) {
                                 auto sink = t->grad_sink();
                                 for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += g[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = copy_data(a);
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "sub",
                             [a, b](std::span<const double> g) {
                               auto ga = a.grad_sink();
                               for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                               auto gb = b.grad_sink();
                               for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = copy_data(a);
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, "mul",
                             [a, b](std::span<const double> g) {
                               auto ga = a.grad_sink();
                               const auto bd = b.data();
                               for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bd[i];
                               auto gb = b.grad_sink();
                               const auto ad = a.data();
                               for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ad[i];
                             });
}

Tensor scale(const Tensor& a, double factor) {
  auto out = copy_data(a);
  for (double& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, "scale",
                             [a, factor](std::span<const double> g) {
                               auto ga = a.grad_sink();
                               for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                             });
}

Tensor add_broadcast(const Tensor& x, const Tensor& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.begin(), ys.end(), xs.end() - ys.size())) {
    throw DimensionError("add_broadcast: " + shape_str(ys) + " is not a trailing shape of " +
                         shape_str(xs));
  }
  const std::size_t inner = y.numel();
  auto out = copy_data(x);
  const auto yd = y.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yd[i % inner];
  return Tensor::make_result(xs, std::move(out), {x, y}, "add_broadcast",
                             [x, y, inner](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                               auto gy = y.grad_sink();
                               if (gy.empty()) return;
                               for (std::size_t i = 0; i < g.size(); ++i) gy[i % inner] += g[i];
                             });
}

Tensor pairwise_add(const Tensor& row, const Tensor& col) {
  require_same_shape(row, col, "pairwise_add");
  if (row.rank() != 2) throw DimensionError("pairwise_add expects B x N, got " + shape_str(row.shape()));
  const std::size_t batch = row.dim(0), n = row.dim(1);
  std::vector<double> out(batch * n * n);
  const auto rd = row.data();
  const auto cd = col.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[(b * n + i) * n + j] = rd[b * n + i] + cd[b * n + j];
    }
  }
  return Tensor::make_result({batch, n, n}, std::move(out), {row, col}, "pairwise_add",
                             [row, col, batch, n](std::span<const double> g) {
                               auto gr = row.grad_sink();
                               auto gc = col.grad_sink();
                               for (std::size_t b = 0; b < batch; ++b) {
                                 for (std::size_t i = 0; i < n; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) {
                                     const double v = g[(b * n + i) * n + j];
                                     if (!gr.empty()) gr[b * n + i] += v;
                                     if (!gc.empty()) gc[b * n + j] += v;
                                   }
                                 }
                               }
                             });
}

// ---- shape ----

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return Tensor::make_result(std::move(shape), copy_data(x), {x}, "reshape",
                             [x](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                             });
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) throw DimensionError("permute: axes rank mismatch for " + shape_str(in));
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: invalid axes for " + shape_str(in));
    seen[a] = true;
  }
  Shape out_shape(rank);
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  std::vector<std::size_t> stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  const std::size_t n = x.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < n; ++o) {
    (*source)[o] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      offset += stride[d];
      if (++idx[d] < out_shape[d]) break;
      offset -= stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto xd = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xd[(*source)[o]];
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "permute",
                             [x, source](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t o = 0; o < g.size(); ++o) gx[(*source)[o]] += g[o];
                             });
}

Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes) {
  return permute(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor transpose_last(const Tensor& x) {
  const std::size_t rank = x.rank();
  if (rank < 2) throw DimensionError("transpose_last needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> axes(rank);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[rank - 1], axes[rank - 2]);
  return permute(x, axes);
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != bs.size() || !std::equal(as.begin(), as.end() - 1, bs.begin())) {
    throw DimensionError("concat_last: leading dims differ " + shape_str(as) + " vs " + shape_str(bs));
  }
  const std::size_t na = as.back(), nb = bs.back();
  const std::size_t rows = a.numel() / na;
  Shape out_shape = as;
  out_shape.back() = na + nb;
  std::vector<double> out(rows * (na + nb));
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ad.begin() + r * na, na, out.begin() + r * (na + nb));
    std::copy_n(bd.begin() + r * nb, nb, out.begin() + r * (na + nb) + na);
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, "concat_last",
                             [a, b, rows, na, nb](std::span<const double> g) {
                               auto ga = a.grad_sink();
                               auto gb = b.grad_sink();
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t i = 0; i < na && !ga.empty(); ++i)
                                   ga[r * na + i] += g[r * (na + nb) + i];
                                 for (std::size_t i = 0; i < nb && !gb.empty(); ++i)
                                   gb[r * nb + i] += g[r * (na + nb) + na + i];
                               }
                             });
}

Tensor concat_first(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != bs.size() || !std::equal(as.begin() + 1, as.end(), bs.begin() + 1)) {
    throw DimensionError("concat_first: trailing dims differ " + shape_str(as) + " vs " + shape_str(bs));
  }
  Shape out_shape = as;
  out_shape[0] += bs[0];
  auto out = copy_data(a);
  out.insert(out.end(), b.data().begin(), b.data().end());
  const std::size_t split = a.numel();
  return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, "concat_first",
                             [a, b, split](std::span<const double> g) {
                               auto ga = a.grad_sink();
                               for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                               auto gb = b.grad_sink();
                               for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
                             });
}

Tensor narrow_first(const Tensor& x, std::size_t start, std::size_t length) {
  const Shape& xs = x.shape();
  if (length == 0 || start + length > xs[0]) {
    throw DimensionError("narrow_first: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of range for " + shape_str(xs));
  }
  const std::size_t inner = x.numel() / xs[0];
  Shape out_shape = xs;
  out_shape[0] = length;
  std::vector<double> out(x.data().begin() + start * inner, x.data().begin() + (start + length) * inner);
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "narrow_first",
                             [x, offset = start * inner](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
                             });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result({1}, {acc}, {x}, "sum", [x](std::span<const double> g) {
    auto gx = x.grad_sink();
    for (double& v : gx) v += g[0];
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const Shape& xs = x.shape();
  if (axis >= xs.size()) throw DimensionError("mean_axis: axis out of range for " + shape_str(xs));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t len = xs[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i != axis) out_shape.push_back(xs[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xd[(o * len + l) * inner + i];
    }
  }
  const double inv = 1.0 / static_cast<double>(len);
  for (double& v : out) v *= inv;
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "mean_axis",
                             [x, outer, len, inner, inv](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t l = 0; l < len; ++l)
                                   for (std::size_t i = 0; i < inner; ++i)
                                     gx[(o * len + l) * inner + i] += g[o * inner + i] * inv;
                             });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::omp::gemm({m, n, k, false, false}, a.data(), b.data(), out, false);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, "matmul",
                             [a, b, m, n, k](std::span<const double> g) {
                               if (auto ga = a.grad_sink(); !ga.empty())
                                 kernels::omp::gemm({m, k, n, false, true}, g, b.data(), ga, true);
                               if (auto gb = b.grad_sink(); !gb.empty())
                                 kernels::omp::gemm({k, n, m, true, false}, a.data(), g, gb, true);
                             });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n);
  kernels::omp::gemm_batched(batch, {m, n, k, false, false}, a.data(), b.data(), out, false);
  return Tensor::make_result(
      {batch, m, n}, std::move(out), {a, b}, "bmm", [a, b, batch, m, n, k](std::span<const double> g) {
        if (auto ga = a.grad_sink(); !ga.empty())
          kernels::omp::gemm_batched(batch, {m, k, n, false, true}, g, b.data(), ga, true);
        if (auto gb = b.grad_sink(); !gb.empty())
          kernels::omp::gemm_batched(batch, {k, n, m, true, false}, a.data(), g, gb, true);
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0), out = w.dim(1);
  Tensor y = matmul(reshape(x, {x.numel() / in, in}), w);
  if (bias.defined()) y = add_broadcast(y, bias);
  Shape out_shape = x.shape();
  out_shape.back() = out;
  return reshape(y, std::move(out_shape));
}

// ---- convolution and pooling ----

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0))) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  if (stride == 0) throw GeometryError("conv2d: stride must be positive");
  kernels::Conv2dShape s;
  s.batch = x.dim(0);
  s.in_channels = x.dim(1);
  s.height = x.dim(2);
  s.width = x.dim(3);
  s.out_channels = w.dim(0);
  s.kernel_h = w.dim(2);
  s.kernel_w = w.dim(3);
  s.stride = stride;
  s.padding = padding;
  const std::size_t span_h = s.height + 2 * padding, span_w = s.width + 2 * padding;
  if (s.kernel_h > span_h || s.kernel_w > span_w || (span_h - s.kernel_h) % stride != 0 ||
      (span_w - s.kernel_w) % stride != 0) {
    throw GeometryError("conv2d: kernel " + std::to_string(s.kernel_h) + "x" +
                        std::to_string(s.kernel_w) + " with stride " + std::to_string(stride) +
                        " and padding " + std::to_string(padding) +
                        " does not tile input " + shape_str(x.shape()));
  }
  s.out_h = (span_h - s.kernel_h) / stride + 1;
  s.out_w = (span_w - s.kernel_w) / stride + 1;
  std::vector<double> out(s.batch * s.out_channels * s.out_h * s.out_w);
  kernels::omp::conv2d_forward(s, x.data(), w.data(),
                               bias.defined() ? bias.data() : std::span<const double>(), out);
  return Tensor::make_result({s.batch, s.out_channels, s.out_h, s.out_w}, std::move(out), {x, w, bias},
                             "conv2d", [x, w, bias, s](std::span<const double> g) {
                               if (auto gx = x.grad_sink(); !gx.empty())
                                 kernels::omp::conv2d_backward_input(s, g, w.data(), gx);
                               auto gw = w.grad_sink();
                               auto gb = bias.defined() ? bias.grad_sink() : std::span<double>();
                               if (!gw.empty() || !gb.empty())
                                 kernels::omp::conv2d_backward_params(s, g, x.data(), gw, gb);
                             });
}

Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  if (x.rank() != 4) throw DimensionError("max_pool2d expects B x C x H x W, got " + shape_str(x.shape()));
  if (window == 0 || stride == 0) throw GeometryError("max_pool2d: window and stride must be positive");
  kernels::Pool2dShape s;
  s.planes = x.dim(0) * x.dim(1);
  s.height = x.dim(2);
  s.width = x.dim(3);
  s.window = window;
  s.stride = stride;
  if (window > s.height || window > s.width) {
    throw GeometryError("max_pool2d: window " + std::to_string(window) + " larger than input " +
                        shape_str(x.shape()));
  }
  s.out_h = (s.height - window) / stride + 1;
  s.out_w = (s.width - window) / stride + 1;
  std::vector<double> out(s.planes * s.out_h * s.out_w);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  kernels::omp::max_pool2d_forward(s, x.data(), out, *argmax);
  return Tensor::make_result({x.dim(0), x.dim(1), s.out_h, s.out_w}, std::move(out), {x}, "max_pool2d",
                             [x, s, argmax](std::span<const double> g) {
                               kernels::omp::max_pool2d_backward(s, g, *argmax, x.grad_sink());
                             });
}

// ---- normalization ----

namespace {

void softmax_backward(std::span<const double> y, std::span<const double> g, std::span<double> gx,
                      std::size_t n) {
  const std::size_t rows = y.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
    for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& x) {
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[r * n + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= total;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, "softmax",
                             [x, y, n](std::span<const double> g) {
                               softmax_backward(*y, g, x.grad_sink(), n);
                             });
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask) {
  if (x.rank() < 2 || x.dim(x.rank() - 1) != x.dim(x.rank() - 2) ||
      mask.size() != x.dim(x.rank() - 1) * x.dim(x.rank() - 1)) {
    throw DimensionError("masked_softmax: expected [..., N, N] with an N x N mask, got " +
                         shape_str(x.shape()) + " and mask of " + std::to_string(mask.size()));
  }
  const std::size_t n = last_dim(x);
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel(), 0.0);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t i = r % n;
    const double* row = xd.data() + r * n;
    double mx = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[i * n + j]) continue;
      mx = any ? std::max(mx, row[j]) : row[j];
      any = true;
    }
    if (!any) throw ContractError("masked_softmax: row " + std::to_string(i) + " has no unmasked entry");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[i * n + j]) total += out[r * n + j] = std::exp(row[j] - mx);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[i * n + j]) out[r * n + j] /= total;
    }
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor::make_result(x.shape(), std::move(out), {x}, "masked_softmax",
                             [x, y, n](std::span<const double> g) {
                               // Masked outputs are exactly zero, so their gradient vanishes.
                               softmax_backward(*y, g, x.grad_sink(), n);
                             });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = last_dim(x);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.shape() != gamma.shape()) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()) + " do not match input " + shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * inv;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gd[j] * h + bd[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
      [x, gamma, beta, xhat, inv_std, d, rows](std::span<const double> g) {
        auto gg = gamma.grad_sink();
        auto gb = beta.grad_sink();
        auto gx = x.grad_sink();
        const auto gd = gamma.data();
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_gh = 0.0, sum_gh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gv = g[r * d + j];
            const double h = (*xhat)[r * d + j];
            if (!gg.empty()) gg[j] += gv * h;
            if (!gb.empty()) gb[j] += gv;
            const double gh = gv * gd[j];
            sum_gh += gh;
            sum_gh_h += gh * h;
          }
          if (gx.empty()) continue;
          const double k = (*inv_std)[r] / static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = g[r * d + j] * gd[j];
            gx[r * d + j] += k * (static_cast<double>(d) * gh - sum_gh - (*xhat)[r * d + j] * sum_gh_h);
          }
        }
      });
}

// ---- activations ----

ActivationKind parse_activation(const std::string& name) {
  if (name == "relu") return ActivationKind::kRelu;
  if (name == "gelu") return ActivationKind::kGelu;
  if (name == "leaky_relu") return ActivationKind::kLeakyRelu;
  throw ConfigError("unknown activation '" + name + "'");
}

Tensor activation(const Tensor& x, Activation act) {
  switch (act.kind) {
    case ActivationKind::kRelu:
      return relu(x);
    case ActivationKind::kGelu:
      return gelu(x);
    case ActivationKind::kLeakyRelu:
      return leaky_relu(x, act.slope);
  }
  throw ConfigError("unknown activation kind");
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor leaky_relu(const Tensor& x, double slope) {
  auto out = copy_data(x);
  for (double& v : out) v = v > 0.0 ? v : slope * v;
  return Tensor::make_result(x.shape(), std::move(out), {x}, slope == 0.0 ? "relu" : "leaky_relu",
                             [x, slope](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               const auto xd = x.data();
                               for (std::size_t i = 0; i < gx.size(); ++i)
                                 gx[i] += xd[i] > 0.0 ? g[i] : slope * g[i];
                             });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  auto out = copy_data(x);
  for (double& v : out) v = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  return Tensor::make_result(x.shape(), std::move(out), {x}, "gelu", [x](std::span<const double> g) {
    auto gx = x.grad_sink();
    const auto xd = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xd[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool training, const RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto factor = std::make_shared<std::vector<double>>(x.numel());
  auto out = copy_data(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*factor)[i] = rng.uniform_at(i) < p ? 0.0 : keep_scale;
    out[i] *= (*factor)[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, "dropout",
                             [x, factor](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*factor)[i];
                             });
}

}  // namespace hgt
