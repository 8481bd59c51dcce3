#pragma once

// Data-parallel inner loops of the tensor engine.
//
// Every kernel has a plain serial reference (namespace serial) and an OpenMP
// version (namespace omp). Both accumulate each output element over the same
// index sequence, so their results are bitwise identical for any thread count.
// The tensor ops dispatch to the OpenMP versions; the serial ones are kept for
// tests and the benchmark.

#include <cstddef>
#include <cstdint>
#include <span>

namespace hgt::kernels {

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // inner extent
  bool trans_a = false;  // A stored k x m
  bool trans_b = false;  // B stored n x k
};

struct Conv2dShape {
  std::size_t batch = 0, in_channels = 0, height = 0, width = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, padding = 0;
  std::size_t out_h = 0, out_w = 0;
};

struct Pool2dShape {
  std::size_t planes = 0, height = 0, width = 0;
  std::size_t window = 0, stride = 0;
  std::size_t out_h = 0, out_w = 0;
};

// Kernel contracts (identical in both namespaces):
//   gemm            C = op(A) op(B), or C += op(A) op(B) when accumulate.
//   gemm_batched    gemm over `batch` contiguous matrices.
//   conv2d_forward  y[b,f] = bias[f] + cross-correlation of x[b] with w[f].
//   conv2d_backward_input   dx += transposed correlation of dy with w.
//   conv2d_backward_params  dw += dy (x) x, dbias += sum of dy; either may be empty.
//   max_pool2d_forward      window maxima; argmax holds the flat input index of the
//                           first maximum in row-major window order.
//   max_pool2d_backward     dx[argmax] += dy.

namespace serial {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const double> a,
                  std::span<const double> b, std::span<double> c, bool accumulate);
void conv2d_forward(const Conv2dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const Conv2dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const Conv2dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);
void max_pool2d_forward(const Pool2dShape& s, std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax);
void max_pool2d_backward(const Pool2dShape& s, std::span<const double> dy,
                         std::span<const std::size_t> argmax, std::span<double> dx);
}  // namespace serial

namespace omp {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void gemm_batched(std::size_t batch, const GemmShape& s, std::span<const double> a,
                  std::span<const double> b, std::span<double> c, bool accumulate);
void conv2d_forward(const Conv2dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const Conv2dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv2d_backward_params(const Conv2dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);
void max_pool2d_forward(const Pool2dShape& s, std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax);
void max_pool2d_backward(const Pool2dShape& s, std::span<const double> dy,
                         std::span<const std::size_t> argmax, std::span<double> dx);
}  // namespace omp

// Thread count used by the OpenMP kernels (0 = runtime default).
void set_num_threads(int n);
int num_threads();

}  // namespace hgt::kernels
