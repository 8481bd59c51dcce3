#pragma once

// Central-difference gradient oracle and the comparison rule used by every
// gradient test: elements whose analytic value is below `small` in magnitude
// are compared absolutely against `small`, the rest relatively.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "hgtnet/rng.hpp"
#include "hgtnet/tensor.hpp"

namespace hgt {

using ScalarFn = std::function<Tensor(const Tensor&)>;
using MultiScalarFn = std::function<Tensor(std::span<const Tensor>)>;

// (f(x + h e_i) - f(x - h e_i)) / 2h for every element of x. Evaluated
// without graph recording; x is restored bitwise.
Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double h = 1e-5);

struct GradCheckResult {
  double max_rel_error = 0.0;        // over elements with |analytic| >= small
  double max_small_abs_error = 0.0;  // over elements with |analytic| < small
  std::size_t checked = 0;

  bool passed(double rel_tol, double small = 1e-6) const {
    return max_rel_error < rel_tol && max_small_abs_error < small;
  }
  void merge(const GradCheckResult& other);
};

GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double small = 1e-6);

struct GradCheckOptions {
  double step = 1e-5;
  double small = 1e-6;
  // 0 checks every element; otherwise this many elements per input, sampled
  // without replacement by `sampler`.
  std::size_t max_elements_per_input = 0;
  RngStream sampler{0, 0};
};

// Backward of f(inputs) vs central differences for each input. Inputs are
// made to require grad; their grads are reset first.
GradCheckResult gradcheck(const MultiScalarFn& f, std::span<const Tensor> inputs,
                          const GradCheckOptions& options = {});

// Identity in the forward pass; scales the incoming gradient by `factor` in
// the backward pass. Fault-injection hook for exercising the checker.
Tensor corrupt_gradient(const Tensor& x, double factor);

}  // namespace hgt
