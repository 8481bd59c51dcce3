#include "hgtnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hgtnet/errors.hpp"

namespace hgt {

namespace {

double central_difference(const std::function<double()>& eval, double& slot, double h) {
  const double saved = slot;
  slot = saved + h;
  const double plus = eval();
  slot = saved - h;
  const double minus = eval();
  slot = saved;
  return (plus - minus) / (2.0 * h);
}

std::vector<std::size_t> pick_elements(std::size_t n, std::size_t limit, RngStream& sampler) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= n) return idx;
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(sampler.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  NoGradGuard no_grad;
  Tensor probe = x;
  auto values = probe.mutable_data();
  std::vector<double> grad(values.size());
  const auto eval = [&] { return f(probe).item(); };
  for (std::size_t i = 0; i < values.size(); ++i) grad[i] = central_difference(eval, values[i], h);
  return Tensor::from_data(x.shape(), std::move(grad));
}

void GradCheckResult::merge(const GradCheckResult& other) {
  max_rel_error = std::max(max_rel_error, other.max_rel_error);
  max_small_abs_error = std::max(max_small_abs_error, other.max_small_abs_error);
  checked += other.checked;
}

GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double small) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient length mismatch");
  GradCheckResult r;
  r.checked = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    if (!std::isfinite(analytic[i]) || !std::isfinite(numeric[i])) {
      r.max_rel_error = INFINITY;
    } else if (std::abs(analytic[i]) < small) {
      r.max_small_abs_error = std::max(r.max_small_abs_error, diff);
    } else {
      r.max_rel_error = std::max(r.max_rel_error, diff / std::max(std::abs(analytic[i]), std::abs(numeric[i])));
    }
  }
  return r;
}

GradCheckResult gradcheck(const MultiScalarFn& f, std::span<const Tensor> inputs,
                          const GradCheckOptions& options) {
  std::vector<Tensor> leaves(inputs.begin(), inputs.end());
  for (Tensor& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  f(leaves).backward();

  GradCheckResult result;
  RngStream sampler = options.sampler;
  NoGradGuard no_grad;
  const auto eval = [&] { return f(leaves).item(); };
  for (Tensor& t : leaves) {
    const std::vector<double> analytic_all = t.grad();
    const auto chosen = pick_elements(t.numel(), options.max_elements_per_input, sampler);
    std::vector<double> analytic, numeric;
    analytic.reserve(chosen.size());
    numeric.reserve(chosen.size());
    auto values = t.mutable_data();
    for (std::size_t i : chosen) {
      analytic.push_back(analytic_all[i]);
      numeric.push_back(central_difference(eval, values[i], options.step));
    }
    result.merge(compare_gradients(analytic, numeric, options.small));
  }
  return result;
}

Tensor corrupt_gradient(const Tensor& x, double factor) {
  return Tensor::make_result(x.shape(), {x.data().begin(), x.data().end()}, {x}, "corrupt_gradient",
                             [x, factor](std::span<const double> g) {
                               auto gx = x.grad_sink();
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * g[i];
                             });
}

}  // namespace hgt
