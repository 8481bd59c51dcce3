#include "hgtnet/op_gradcheck.hpp"

#include <functional>

#include "hgtnet/ops.hpp"

namespace hgt {

namespace {

using OpFn = std::function<Tensor(std::span<const Tensor>)>;

struct Instance {
  std::vector<Tensor> inputs;
  OpFn op;
};

struct Case {
  std::string name;
  std::function<Instance(RngStream&)> make;
};

Tensor rand_t(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

std::size_t extent(RngStream& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  cases.push_back({"add", [](RngStream& r) {
                     Shape s{extent(r, 1, 4), extent(r, 1, 4)};
                     return Instance{{rand_t(s, r), rand_t(s, r)}, [](auto in) { return add(in[0], in[1]); }};
                   }});
  cases.push_back({"sub", [](RngStream& r) {
                     Shape s{extent(r, 1, 4), extent(r, 1, 4)};
                     return Instance{{rand_t(s, r), rand_t(s, r)}, [](auto in) { return sub(in[0], in[1]); }};
                   }});
  cases.push_back({"mul", [](RngStream& r) {
                     Shape s{extent(r, 1, 4), extent(r, 1, 4)};
                     return Instance{{rand_t(s, r), rand_t(s, r)}, [](auto in) { return mul(in[0], in[1]); }};
                   }});
  cases.push_back({"scale", [](RngStream& r) {
                     const double f = r.uniform(-2, 2);
                     return Instance{{rand_t({extent(r, 1, 5)}, r)}, [f](auto in) { return scale(in[0], f); }};
                   }});
  cases.push_back({"add_broadcast", [](RngStream& r) {
                     const std::size_t n = extent(r, 1, 4);
                     return Instance{{rand_t({extent(r, 1, 3), extent(r, 1, 3), n}, r), rand_t({n}, r)},
                                     [](auto in) { return add_broadcast(in[0], in[1]); }};
                   }});
  cases.push_back({"pairwise_add", [](RngStream& r) {
                     Shape s{extent(r, 1, 3), extent(r, 1, 4)};
                     return Instance{{rand_t(s, r), rand_t(s, r)},
                                     [](auto in) { return pairwise_add(in[0], in[1]); }};
                   }});
  cases.push_back({"reshape", [](RngStream& r) {
                     const std::size_t a = extent(r, 1, 4), b = extent(r, 1, 4);
                     return Instance{{rand_t({a, b}, r)}, [a, b](auto in) { return reshape(in[0], {b, a}); }};
                   }});
  cases.push_back({"permute", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 3), extent(r, 1, 3), extent(r, 1, 3), extent(r, 1, 3)}, r)},
                                     [](auto in) { return permute(in[0], {2, 0, 3, 1}); }};
                   }});
  cases.push_back({"transpose_last", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 3), extent(r, 1, 4), extent(r, 1, 4)}, r)},
                                     [](auto in) { return transpose_last(in[0]); }};
                   }});
  cases.push_back({"concat_last", [](RngStream& r) {
                     const std::size_t rows = extent(r, 1, 4);
                     return Instance{{rand_t({rows, extent(r, 1, 3)}, r), rand_t({rows, extent(r, 1, 3)}, r)},
                                     [](auto in) { return concat_last(in[0], in[1]); }};
                   }});
  cases.push_back({"concat_first", [](RngStream& r) {
                     const std::size_t cols = extent(r, 1, 4);
                     return Instance{{rand_t({extent(r, 1, 3), cols}, r), rand_t({extent(r, 1, 3), cols}, r)},
                                     [](auto in) { return concat_first(in[0], in[1]); }};
                   }});
  cases.push_back({"narrow_first", [](RngStream& r) {
                     const std::size_t rows = extent(r, 2, 5);
                     const std::size_t start = r.below(rows - 1);
                     return Instance{{rand_t({rows, 3}, r)},
                                     [start, rows](auto in) { return narrow_first(in[0], start, rows - start - 1); }};
                   }});
  cases.push_back({"sum", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 4), extent(r, 1, 4)}, r)},
                                     [](auto in) { return sum(in[0]); }};
                   }});
  cases.push_back({"mean_axis", [](RngStream& r) {
                     const std::size_t axis = r.below(3);
                     return Instance{{rand_t({extent(r, 1, 3), extent(r, 1, 4), extent(r, 1, 3)}, r)},
                                     [axis](auto in) { return mean_axis(in[0], axis); }};
                   }});
  cases.push_back({"matmul", [](RngStream& r) {
                     const std::size_t m = extent(r, 1, 4), k = extent(r, 1, 4), n = extent(r, 1, 4);
                     return Instance{{rand_t({m, k}, r), rand_t({k, n}, r)},
                                     [](auto in) { return matmul(in[0], in[1]); }};
                   }});
  cases.push_back({"bmm", [](RngStream& r) {
                     const std::size_t b = extent(r, 1, 3), m = extent(r, 1, 4), k = extent(r, 1, 4), n = extent(r, 1, 4);
                     return Instance{{rand_t({b, m, k}, r), rand_t({b, k, n}, r)},
                                     [](auto in) { return bmm(in[0], in[1]); }};
                   }});
  cases.push_back({"linear", [](RngStream& r) {
                     const std::size_t in_dim = extent(r, 1, 4), out_dim = extent(r, 1, 4);
                     return Instance{{rand_t({2, extent(r, 1, 3), in_dim}, r), rand_t({in_dim, out_dim}, r),
                                      rand_t({out_dim}, r)},
                                     [](auto in) { return linear(in[0], in[1], in[2]); }};
                   }});
  cases.push_back({"conv2d", [](RngStream& r) {
                     const std::size_t c = extent(r, 1, 2), f = extent(r, 1, 3);
                     const bool patch = r.bernoulli(0.5);
                     const std::size_t k = patch ? 2 : 3;
                     const std::size_t stride = patch ? 2 : 1, pad = patch ? 0 : 1;
                     const std::size_t h = patch ? 2 * extent(r, 1, 3) : extent(r, 3, 5);
                     const std::size_t w = patch ? 2 * extent(r, 1, 3) : extent(r, 3, 5);
                     return Instance{{rand_t({extent(r, 1, 2), c, h, w}, r), rand_t({f, c, k, k}, r), rand_t({f}, r)},
                                     [stride, pad](auto in) { return conv2d(in[0], in[1], in[2], stride, pad); }};
                   }});
  cases.push_back({"max_pool2d", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 2), extent(r, 1, 2), 2 * extent(r, 1, 3), 2 * extent(r, 1, 3)}, r)},
                                     [](auto in) { return max_pool2d(in[0], 2, 2); }};
                   }});
  cases.push_back({"softmax", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 3), extent(r, 1, 5)}, r, -3, 3)},
                                     [](auto in) { return softmax(in[0]); }};
                   }});
  cases.push_back({"masked_softmax", [](RngStream& r) {
                     const std::size_t n = extent(r, 1, 4);
                     auto mask = std::make_shared<std::vector<std::uint8_t>>(n * n);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < n; ++j) (*mask)[i * n + j] = i == j || r.bernoulli(0.5);
                     return Instance{{rand_t({extent(r, 1, 3), n, n}, r, -3, 3)},
                                     [mask](auto in) { return masked_softmax(in[0], *mask); }};
                   }});
  cases.push_back({"layer_norm", [](RngStream& r) {
                     const std::size_t d = extent(r, 2, 6);
                     return Instance{{rand_t({extent(r, 1, 3), d}, r, -2, 2), rand_t({d}, r), rand_t({d}, r)},
                                     [](auto in) { return layer_norm(in[0], in[1], in[2], 1e-5); }};
                   }});
  cases.push_back({"relu", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 4), extent(r, 1, 4)}, r)}, [](auto in) { return relu(in[0]); }};
                   }});
  cases.push_back({"gelu", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 4), extent(r, 1, 4)}, r, -3, 3)},
                                     [](auto in) { return gelu(in[0]); }};
                   }});
  cases.push_back({"leaky_relu", [](RngStream& r) {
                     return Instance{{rand_t({extent(r, 1, 4), extent(r, 1, 4)}, r)},
                                     [](auto in) { return leaky_relu(in[0], 0.2); }};
                   }});
  cases.push_back({"dropout", [](RngStream& r) {
                     const RngStream mask_rng = r.child("mask");
                     return Instance{{rand_t({extent(r, 1, 4), extent(r, 1, 4)}, r)},
                                     [mask_rng](auto in) { return dropout(in[0], 0.3, true, mask_rng); }};
                   }});
  return cases;
}

}  // namespace

std::vector<std::string> op_gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& c : build_cases()) names.push_back(c.name);
  return names;
}

std::vector<OpCheckResult> run_op_gradchecks(const OpSuiteOptions& options) {
  std::vector<OpCheckResult> results;
  RngStream root(options.seed, stream_key("op_gradcheck"));
  for (const Case& c : build_cases()) {
    OpCheckResult res;
    res.name = c.name;
    RngStream rng = root.child(c.name);
    const bool corrupt = c.name == options.fault_op;
    for (int i = 0; i < options.instances; ++i) {
      Instance inst = c.make(rng);
      Tensor probe = [&] {
        NoGradGuard no_grad;
        return inst.op(inst.inputs);
      }();
      const Tensor weights = rand_t(probe.shape(), rng);
      const MultiScalarFn objective = [&](std::span<const Tensor> in) {
        Tensor y = inst.op(in);
        if (corrupt) y = corrupt_gradient(y, 1.5);
        return sum(mul(y, weights));
      };
      res.worst.merge(gradcheck(objective, inst.inputs));
    }
    res.passed = res.worst.passed(res.tolerance);
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace hgt
