#include "hgtnet/verify.hpp"

#include <cmath>

#include "hgtnet/training.hpp"

namespace hgt::verify {

model::ModelConfig gradcheck_config() {
  model::ModelConfig c;
  c.image_size = 32;
  c.patch_size = 16;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.num_encoder_layers = 1;
  c.cnn_channels = {4};
  return c;
}

namespace {

Tensor random_input(Shape shape, RngStream& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

ModelCheckResult run_model_gradcheck(const ModelCheckOptions& options) {
  ModelCheckResult out;
  out.tolerance = options.tolerance;
  const model::ModelConfig cfg = gradcheck_config();
  const RngStream root(options.seed, stream_key("model-gradcheck"));
  for (int i = 0; i < options.instances; ++i) {
    RngStream rng = root.child(static_cast<std::uint64_t>(i));
    model::HGTNet net(cfg, rng.next_u64());
    // Move biases, norms and positions off their initial constants.
    for (auto& [name, t] : net.params()) {
      for (double& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);
    }
    const std::size_t batch = 2;
    const Tensor x = random_input({batch, 3, cfg.image_size, cfg.image_size}, rng);
    std::vector<int> labels(batch), rot_labels(batch);
    for (int& y : labels) y = static_cast<int>(rng.below(cfg.num_classes));
    for (int& y : rot_labels) y = static_cast<int>(rng.below(cfg.num_rotations));
    const model::ForwardContext ctx{true, rng.child("dropout"), nullptr};

    std::vector<Tensor> inputs;
    for (const auto& [name, t] : net.params()) inputs.push_back(t);
    inputs.push_back(x);
    const bool fault = options.inject_fault;
    const auto objective = [&](std::span<const Tensor> in) {
      const model::ModelOutput o = net.forward(in.back(), ctx);
      const Tensor logits = fault ? corrupt_gradient(o.class_logits, 1.5) : o.class_logits;
      return train::combined_loss(logits, labels, o.rot_logits, rot_labels, 0.1);
    };
    GradCheckOptions gc;
    gc.max_elements_per_input = options.elements_per_tensor;
    gc.sampler = rng.child("coords");
    out.worst.merge(gradcheck(objective, inputs, gc));
    ++out.instances;
  }
  out.passed = out.instances > 0 && out.worst.passed(options.tolerance);
  return out;
}

NormalizationResult check_attention_normalization(std::uint64_t seed, int forwards) {
  model::ModelConfig cfg = gradcheck_config();
  cfg.image_size = 48;
  cfg.patch_size = 8;
  NormalizationResult r;
  const model::FeatureGraph graph = model::build_graph({Tensor(), cfg.grid(), cfg.grid()});
  const std::size_t n = graph.num_nodes;
  const RngStream root(seed, stream_key("normalization"));
  NoGradGuard no_grad;
  for (int f = 0; f < forwards; ++f) {
    RngStream rng = root.child(static_cast<std::uint64_t>(f));
    model::HGTNet net(cfg, rng.next_u64());
    for (auto& [name, t] : net.params()) {
      for (double& v : t.mutable_data()) v += rng.uniform(-0.5, 0.5);
    }
    model::AttentionTrace trace;
    const Tensor x = random_input({2, 3, cfg.image_size, cfg.image_size}, rng);
    net.forward(x, model::ForwardContext{f % 2 == 1, rng.child("dropout"), &trace});
    for (const auto* group : {&trace.self, &trace.cross, &trace.graph}) {
      for (const Tensor& t : *group) {
        const std::size_t width = t.shape().back();
        const auto d = t.data();
        for (std::size_t row = 0; row < t.numel() / width; ++row) {
          double s = 0.0;
          for (std::size_t j = 0; j < width; ++j) s += d[row * width + j];
          r.max_row_error = std::max(r.max_row_error, std::abs(s - 1.0));
          ++r.rows;
        }
      }
    }
    for (const Tensor& t : trace.graph) {
      const auto d = t.data();
      for (std::size_t b = 0; b < t.numel() / (n * n); ++b) {
        for (std::size_t e = 0; e < n * n; ++e) {
          if (graph.adjacency[e]) continue;
          r.max_nonadjacent_weight = std::max(r.max_nonadjacent_weight, std::abs(d[b * n * n + e]));
          ++r.nonadjacent_entries;
        }
      }
    }
    ++r.forwards;
  }
  return r;
}

}  // namespace hgt::verify
