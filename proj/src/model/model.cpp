#include "hgtnet/model.hpp"

#include <cmath>

#include "hgtnet/errors.hpp"

namespace hgt::model {

// ---- config ----

std::size_t ModelConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

std::size_t ModelConfig::cnn_out_size() const {
  std::size_t s = image_size;
  for (std::size_t i = 0; i < cnn_channels.size(); ++i) s /= 2;
  return s;
}

void ModelConfig::validate() const {
  if (patch_size == 0 || image_size == 0) throw ConfigError("image_size and patch_size must be positive");
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (num_encoder_layers == 0) throw ConfigError("num_encoder_layers must be at least 1");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw ConfigError("mlp_ratio must give a positive hidden width");
  if (cnn_channels.empty()) throw ConfigError("cnn_channels must not be empty");
  for (std::size_t c : cnn_channels)
    if (c == 0) throw ConfigError("cnn channel counts must be positive");
  if ((image_size >> cnn_channels.size()) == 0) {
    throw ConfigError("image_size too small for " + std::to_string(cnn_channels.size()) + " pooling blocks");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
  if (!(gat_leaky_slope >= 0.0)) throw ConfigError("gat_leaky_slope must be >= 0");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (num_rotations != 4) throw ConfigError("num_rotations is fixed at 4");
  if (!(rotation_loss_weight >= 0.0)) throw ConfigError("rotation_loss_weight must be >= 0");
}

// ---- parameters ----

void Parameters::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter " + name);
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

const Tensor& Parameters::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

Tensor& Parameters::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t Parameters::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void Parameters::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

// ---- stages ----

namespace {

Tensor apply(const Tensor& x, const Affine& a) { return linear(x, a.weight, a.bias); }

}  // namespace

TokenGrid patch_embed(const Tensor& x, const Tensor& weight, const Tensor& bias, const Tensor& pos,
                      std::size_t patch_size) {
  if (x.rank() != 4) throw DimensionError("patch_embed expects B x C x H x W, got " + shape_str(x.shape()));
  if (x.dim(2) % patch_size != 0 || x.dim(3) % patch_size != 0) {
    throw GeometryError("image " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                        " is not divisible into " + std::to_string(patch_size) + "-pixel patches");
  }
  const Tensor maps = conv2d(x, weight, bias, patch_size, 0);
  const std::size_t b = maps.dim(0), d = maps.dim(1), gh = maps.dim(2), gw = maps.dim(3);
  Tensor tokens = permute(reshape(maps, {b, d, gh * gw}), {0, 2, 1});
  return {add_broadcast(tokens, pos), gh, gw};
}

Tensor multi_head_self_attention(const Tensor& tokens, std::size_t heads, const AttentionWeights& w,
                                 AttentionTrace* trace) {
  const std::size_t b = tokens.dim(0), n = tokens.dim(1), d = tokens.dim(2);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const auto split = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {b, n, heads, dh}), {0, 2, 1, 3}), {b * heads, n, dh});
  };
  const Tensor q = split(apply(tokens, w.q));
  const Tensor k = split(apply(tokens, w.k));
  const Tensor v = split(apply(tokens, w.v));
  const Tensor probs = softmax(scale(bmm(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(dh))));
  if (trace) trace->self.push_back(probs);
  const Tensor merged = reshape(permute(reshape(bmm(probs, v), {b, heads, n, dh}), {0, 2, 1, 3}), {b, n, d});
  return apply(merged, w.o);
}

Tensor encoder_layer(const Tensor& tokens, std::size_t heads, const EncoderLayerWeights& w, double dropout_p,
                     const ForwardContext& ctx, const std::string& site) {
  const Tensor attn = multi_head_self_attention(layer_norm(tokens, w.ln1_gamma, w.ln1_beta), heads, w.attn, ctx.trace);
  const Tensor y = add(tokens, dropout(attn, dropout_p, ctx.training, ctx.site(site + ".attn")));
  const Tensor mlp = apply(gelu(apply(layer_norm(y, w.ln2_gamma, w.ln2_beta), w.fc1)), w.fc2);
  return add(y, dropout(mlp, dropout_p, ctx.training, ctx.site(site + ".mlp")));
}

Tensor transformer_encoder(const Tensor& tokens, std::size_t heads, const std::vector<EncoderLayerWeights>& layers,
                           double dropout_p, const ForwardContext& ctx) {
  Tensor x = tokens;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = encoder_layer(x, heads, layers[i], dropout_p, ctx, "encoder." + std::to_string(i));
  }
  return x;
}

Tensor cnn_branch(const Tensor& x, const std::vector<ConvBlockWeights>& blocks, double dropout_p,
                  const ForwardContext& ctx) {
  Tensor h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (h.dim(2) < 2 || h.dim(3) < 2) {
      throw GeometryError("feature map " + shape_str(h.shape()) + " too small for pooling block " + std::to_string(i));
    }
    h = max_pool2d(relu(conv2d(h, blocks[i].weight, blocks[i].bias, 1, 1)), 2, 2);
    h = dropout(h, dropout_p, ctx.training, ctx.site("cnn." + std::to_string(i)));
  }
  return h;
}

Tensor cross_attention_fuse(const Tensor& cnn_feat, const Tensor& enc_tokens, const CrossAttentionWeights& w,
                            AttentionTrace* trace) {
  const std::size_t b = cnn_feat.dim(0), c = cnn_feat.dim(1), m = cnn_feat.dim(2) * cnn_feat.dim(3);
  const std::size_t d = enc_tokens.dim(2);
  const Tensor cnn_tokens = apply(permute(reshape(cnn_feat, {b, c, m}), {0, 2, 1}), w.proj);
  const Tensor q = apply(enc_tokens, w.q);
  const Tensor k = apply(cnn_tokens, w.k);
  const Tensor v = apply(cnn_tokens, w.v);
  const Tensor probs = softmax(scale(bmm(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(d))));
  if (trace) trace->cross.push_back(probs);
  const Tensor attended = apply(bmm(probs, v), w.o);
  return apply(concat_last(enc_tokens, attended), w.fuse);
}

FeatureGraph build_graph(const TokenGrid& grid) {
  const std::size_t gh = grid.grid_h, gw = grid.grid_w, n = gh * gw;
  if (grid.tokens.defined() && grid.tokens.dim(1) != n) {
    throw DimensionError("token count " + std::to_string(grid.tokens.dim(1)) + " does not match grid " +
                         std::to_string(gh) + "x" + std::to_string(gw));
  }
  FeatureGraph g{grid.tokens, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    const long ri = static_cast<long>(i / gw), ci = static_cast<long>(i % gw);
    for (std::size_t j = 0; j < n; ++j) {
      const long rj = static_cast<long>(j / gw), cj = static_cast<long>(j % gw);
      g.adjacency[i * n + j] = std::abs(ri - rj) <= 1 && std::abs(ci - cj) <= 1;
    }
  }
  return g;
}

Tensor graph_attention(const FeatureGraph& graph, const GraphAttentionWeights& w, double leaky_slope,
                       AttentionTrace* trace) {
  const std::size_t n = graph.num_nodes;
  if (graph.adjacency.size() != n * n) throw ContractError("adjacency size does not match node count");
  for (std::size_t i = 0; i < n; ++i) {
    if (!graph.adjacency[i * n + i]) throw ContractError("adjacency is missing the self-loop of node " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      if (graph.adjacency[i * n + j] != graph.adjacency[j * n + i]) {
        throw ContractError("adjacency is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  const std::size_t b = graph.nodes.dim(0);
  const Tensor wh = linear(graph.nodes, w.weight);
  const Tensor src = reshape(linear(wh, w.attn_src), {b, n});
  const Tensor dst = reshape(linear(wh, w.attn_dst), {b, n});
  const Tensor probs = masked_softmax(leaky_relu(pairwise_add(src, dst), leaky_slope), graph.adjacency);
  if (trace) trace->graph.push_back(probs);
  return gelu(bmm(probs, wh));
}

Tensor global_average_pool(const Tensor& nodes) { return mean_axis(nodes, 1); }

Tensor classify_head(const Tensor& pooled, const HeadWeights& w, double dropout_p, const ForwardContext& ctx) {
  const Tensor h = dropout(layer_norm(pooled, w.ln_gamma, w.ln_beta), dropout_p, ctx.training, ctx.site("head"));
  return apply(h, w.fc);
}

Tensor rotation_head(const Tensor& pooled, const Affine& w) { return apply(pooled, w); }

// ---- network ----

namespace {

Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  RngStream rng(seed, stream_key(name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

HGTNet::HGTNet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.embed_dim, p = config_.patch_size, hidden = config_.mlp_hidden();
  const auto weight = [&](const std::string& name, Shape shape, std::size_t fan_in) {
    params_.add(name, init_uniform(std::move(shape), fan_in, seed, name));
  };
  const auto zeros = [&](const std::string& name, Shape shape) { params_.add(name, Tensor::zeros(std::move(shape))); };
  const auto ones = [&](const std::string& name, Shape shape) { params_.add(name, Tensor::full(std::move(shape), 1.0)); };
  const auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    weight(prefix + ".weight", {in, out}, in);
    zeros(prefix + ".bias", {out});
  };

  weight("patch.weight", {d, 3, p, p}, 3 * p * p);
  zeros("patch.bias", {d});
  zeros("patch.pos", {config_.num_tokens(), d});

  for (std::size_t i = 0; i < config_.num_encoder_layers; ++i) {
    const std::string pre = "encoder." + std::to_string(i);
    ones(pre + ".ln1.gamma", {d});
    zeros(pre + ".ln1.beta", {d});
    for (const char* proj : {"q", "k", "v", "o"}) dense(pre + ".attn." + proj, d, d);
    ones(pre + ".ln2.gamma", {d});
    zeros(pre + ".ln2.beta", {d});
    dense(pre + ".mlp.fc1", d, hidden);
    dense(pre + ".mlp.fc2", hidden, d);
  }

  std::size_t in_ch = 3;
  for (std::size_t i = 0; i < config_.cnn_channels.size(); ++i) {
    const std::size_t out_ch = config_.cnn_channels[i];
    weight("cnn." + std::to_string(i) + ".weight", {out_ch, in_ch, 3, 3}, in_ch * 9);
    zeros("cnn." + std::to_string(i) + ".bias", {out_ch});
    in_ch = out_ch;
  }

  dense("cross.proj", in_ch, d);
  for (const char* proj : {"q", "k", "v", "o"}) dense(std::string("cross.") + proj, d, d);
  dense("cross.fuse", 2 * d, d);

  weight("gat.weight", {d, d}, d);
  weight("gat.attn_src", {d, 1}, d);
  weight("gat.attn_dst", {d, 1}, d);

  ones("head.ln.gamma", {d});
  zeros("head.ln.beta", {d});
  dense("head.fc", d, config_.num_classes);
  dense("rot.fc", d, config_.num_rotations);
}

Affine HGTNet::affine(const std::string& prefix) const {
  return {params_.get(prefix + ".weight"), params_.get(prefix + ".bias")};
}

std::vector<EncoderLayerWeights> HGTNet::encoder_weights() const {
  std::vector<EncoderLayerWeights> layers;
  for (std::size_t i = 0; i < config_.num_encoder_layers; ++i) {
    const std::string pre = "encoder." + std::to_string(i);
    EncoderLayerWeights w;
    w.ln1_gamma = params_.get(pre + ".ln1.gamma");
    w.ln1_beta = params_.get(pre + ".ln1.beta");
    w.attn = {affine(pre + ".attn.q"), affine(pre + ".attn.k"), affine(pre + ".attn.v"), affine(pre + ".attn.o")};
    w.ln2_gamma = params_.get(pre + ".ln2.gamma");
    w.ln2_beta = params_.get(pre + ".ln2.beta");
    w.fc1 = affine(pre + ".mlp.fc1");
    w.fc2 = affine(pre + ".mlp.fc2");
    layers.push_back(std::move(w));
  }
  return layers;
}

std::vector<ConvBlockWeights> HGTNet::cnn_weights() const {
  std::vector<ConvBlockWeights> blocks;
  for (std::size_t i = 0; i < config_.cnn_channels.size(); ++i) {
    const std::string pre = "cnn." + std::to_string(i);
    blocks.push_back({params_.get(pre + ".weight"), params_.get(pre + ".bias")});
  }
  return blocks;
}

CrossAttentionWeights HGTNet::cross_weights() const {
  return {affine("cross.proj"), affine("cross.q"), affine("cross.k"),
          affine("cross.v"),    affine("cross.o"), affine("cross.fuse")};
}

GraphAttentionWeights HGTNet::graph_weights() const {
  return {params_.get("gat.weight"), params_.get("gat.attn_src"), params_.get("gat.attn_dst")};
}

HeadWeights HGTNet::head_weights() const {
  return {params_.get("head.ln.gamma"), params_.get("head.ln.beta"), affine("head.fc")};
}

Affine HGTNet::rotation_weights() const { return affine("rot.fc"); }

ModelOutput HGTNet::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != config_.image_size || x.dim(3) != config_.image_size) {
    throw GeometryError("model expects B x 3 x " + std::to_string(config_.image_size) + " x " +
                        std::to_string(config_.image_size) + " input, got " + shape_str(x.shape()));
  }
  const TokenGrid grid = patch_embed(x, params_.get("patch.weight"), params_.get("patch.bias"),
                                     params_.get("patch.pos"), config_.patch_size);
  const Tensor encoded = transformer_encoder(grid.tokens, config_.num_heads, encoder_weights(), config_.dropout_p, ctx);
  const Tensor cnn = cnn_branch(x, cnn_weights(), config_.dropout_p, ctx);
  const Tensor fused = cross_attention_fuse(cnn, encoded, cross_weights(), ctx.trace);
  const FeatureGraph graph = build_graph({fused, grid.grid_h, grid.grid_w});
  const Tensor nodes = graph_attention(graph, graph_weights(), config_.gat_leaky_slope, ctx.trace);
  const Tensor pooled = global_average_pool(nodes);
  return {classify_head(pooled, head_weights(), config_.dropout_p, ctx), rotation_head(pooled, rotation_weights())};
}

}  // namespace hgt::model
