#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hgtnet/ops.hpp"
#include "hgtnet/rng.hpp"
#include "hgtnet/tensor.hpp"

namespace hgt::model {

struct ModelConfig {
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t embed_dim = 128;
  std::size_t num_heads = 4;
  std::size_t num_encoder_layers = 4;
  double mlp_ratio = 4.0;
  std::vector<std::size_t> cnn_channels{16, 32, 64};
  double dropout_p = 0.1;
  double gat_leaky_slope = 0.2;
  std::size_t num_classes = 5;
  std::size_t num_rotations = 4;
  double rotation_loss_weight = 0.1;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid() * grid(); }
  std::size_t mlp_hidden() const;
  std::size_t cnn_out_size() const;
  // Throws ConfigError on any violated invariant.
  void validate() const;
};

// Named parameter tensors in registration order.
class Parameters {
 public:
  void add(std::string name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Attention probability tensors captured during a forward pass.
struct AttentionTrace {
  std::vector<Tensor> self;   // (B*heads) x N x N per encoder layer
  std::vector<Tensor> cross;  // B x N x M
  std::vector<Tensor> graph;  // B x N x N
};

struct ForwardContext {
  bool training = false;
  RngStream rng;  // dropout masks; each site uses its own child stream
  AttentionTrace* trace = nullptr;

  RngStream site(const std::string& name) const { return rng.child(name); }
};

struct TokenGrid {
  Tensor tokens;  // B x N x d
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

struct FeatureGraph {
  Tensor nodes;  // B x N x d
  std::size_t num_nodes = 0;
  std::vector<std::uint8_t> adjacency;  // N x N, row-major
};

// ---- weight bundles ----

struct Affine {
  Tensor weight;  // in x out
  Tensor bias;    // out, may be undefined
};

struct AttentionWeights {
  Affine q, k, v, o;
};

struct EncoderLayerWeights {
  Tensor ln1_gamma, ln1_beta;
  AttentionWeights attn;
  Tensor ln2_gamma, ln2_beta;
  Affine fc1, fc2;
};

struct ConvBlockWeights {
  Tensor weight;  // F x C x 3 x 3
  Tensor bias;
};

struct CrossAttentionWeights {
  Affine proj;  // C -> d for the CNN tokens
  Affine q, k, v, o;
  Affine fuse;  // 2d -> d
};

struct GraphAttentionWeights {
  Tensor weight;    // d x d, no bias
  Tensor attn_src;  // d x 1
  Tensor attn_dst;  // d x 1
};

struct HeadWeights {
  Tensor ln_gamma, ln_beta;
  Affine fc;
};

// ---- stages ----

// Non-overlapping patch convolution, flattened to tokens, plus a learned
// per-token positional embedding pos[N x d].
TokenGrid patch_embed(const Tensor& x, const Tensor& weight, const Tensor& bias, const Tensor& pos,
                      std::size_t patch_size);

Tensor multi_head_self_attention(const Tensor& tokens, std::size_t heads, const AttentionWeights& w,
                                 AttentionTrace* trace = nullptr);

// Pre-norm block: x + drop(MHSA(LN(x))), then y + drop(MLP(LN(y))) with gelu.
Tensor encoder_layer(const Tensor& tokens, std::size_t heads, const EncoderLayerWeights& w, double dropout_p,
                     const ForwardContext& ctx, const std::string& site);
Tensor transformer_encoder(const Tensor& tokens, std::size_t heads, const std::vector<EncoderLayerWeights>& layers,
                           double dropout_p, const ForwardContext& ctx);

// conv3x3 (pad 1) -> relu -> maxpool 2 -> dropout per block.
Tensor cnn_branch(const Tensor& x, const std::vector<ConvBlockWeights>& blocks, double dropout_p,
                  const ForwardContext& ctx);

// Encoder tokens query the flattened CNN map; the attended vectors are
// concatenated with the tokens and linearly fused back to width d.
Tensor cross_attention_fuse(const Tensor& cnn_feat, const Tensor& enc_tokens, const CrossAttentionWeights& w,
                            AttentionTrace* trace = nullptr);

// 8-neighbourhood on the token grid plus self-loops.
FeatureGraph build_graph(const TokenGrid& grid);

// Single-head additive attention over graph edges followed by gelu.
Tensor graph_attention(const FeatureGraph& graph, const GraphAttentionWeights& w, double leaky_slope,
                       AttentionTrace* trace = nullptr);

Tensor global_average_pool(const Tensor& nodes);

Tensor classify_head(const Tensor& pooled, const HeadWeights& w, double dropout_p, const ForwardContext& ctx);
Tensor rotation_head(const Tensor& pooled, const Affine& w);

// ---- full network ----

struct ModelOutput {
  Tensor class_logits;  // B x num_classes
  Tensor rot_logits;    // B x num_rotations
};

class HGTNet {
 public:
  // Weights uniform in +-1/sqrt(fan_in), biases and positional embedding
  // zero, norms identity. Each tensor draws from a stream keyed by its name.
  HGTNet(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  ModelOutput forward(const Tensor& x, const ForwardContext& ctx) const;

  std::vector<EncoderLayerWeights> encoder_weights() const;
  std::vector<ConvBlockWeights> cnn_weights() const;
  CrossAttentionWeights cross_weights() const;
  GraphAttentionWeights graph_weights() const;
  HeadWeights head_weights() const;
  Affine rotation_weights() const;

 private:
  Affine affine(const std::string& prefix) const;

  ModelConfig config_;
  Parameters params_;
};

}  // namespace hgt::model
