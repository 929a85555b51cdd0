#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/runtime/config.hpp"
#include "mecheval/runtime/tensor_archive.hpp"

namespace mecheval {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Weight layout is input-major: a projection W of shape [in, out] maps
// x (length in) to x * W (length out).
struct BlockWeights {
  std::vector<float> ln1_weight, ln1_bias;
  std::vector<float> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  std::vector<float> ln2_weight, ln2_bias;
  std::vector<float> w_in, b_in, w_out, b_out;
};

struct ModelWeights {
  std::vector<float> wte;  // [vocab, d_model]
  std::vector<float> wpe;  // [max_seq_len, d_model]
  std::vector<BlockWeights> blocks;
  std::vector<float> ln_f_weight, ln_f_bias;
  std::vector<float> unembed_weight;  // [d_model, vocab]
  std::vector<float> unembed_bias;    // [vocab]
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

inline std::string block_tensor(std::size_t layer, const std::string& leaf) {
  return "blocks." + std::to_string(layer) + "." + leaf;
}

// Every tensor a model with this config must carry, with its expected shape.
inline std::vector<TensorSpec> required_tensors(const ModelConfig& c) {
  const std::size_t d = c.d_model, m = c.mlp_width();
  std::vector<TensorSpec> specs{{"wte", {c.vocab_size, d}}, {"wpe", {c.max_seq_len, d}}};
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::vector<TensorSpec> block{
        {block_tensor(l, "ln1.weight"), {d}}, {block_tensor(l, "ln1.bias"), {d}},
        {block_tensor(l, "attn.w_q"), {d, d}}, {block_tensor(l, "attn.b_q"), {d}},
        {block_tensor(l, "attn.w_k"), {d, d}}, {block_tensor(l, "attn.b_k"), {d}},
        {block_tensor(l, "attn.w_v"), {d, d}}, {block_tensor(l, "attn.b_v"), {d}},
        {block_tensor(l, "attn.w_o"), {d, d}}, {block_tensor(l, "attn.b_o"), {d}},
        {block_tensor(l, "ln2.weight"), {d}}, {block_tensor(l, "ln2.bias"), {d}},
        {block_tensor(l, "mlp.w_in"), {d, m}}, {block_tensor(l, "mlp.b_in"), {m}},
        {block_tensor(l, "mlp.w_out"), {m, d}}, {block_tensor(l, "mlp.b_out"), {d}},
    };
    specs.insert(specs.end(), block.begin(), block.end());
  }
  specs.push_back({"ln_f.weight", {d}});
  specs.push_back({"ln_f.bias", {d}});
  specs.push_back({"unembed.weight", {d, c.vocab_size}});
  specs.push_back({"unembed.bias", {c.vocab_size}});
  return specs;
}

// Archive with every required tensor zero-filled; builders start from this.
inline TensorArchive zero_archive(const ModelConfig& config) {
  TensorArchive archive;
  for (const auto& spec : required_tensors(config)) {
    Tensor t{spec.shape, {}};
    t.data.assign(t.numel(), 0.0f);
    archive.put(spec.name, std::move(t));
  }
  return archive;
}

// Immutable after construction; copies share the same weights.
class Model {
 public:
  static Model load(const TensorArchive& archive, const ModelConfig& config) {
    config.validate();
    for (const auto& spec : required_tensors(config)) {
      require(archive.contains(spec.name), ErrorKind::kModelLoad,
              "missing tensor '" + spec.name + "'");
      const Tensor& t = archive.at(spec.name);
      require(t.shape == spec.shape, ErrorKind::kModelLoad,
              "shape mismatch for tensor '" + spec.name + "'");
      for (float v : t.data)
        require(std::isfinite(v), ErrorKind::kModelLoad,
                "non-finite weights in tensor '" + spec.name + "'");
    }

    auto w = std::make_shared<ModelWeights>();
    auto take = [&](const std::string& name) { return archive.at(name).data; };
    w->wte = take("wte");
    w->wpe = take("wpe");
    w->blocks.resize(config.n_layers);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
      auto& b = w->blocks[l];
      b.ln1_weight = take(block_tensor(l, "ln1.weight"));
      b.ln1_bias = take(block_tensor(l, "ln1.bias"));
      b.w_q = take(block_tensor(l, "attn.w_q"));
      b.b_q = take(block_tensor(l, "attn.b_q"));
      b.w_k = take(block_tensor(l, "attn.w_k"));
      b.b_k = take(block_tensor(l, "attn.b_k"));
      b.w_v = take(block_tensor(l, "attn.w_v"));
      b.b_v = take(block_tensor(l, "attn.b_v"));
      b.w_o = take(block_tensor(l, "attn.w_o"));
      b.b_o = take(block_tensor(l, "attn.b_o"));
      b.ln2_weight = take(block_tensor(l, "ln2.weight"));
      b.ln2_bias = take(block_tensor(l, "ln2.bias"));
      b.w_in = take(block_tensor(l, "mlp.w_in"));
      b.b_in = take(block_tensor(l, "mlp.b_in"));
      b.w_out = take(block_tensor(l, "mlp.w_out"));
      b.b_out = take(block_tensor(l, "mlp.b_out"));
    }
    w->ln_f_weight = take("ln_f.weight");
    w->ln_f_bias = take("ln_f.bias");
    w->unembed_weight = take("unembed.weight");
    w->unembed_bias = take("unembed.bias");
    return Model(config, std::move(w));
  }

  const ModelConfig& config() const { return config_; }
  const ModelWeights& weights() const { return *weights_; }

 private:
  Model(ModelConfig config, std::shared_ptr<const ModelWeights> weights)
      : config_(std::move(config)), weights_(std::move(weights)) {}

  ModelConfig config_;
  std::shared_ptr<const ModelWeights> weights_;
};

}  // namespace mecheval
