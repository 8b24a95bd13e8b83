#pragma once

#include "lvg/layers.hpp"
#include "lvg/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lvg {

struct ModelConfig {
  std::uint32_t d_model = 32;
  std::uint32_t n_layers_enc = 2;
  std::uint32_t n_layers_dec = 2;
  std::uint32_t n_heads = 4;
  std::uint32_t d_ff = 64;
  std::uint32_t vocab_src = 0;
  std::uint32_t vocab_tgt = 0;
  double dropout = 0.0;
  std::uint32_t max_len = 64;
  // Test hook: disables the sinusoidal positional encoding.
  bool positional_encoding = true;

  // Throws PreconditionError on d_model % n_heads != 0, dropout outside
  // [0,1), or any zero size.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Per-call options for encode/decode.
struct RunOptions {
  bool train = false;
  std::uint64_t seed = 0;
};

struct EncoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;

  struct Cache {
    MultiHeadAttention::Cache attn;
    Tensor attn_drop;
    LayerNorm::Cache norm1;
    FeedForward::Cache ffn;
    Tensor ffn_drop;
    LayerNorm::Cache norm2;
  };
};

struct DecoderLayer {
  MultiHeadAttention self_attn;
  LayerNorm norm1;
  MultiHeadAttention cross_attn;
  LayerNorm norm2;
  FeedForward ffn;
  LayerNorm norm3;

  struct Cache {
    MultiHeadAttention::Cache self;
    Tensor self_drop;
    LayerNorm::Cache norm1;
    MultiHeadAttention::Cache cross;
    Tensor cross_drop;
    LayerNorm::Cache norm2;
    FeedForward::Cache ffn;
    Tensor ffn_drop;
    LayerNorm::Cache norm3;
  };
};

struct EncoderCache {
  std::vector<std::uint32_t> ids;
  Tensor embed_drop;
  std::vector<EncoderLayer::Cache> layers;
};

struct DecoderCache {
  std::vector<std::uint32_t> ids;
  Tensor embed_drop;
  std::vector<DecoderLayer::Cache> layers;
  Tensor final_hidden;
};

// Post-LN transformer encoder-decoder with sinusoidal positions.
class Seq2SeqModel {
public:
  Seq2SeqModel(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  void set_dropout(double rate);

  // Text representation H (n x d_model). Throws IndexError on an
  // out-of-vocabulary id or a sequence longer than max_len.
  Tensor encode(std::span<const std::uint32_t> ids, const RunOptions& opts,
                EncoderCache* cache = nullptr) const;
  // Accumulates parameter gradients for d(loss)/dH.
  void encode_backward(const EncoderCache& cache, const Tensor& dh);

  // Logits (t x vocab_tgt) for decoder inputs `ids` attending to `memory`.
  Tensor decode(std::span<const std::uint32_t> ids, const Tensor& memory, const RunOptions& opts,
                DecoderCache* cache = nullptr) const;
  // Accumulates parameter gradients; returns d(loss)/d(memory).
  Tensor decode_backward(const DecoderCache& cache, const Tensor& dlogits);

  // Parameters in checkpoint order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  // Layer access for tests; attention weights live in the caches.
  const std::vector<EncoderLayer>& encoder_layers() const noexcept { return enc_; }
  const std::vector<DecoderLayer>& decoder_layers() const noexcept { return dec_; }

private:
  Tensor embed(const Parameter& table, std::span<const std::uint32_t> ids, std::uint32_t vocab) const;

  ModelConfig cfg_;
  Parameter src_embed_;
  Parameter tgt_embed_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Linear out_proj_;
};

// sin/cos table, row = position.
Tensor sinusoidal_positions(std::size_t len, std::size_t d_model);

// Appends argmax tokens after <s> until </s> or max_out_len tokens; the
// returned ids exclude both markers.
std::vector<std::uint32_t> greedy_decode(const Seq2SeqModel& model, const Tensor& memory,
                                         std::size_t max_out_len);
std::vector<std::uint32_t> greedy_translate(const Seq2SeqModel& model,
                                            std::span<const std::uint32_t> src_ids,
                                            std::size_t max_out_len);

}  // namespace lvg
