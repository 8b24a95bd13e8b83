#include "lvg/model.hpp"

#include "lvg/errors.hpp"
#include "lvg/corpus.hpp"

#include <algorithm>
#include <cmath>

namespace lvg {

namespace {

// Dropout site ids; distinct per location so masks never coincide.
constexpr std::uint64_t kEncoderSite = 1ULL << 32;
constexpr std::uint64_t kDecoderSite = 2ULL << 32;

std::uint64_t site(std::uint64_t base, std::size_t layer, std::uint64_t slot) {
  return base | (static_cast<std::uint64_t>(layer + 1) << 8) | slot;
}

DropoutContext dropout_ctx(const ModelConfig& cfg, const RunOptions& opts) {
  return DropoutContext{opts.train, cfg.dropout, opts.seed};
}

Tensor drop_grad(Tensor g, const Tensor& mask) {
  dropout_backward(g, mask);
  return g;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_src == 0 || vocab_tgt == 0 || max_len == 0)
    throw PreconditionError("model config: sizes must be positive");
  if (d_model % n_heads != 0) throw PreconditionError("model config: d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw PreconditionError("model config: dropout must lie in [0,1)");
}

Tensor sinusoidal_positions(std::size_t len, std::size_t d_model) {
  Tensor pe(len, d_model);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model;
  src_embed_ = Parameter("src_embed", Tensor(cfg_.vocab_src, d));
  tgt_embed_ = Parameter("tgt_embed", Tensor(cfg_.vocab_tgt, d));
  for (std::uint32_t l = 0; l < cfg_.n_layers_enc; ++l) {
    const std::string p = "enc" + std::to_string(l);
    enc_.push_back(EncoderLayer{MultiHeadAttention(p + ".self", d, cfg_.n_heads), LayerNorm(p + ".norm1", d),
                                FeedForward(p + ".ffn", d, cfg_.d_ff), LayerNorm(p + ".norm2", d)});
  }
  for (std::uint32_t l = 0; l < cfg_.n_layers_dec; ++l) {
    const std::string p = "dec" + std::to_string(l);
    dec_.push_back(DecoderLayer{MultiHeadAttention(p + ".self", d, cfg_.n_heads), LayerNorm(p + ".norm1", d),
                                MultiHeadAttention(p + ".cross", d, cfg_.n_heads), LayerNorm(p + ".norm2", d),
                                FeedForward(p + ".ffn", d, cfg_.d_ff), LayerNorm(p + ".norm3", d)});
  }
  out_proj_ = Linear("out", d, cfg_.vocab_tgt);

  // Weight matrices and embeddings: U(-1/sqrt(d), 1/sqrt(d)). Biases start
  // at zero, layer-norm gains at one.
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::uint64_t stream = 0;
  for (Parameter* p : parameters()) {
    ++stream;
    if (p->value.rank() == 2) init_uniform(p->value, scale, init_seed, stream);
  }
}

void Seq2SeqModel::set_dropout(double rate) {
  ModelConfig next = cfg_;
  next.dropout = rate;
  next.validate();
  cfg_ = next;
}

std::vector<Parameter*> Seq2SeqModel::parameters() {
  std::vector<Parameter*> out{&src_embed_, &tgt_embed_};
  auto add_attn = [&](MultiHeadAttention& a) {
    for (Linear* lin : {&a.wq, &a.wk, &a.wv, &a.wo}) {
      out.push_back(&lin->weight);
      out.push_back(&lin->bias);
    }
  };
  auto add_norm = [&](LayerNorm& n) {
    out.push_back(&n.gain);
    out.push_back(&n.bias);
  };
  auto add_ffn = [&](FeedForward& f) {
    for (Linear* lin : {&f.in, &f.out}) {
      out.push_back(&lin->weight);
      out.push_back(&lin->bias);
    }
  };
  for (auto& l : enc_) {
    add_attn(l.self_attn);
    add_norm(l.norm1);
    add_ffn(l.ffn);
    add_norm(l.norm2);
  }
  for (auto& l : dec_) {
    add_attn(l.self_attn);
    add_norm(l.norm1);
    add_attn(l.cross_attn);
    add_norm(l.norm2);
    add_ffn(l.ffn);
    add_norm(l.norm3);
  }
  out.push_back(&out_proj_.weight);
  out.push_back(&out_proj_.bias);
  return out;
}

std::vector<const Parameter*> Seq2SeqModel::parameters() const {
  auto mut = const_cast<Seq2SeqModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void Seq2SeqModel::zero_grad() {
  for (Parameter* p : parameters()) p->grad.zero();
}

Tensor Seq2SeqModel::embed(const Parameter& table, std::span<const std::uint32_t> ids,
                           std::uint32_t vocab) const {
  if (ids.size() > cfg_.max_len) {
    throw IndexError("sequence length " + std::to_string(ids.size()) + " exceeds max_len " +
                     std::to_string(cfg_.max_len));
  }
  const std::size_t d = cfg_.d_model;
  const double scale = std::sqrt(static_cast<double>(d));
  Tensor x(ids.size(), d);
  Tensor pe = cfg_.positional_encoding ? sinusoidal_positions(ids.size(), d) : Tensor{};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw IndexError("token id " + std::to_string(ids[i]) + " out of vocabulary (size " +
                       std::to_string(vocab) + ")");
    }
    auto row = table.value.row(ids[i]);
    for (std::size_t c = 0; c < d; ++c) x(i, c) = row[c] * scale + (pe.empty() ? 0.0 : pe(i, c));
  }
  return x;
}

Tensor Seq2SeqModel::encode(std::span<const std::uint32_t> ids, const RunOptions& opts,
                            EncoderCache* cache) const {
  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  const auto drop = dropout_ctx(cfg_, opts);

  c.ids.assign(ids.begin(), ids.end());
  Tensor x = embed(src_embed_, ids, cfg_.vocab_src);
  c.embed_drop = dropout_forward(x, drop, site(kEncoderSite, 0, 0));
  c.layers.assign(enc_.size(), EncoderLayer::Cache{});

  for (std::size_t l = 0; l < enc_.size(); ++l) {
    const auto& layer = enc_[l];
    auto& lc = c.layers[l];
    Tensor a = layer.self_attn.forward(x, x, /*causal=*/false, lc.attn);
    lc.attn_drop = dropout_forward(a, drop, site(kEncoderSite, l, 1));
    add_inplace(a, x);
    Tensor x1 = layer.norm1.forward(a, lc.norm1);
    Tensor f = layer.ffn.forward(x1, lc.ffn);
    lc.ffn_drop = dropout_forward(f, drop, site(kEncoderSite, l, 2));
    add_inplace(f, x1);
    x = layer.norm2.forward(f, lc.norm2);
  }
  return x;
}

void Seq2SeqModel::encode_backward(const EncoderCache& c, const Tensor& dh) {
  Tensor dx = dh;
  for (std::size_t l = enc_.size(); l-- > 0;) {
    auto& layer = enc_[l];
    const auto& lc = c.layers[l];
    Tensor dr2 = layer.norm2.backward(lc.norm2, dx);
    Tensor dx1 = layer.ffn.backward(lc.ffn, drop_grad(dr2, lc.ffn_drop));
    add_inplace(dx1, dr2);
    Tensor dr1 = layer.norm1.backward(lc.norm1, dx1);
    auto [dq, dkv] = layer.self_attn.backward(lc.attn, drop_grad(dr1, lc.attn_drop));
    add_inplace(dq, dkv);
    add_inplace(dq, dr1);
    dx = std::move(dq);
  }
  dropout_backward(dx, c.embed_drop);
  const double scale = std::sqrt(static_cast<double>(cfg_.d_model));
  for (std::size_t i = 0; i < c.ids.size(); ++i) {
    auto g = src_embed_.grad.row(c.ids[i]);
    auto d = dx.row(i);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += d[k] * scale;
  }
}

Tensor Seq2SeqModel::decode(std::span<const std::uint32_t> ids, const Tensor& memory,
                            const RunOptions& opts, DecoderCache* cache) const {
  if (memory.cols() != cfg_.d_model) {
    throw DimensionError("decoder memory width " + std::to_string(memory.cols()) + " != d_model " +
                         std::to_string(cfg_.d_model));
  }
  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  const auto drop = dropout_ctx(cfg_, opts);

  c.ids.assign(ids.begin(), ids.end());
  Tensor y = embed(tgt_embed_, ids, cfg_.vocab_tgt);
  c.embed_drop = dropout_forward(y, drop, site(kDecoderSite, 0, 0));
  c.layers.assign(dec_.size(), DecoderLayer::Cache{});

  for (std::size_t l = 0; l < dec_.size(); ++l) {
    const auto& layer = dec_[l];
    auto& lc = c.layers[l];
    Tensor a = layer.self_attn.forward(y, y, /*causal=*/true, lc.self);
    lc.self_drop = dropout_forward(a, drop, site(kDecoderSite, l, 1));
    add_inplace(a, y);
    Tensor y1 = layer.norm1.forward(a, lc.norm1);
    Tensor x = layer.cross_attn.forward(y1, memory, /*causal=*/false, lc.cross);
    lc.cross_drop = dropout_forward(x, drop, site(kDecoderSite, l, 2));
    add_inplace(x, y1);
    Tensor y2 = layer.norm2.forward(x, lc.norm2);
    Tensor f = layer.ffn.forward(y2, lc.ffn);
    lc.ffn_drop = dropout_forward(f, drop, site(kDecoderSite, l, 3));
    add_inplace(f, y2);
    y = layer.norm3.forward(f, lc.norm3);
  }
  c.final_hidden = y;
  return out_proj_.forward(y);
}

Tensor Seq2SeqModel::decode_backward(const DecoderCache& c, const Tensor& dlogits) {
  Tensor dy = out_proj_.backward(c.final_hidden, dlogits);
  Tensor dmemory;
  for (std::size_t l = dec_.size(); l-- > 0;) {
    auto& layer = dec_[l];
    const auto& lc = c.layers[l];
    Tensor dr3 = layer.norm3.backward(lc.norm3, dy);
    Tensor dy2 = layer.ffn.backward(lc.ffn, drop_grad(dr3, lc.ffn_drop));
    add_inplace(dy2, dr3);
    Tensor dr2 = layer.norm2.backward(lc.norm2, dy2);
    auto [dq, dmem] = layer.cross_attn.backward(lc.cross, drop_grad(dr2, lc.cross_drop));
    if (dmemory.empty()) {
      dmemory = std::move(dmem);
    } else {
      add_inplace(dmemory, dmem);
    }
    add_inplace(dq, dr2);
    Tensor dr1 = layer.norm1.backward(lc.norm1, dq);
    auto [dsq, dskv] = layer.self_attn.backward(lc.self, drop_grad(dr1, lc.self_drop));
    add_inplace(dsq, dskv);
    add_inplace(dsq, dr1);
    dy = std::move(dsq);
  }
  dropout_backward(dy, c.embed_drop);
  const double scale = std::sqrt(static_cast<double>(cfg_.d_model));
  for (std::size_t i = 0; i < c.ids.size(); ++i) {
    auto g = tgt_embed_.grad.row(c.ids[i]);
    auto d = dy.row(i);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += d[k] * scale;
  }
  return dmemory;
}

std::vector<std::uint32_t> greedy_decode(const Seq2SeqModel& model, const Tensor& memory,
                                         std::size_t max_out_len) {
  std::vector<std::uint32_t> prefix{Vocabulary::kBos};
  std::vector<std::uint32_t> out;
  const std::size_t limit = std::min<std::size_t>(max_out_len, model.config().max_len - 1);
  while (out.size() < limit) {
    Tensor logits = model.decode(prefix, memory, RunOptions{});
    auto last = logits.row(logits.rows() - 1);
    auto best = static_cast<std::uint32_t>(std::max_element(last.begin(), last.end()) - last.begin());
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

std::vector<std::uint32_t> greedy_translate(const Seq2SeqModel& model,
                                            std::span<const std::uint32_t> src_ids,
                                            std::size_t max_out_len) {
  if (max_out_len == 0) return {};
  return greedy_decode(model, model.encode(src_ids, RunOptions{}), max_out_len);
}

}  // namespace lvg
