#include "lvg/corpus.hpp"
#include "lvg/errors.hpp"
#include "lvg/model.hpp"
#include "lvg/training.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace lvg;

namespace {

ModelConfig tiny(std::uint32_t d = 8, std::uint32_t layers = 1, std::uint32_t heads = 2) {
  ModelConfig cfg;
  cfg.d_model = d;
  cfg.n_layers_enc = layers;
  cfg.n_layers_dec = layers;
  cfg.n_heads = heads;
  cfg.d_ff = 2 * d;
  cfg.vocab_src = 9;
  cfg.vocab_tgt = 7;
  cfg.max_len = 16;
  return cfg;
}

Parameter* find_param(Seq2SeqModel& model, const std::string& name) {
  for (Parameter* p : model.parameters())
    if (p->name == name) return p;
  return nullptr;
}

double mean_loss(const Seq2SeqModel& model, const Example& ex) {
  std::vector<std::uint32_t> input{Vocabulary::kBos};
  input.insert(input.end(), ex.tgt.begin(), ex.tgt.end());
  std::vector<std::uint32_t> target = ex.tgt;
  target.push_back(Vocabulary::kEos);
  const Tensor memory = model.encode(ex.src, RunOptions{});
  return cross_entropy(model.decode(input, memory, RunOptions{}), target, Vocabulary::kPad).loss;
}

}  // namespace

TEST(ModelConfig, Validation) {
  auto cfg = tiny();
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_heads = 3;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg = tiny();
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
}

TEST(Encoder, ShapeContract) {
  const Seq2SeqModel model(tiny(), 1);
  for (std::size_t n : {1u, 3u, 7u}) {
    std::vector<std::uint32_t> ids(n, 4);
    const Tensor h = model.encode(ids, RunOptions{});
    EXPECT_EQ(h.shape(), (std::vector<std::size_t>{n, 8}));
  }
}

TEST(Encoder, RejectsOutOfRangeInput) {
  const Seq2SeqModel model(tiny(), 1);
  EXPECT_THROW(model.encode(std::vector<std::uint32_t>{4, 9}, RunOptions{}), IndexError);
  EXPECT_THROW(model.encode(std::vector<std::uint32_t>(17, 4), RunOptions{}), IndexError);
  const Tensor memory(2, 8);
  EXPECT_THROW(model.decode(std::vector<std::uint32_t>{7}, memory, RunOptions{}), IndexError);
  EXPECT_THROW(model.decode(std::vector<std::uint32_t>{2}, Tensor(2, 5), RunOptions{}), DimensionError);
}

TEST(Encoder, PermutationEquivariantWithoutPositions) {
  auto cfg = tiny();
  cfg.positional_encoding = false;
  const Seq2SeqModel model(cfg, 3);
  const std::vector<std::uint32_t> ids{4, 5, 6, 7, 8};
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<std::uint32_t> permuted;
  for (auto p : perm) permuted.push_back(ids[p]);
  const Tensor h = model.encode(ids, RunOptions{});
  const Tensor hp = model.encode(permuted, RunOptions{});
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(hp(i, c), h(perm[i], c), 1e-12);
}

TEST(Encoder, DeterministicAndDropoutKeyedBySeed) {
  auto cfg = tiny();
  cfg.dropout = 0.3;
  const Seq2SeqModel model(cfg, 5);
  const std::vector<std::uint32_t> ids{4, 5, 6};
  EXPECT_EQ(model.encode(ids, RunOptions{}), model.encode(ids, RunOptions{}));
  const RunOptions a{true, 11}, b{true, 12};
  EXPECT_EQ(model.encode(ids, a), model.encode(ids, a));
  EXPECT_NE(model.encode(ids, a), model.encode(ids, b));
  EXPECT_NE(model.encode(ids, a), model.encode(ids, RunOptions{}));
}

TEST(Init, UniformWithinScaleBiasesZeroGainsOne) {
  Seq2SeqModel model(tiny(16, 2, 4), 9);
  const double bound = 1.0 / std::sqrt(16.0);
  for (const Parameter* p : model.parameters()) {
    if (p->value.rank() == 2) {
      double lo = 0, hi = 0;
      for (double v : p->value.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      EXPECT_LE(hi, bound) << p->name;
      EXPECT_GE(lo, -bound) << p->name;
      EXPECT_GT(hi - lo, bound) << p->name << " looks constant";
    } else {
      const bool gain = p->name.ends_with(".gain");
      for (double v : p->value.values()) EXPECT_EQ(v, gain ? 1.0 : 0.0) << p->name;
    }
  }
  // Same seed, same weights.
  Seq2SeqModel again(tiny(16, 2, 4), 9);
  const auto a = model.parameters();
  const auto b = again.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
}

TEST(Decoder, ShapeContract) {
  const Seq2SeqModel model(tiny(), 1);
  const Tensor memory = model.encode(std::vector<std::uint32_t>{4, 5}, RunOptions{});
  const Tensor logits = model.decode(std::vector<std::uint32_t>{2, 4, 5}, memory, RunOptions{});
  EXPECT_EQ(logits.shape(), (std::vector<std::size_t>{3, 7}));
}

TEST(Decoder, Causal) {
  const Seq2SeqModel model(tiny(8, 2, 2), 2);
  const Tensor memory = model.encode(std::vector<std::uint32_t>{4, 5, 6}, RunOptions{});
  const std::vector<std::uint32_t> tgt{2, 4, 5, 6, 4};
  const Tensor base = model.decode(tgt, memory, RunOptions{});
  for (std::size_t j = 0; j + 1 < tgt.size(); ++j) {
    auto changed = tgt;
    changed[j + 1] = changed[j + 1] == 6 ? 5 : 6;
    const Tensor out = model.decode(changed, memory, RunOptions{});
    for (std::size_t r = 0; r <= j; ++r)
      for (std::size_t c = 0; c < base.cols(); ++c) EXPECT_EQ(out(r, c), base(r, c)) << "row " << r;
    bool moved = false;
    for (std::size_t c = 0; c < base.cols(); ++c) moved |= out(j + 1, c) != base(j + 1, c);
    EXPECT_TRUE(moved);
  }
}

TEST(Attention, EveryDistributionSumsToOne) {
  const Seq2SeqModel model(tiny(8, 2, 2), 4);
  EncoderCache enc;
  DecoderCache dec;
  const Tensor memory = model.encode(std::vector<std::uint32_t>{4, 5, 6, 7}, RunOptions{}, &enc);
  model.decode(std::vector<std::uint32_t>{2, 4, 5}, memory, RunOptions{}, &dec);
  auto check = [](const MultiHeadAttention::Cache& c) {
    ASSERT_FALSE(c.probs.empty());
    for (const Tensor& p : c.probs)
      for (std::size_t r = 0; r < p.rows(); ++r) {
        auto row = p.row(r);
        EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-5);
      }
  };
  for (const auto& l : enc.layers) check(l.attn);
  for (const auto& l : dec.layers) {
    check(l.self);
    check(l.cross);
  }
}

TEST(GradientCheck, EveryParameterThroughFullPath) {
  for (std::uint32_t d : {8u, 16u}) {
    Seq2SeqModel model(tiny(d, 1, 2), 17 + d);
    const Example ex{{}, {4, 5, 6, 8}, {4, 5, 6}};
    model.zero_grad();
    const auto ce_count = ex.tgt.size() + 1;
    accumulate_example(model, nullptr, nullptr, ex, RunOptions{}, 1.0 / static_cast<double>(ce_count));
    for (Parameter* p : model.parameters()) {
      const Tensor analytic = p->grad;
      const Tensor numeric = oracle::numeric_gradient(p->value, [&] { return mean_loss(model, ex); });
      EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-3) << p->name << " at d_model " << d;
    }
  }
}

TEST(GradientCheck, CrossAttentionMemory) {
  Seq2SeqModel model(tiny(8, 2, 2), 23);
  Tensor memory = model.encode(std::vector<std::uint32_t>{4, 5, 6}, RunOptions{});
  const std::vector<std::uint32_t> input{2, 4, 5};
  const std::vector<std::uint32_t> target{4, 5, 3};
  DecoderCache cache;
  const Tensor logits = model.decode(input, memory, RunOptions{}, &cache);
  const auto ce = cross_entropy(logits, target, Vocabulary::kPad);
  model.zero_grad();
  const Tensor analytic = model.decode_backward(cache, ce.grad);
  const Tensor numeric = oracle::numeric_gradient(memory, [&] {
    return cross_entropy(model.decode(input, memory, RunOptions{}), target, Vocabulary::kPad).loss;
  });
  EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-3);
}

TEST(GradientCheck, EncoderOutput) {
  Seq2SeqModel model(tiny(8, 2, 2), 29);
  const std::vector<std::uint32_t> ids{4, 5, 6, 7};
  EncoderCache cache;
  const Tensor h = model.encode(ids, RunOptions{}, &cache);
  Tensor weights(h.shape());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::sin(0.7 * static_cast<double>(i) + 0.3);
  model.zero_grad();
  model.encode_backward(cache, weights);
  Parameter* embed = find_param(model, "src_embed");
  ASSERT_NE(embed, nullptr);
  const Tensor analytic = embed->grad;
  const Tensor numeric = oracle::numeric_gradient(embed->value, [&] {
    const Tensor out = model.encode(ids, RunOptions{});
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
    return s;
  });
  EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-3);
}

TEST(Greedy, EosFirstGivesEmptyTranslation) {
  Seq2SeqModel model(tiny(), 1);
  Parameter* w = find_param(model, "out.weight");
  Parameter* b = find_param(model, "out.bias");
  ASSERT_TRUE(w && b);
  w->value.zero();
  b->value[Vocabulary::kEos] = 10.0;
  EXPECT_TRUE(greedy_translate(model, std::vector<std::uint32_t>{4, 5}, 10).empty());
}

TEST(Greedy, ZeroLengthAndBoundedOutput) {
  Seq2SeqModel model(tiny(), 1);
  EXPECT_TRUE(greedy_translate(model, std::vector<std::uint32_t>{4, 5}, 0).empty());
  Parameter* w = find_param(model, "out.weight");
  Parameter* b = find_param(model, "out.bias");
  w->value.zero();
  b->value[5] = 10.0;  // never emits </s>
  const auto out = greedy_translate(model, std::vector<std::uint32_t>{4}, 6);
  EXPECT_EQ(out, std::vector<std::uint32_t>(6, 5));
  EXPECT_EQ(greedy_translate(model, std::vector<std::uint32_t>{4}, 1000).size(), 15u);
}

TEST(Positions, SinusoidalValues) {
  const Tensor pe = sinusoidal_positions(3, 4);
  EXPECT_EQ(pe(0, 0), 0.0);
  EXPECT_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(2, 0), std::sin(2.0), 1e-15);
  EXPECT_NEAR(pe(2, 3), std::cos(2.0 / 100.0), 1e-15);
}
