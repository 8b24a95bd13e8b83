#include "lvg/training.hpp"

#include "lvg/errors.hpp"
#include "lvg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace lvg {

void TrainConfig::validate() const {
  if (warmup_steps < 1) throw PreconditionError("train config: warmup_steps must be >= 1");
  if (batch_size < 1 || patience < 1 || m < 1)
    throw PreconditionError("train config: batch_size, patience and m must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw PreconditionError("train config: dropout must lie in [0,1)");
  if (!(lr_scale > 0.0)) throw PreconditionError("train config: lr_scale must be positive");
}

double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup_steps) {
  if (step < 1) throw PreconditionError("lr_at: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(static_cast<double>(d_model), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const std::uint32_t> targets,
                                 std::uint32_t pad_id) {
  if (logits.rows() != targets.size())
    throw DimensionError("cross_entropy: " + std::to_string(logits.rows()) + " logit rows vs " +
                         std::to_string(targets.size()) + " targets");
  const std::size_t vocab = logits.cols();
  CrossEntropyResult out;
  out.grad = Tensor(logits.rows(), vocab);
  for (auto t : targets) {
    if (t == pad_id) continue;
    if (t >= vocab) throw IndexError("cross_entropy: target id " + std::to_string(t) + " out of range");
    ++out.count;
  }
  if (out.count == 0) throw PreconditionError("cross_entropy: every target position is padding");

  const double inv = 1.0 / static_cast<double>(out.count);
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == pad_id) continue;
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[targets[r]];
    auto g = out.grad.row(r);
    for (std::size_t c = 0; c < vocab; ++c) g[c] = std::exp(row[c] - log_z) * inv;
    g[targets[r]] -= inv;
  }
  out.loss = total * inv;
  return out;
}

ImageTensor VisualContext::images_for(std::span<const std::string> tokens) const {
  if (dict == nullptr || store == nullptr) throw PreconditionError("visual context is incomplete");
  return assemble_image_tensor(*dict, *store, tokens, m);
}

Tensor source_memory(const Seq2SeqModel& model, const FusionParameters* fusion,
                     const VisualContext* visual, const Example& ex) {
  Tensor h = model.encode(ex.src, RunOptions{});
  if (fusion == nullptr) return h;
  if (visual == nullptr) throw PreconditionError("fusion requires a dictionary and feature store");
  return fusion_forward(h, visual->images_for(ex.src_tokens), *fusion);
}

std::vector<std::uint32_t> translate(const Seq2SeqModel& model, const FusionParameters* fusion,
                                     const VisualContext* visual, const Example& ex,
                                     std::size_t max_out_len) {
  if (max_out_len == 0) return {};
  return greedy_decode(model, source_memory(model, fusion, visual, ex), max_out_len);
}

std::pair<double, std::size_t> accumulate_example(Seq2SeqModel& model, FusionParameters* fusion,
                                                  const ImageTensor* images, const Example& ex,
                                                  const RunOptions& opts, double weight) {
  EncoderCache enc_cache;
  Tensor h = model.encode(ex.src, opts, &enc_cache);

  FusionCache fusion_cache;
  Tensor memory = fusion ? fusion_forward(h, *images, *fusion, &fusion_cache) : h;

  std::vector<std::uint32_t> input{Vocabulary::kBos};
  input.insert(input.end(), ex.tgt.begin(), ex.tgt.end());
  std::vector<std::uint32_t> target(ex.tgt.begin(), ex.tgt.end());
  target.push_back(Vocabulary::kEos);

  DecoderCache dec_cache;
  Tensor logits = model.decode(input, memory, opts, &dec_cache);
  auto ce = cross_entropy(logits, target, Vocabulary::kPad);
  const double scale = weight * static_cast<double>(ce.count);
  for (double& g : ce.grad.values()) g *= scale;

  Tensor dmemory = model.decode_backward(dec_cache, ce.grad);
  if (fusion) {
    auto grads = fusion_backward(fusion_cache, dmemory, *fusion);
    model.encode_backward(enc_cache, grads.dh);
  } else {
    model.encode_backward(enc_cache, dmemory);
  }
  return {ce.loss * static_cast<double>(ce.count), ce.count};
}

std::string metrics_to_jsonl(std::span<const MetricsRecord> log) {
  std::string out;
  for (const auto& r : log) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["train_loss"] = r.train_loss;
    j["dev_bleu"] = r.dev_bleu;
    j["lr"] = r.lr;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> data, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  keyed_shuffle(order, seed, 2 * epoch);

  // Sort within pools of several batches so each batch holds similar
  // lengths while the pool contents stay random.
  const std::size_t pool = batch_size * 16;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const std::size_t end = std::min(order.size(), start + pool);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
      if (data[a].src.size() != data[b].src.size()) return data[a].src.size() < data[b].src.size();
      return data[a].tgt.size() < data[b].tgt.size();
    });
    for (std::size_t b = start; b < end; b += batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(end, b + batch_size)));
    }
  }
  keyed_shuffle(batches, seed, 2 * epoch + 1);
  return batches;
}

namespace {

struct AdamState {
  std::vector<Tensor> m, v;
};

double dev_bleu(const Seq2SeqModel& model, const FusionParameters* fusion, const VisualContext* visual,
                std::span<const Example> dev, const TrainConfig& cfg, const Vocabulary& tgt_vocab) {
  std::vector<Sentence> hyps, refs;
  for (const auto& ex : dev) {
    const std::size_t limit = cfg.max_decode_len ? cfg.max_decode_len : ex.tgt.size() + 5;
    hyps.push_back(tgt_vocab.decode(translate(model, fusion, visual, ex, limit)));
    refs.push_back(tgt_vocab.decode(ex.tgt));
  }
  return bleu4(hyps, refs);
}

}  // namespace

TrainResult train(Seq2SeqModel model, std::optional<FusionParameters> fusion, const VisualContext* visual,
                  std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& cfg, const Vocabulary& tgt_vocab,
                  const std::function<void(const MetricsRecord&)>& on_epoch) {
  cfg.validate();
  if (fusion && visual == nullptr) throw PreconditionError("fusion training requires a visual context");
  model.set_dropout(cfg.dropout);

  VisualContext ctx;
  if (visual) {
    ctx = *visual;
    ctx.m = cfg.m;
  }
  std::vector<ImageTensor> images;
  if (fusion) {
    images.reserve(train_set.size());
    for (const auto& ex : train_set) images.push_back(ctx.images_for(ex.src_tokens));
  }

  TrainResult result{model, fusion, {}, {}, 0, -1.0};
  if (cfg.max_steps == 0 || train_set.empty()) return result;

  std::vector<Parameter*> params = model.parameters();
  if (fusion) {
    for (Parameter* p : fusion->parameters()) params.push_back(p);
  }
  AdamState adam;
  if (cfg.optimizer == OptimizerKind::adam) {
    for (Parameter* p : params) {
      adam.m.emplace_back(p->value.shape());
      adam.v.emplace_back(p->value.shape());
    }
  }

  const std::size_t d_model = model.config().d_model;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t stale = 0;
  while (step < cfg.max_steps) {
    ++epoch;
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    double lr = 0.0;
    for (const auto& batch : make_batches(train_set, cfg.batch_size, cfg.seed, epoch)) {
      ++step;
      for (Parameter* p : params) p->grad.zero();

      std::size_t tokens = 0;
      for (auto idx : batch) tokens += train_set[idx].tgt.size() + 1;
      const double weight = 1.0 / static_cast<double>(tokens);
      double loss_sum = 0.0;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto idx = batch[k];
        RunOptions opts{true, hash_key({cfg.seed, step, k})};
        loss_sum += accumulate_example(model, fusion ? &*fusion : nullptr, fusion ? &images[idx] : nullptr,
                                       train_set[idx], opts, weight)
                        .first;
      }
      const double loss = loss_sum * weight;
      if (!std::isfinite(loss)) throw TrainingError("non-finite loss", step);

      lr = cfg.lr_scale * lr_at(step, d_model, cfg.warmup_steps);
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (Parameter* p : params)
          for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
      } else {
        const double b1 = cfg.adam_beta1;
        const double b2 = cfg.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        for (std::size_t k = 0; k < params.size(); ++k) {
          Parameter* p = params[k];
          Tensor& m = adam.m[k];
          Tensor& v = adam.v[k];
          for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            p->value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
          }
        }
      }

      result.step_losses.push_back(loss);
      epoch_loss += loss;
      ++epoch_steps;
      if (step >= cfg.max_steps) break;
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.train_loss = epoch_loss / static_cast<double>(epoch_steps);
    rec.lr = lr;
    rec.dev_bleu = dev_set.empty()
                       ? 0.0
                       : dev_bleu(model, fusion ? &*fusion : nullptr, fusion ? &ctx : nullptr, dev_set, cfg,
                                  tgt_vocab);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (dev_set.empty() || rec.dev_bleu > result.best_dev_bleu) {
      result.best_dev_bleu = rec.dev_bleu;
      result.model = model;
      result.fusion = fusion;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  result.steps = step;
  return result;
}

}  // namespace lvg
