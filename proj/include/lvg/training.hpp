#pragma once

#include "lvg/corpus.hpp"
#include "lvg/dictionary.hpp"
#include "lvg/eval.hpp"
#include "lvg/features.hpp"
#include "lvg/fusion.hpp"
#include "lvg/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lvg {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t warmup_steps = 100;
  std::size_t max_steps = 1000;
  std::size_t batch_size = 32;
  double dropout = 0.15;
  std::size_t patience = 10;  // epochs without dev improvement before stopping
  std::uint64_t seed = 1;
  std::size_t m = 5;          // images retrieved per token
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr_scale = 1.0;      // multiplies the warm-up schedule
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  std::size_t max_decode_len = 0;  // 0: reference length + 5 at dev time

  void validate() const;
};

// d^-0.5 * min(step^-0.5, step * warmup^-1.5); step >= 1.
double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup_steps);

struct CrossEntropyResult {
  double loss = 0.0;        // mean over non-pad positions
  std::size_t count = 0;    // non-pad positions
  Tensor grad;              // d(loss)/d(logits)
};

CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const std::uint32_t> targets,
                                 std::uint32_t pad_id);

// One parallel sentence, already mapped to ids. `src_tokens` keeps the
// token strings so fusion can look images up in the dictionary.
struct Example {
  TokenSequence src_tokens;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> tgt;  // without <s> and </s>
};

// Dictionary and features used by the fusion path.
struct VisualContext {
  const WordImageDictionary* dict = nullptr;
  const ImageFeatureStore* store = nullptr;
  std::size_t m = 5;

  ImageTensor images_for(std::span<const std::string> tokens) const;
};

// Encoder output, fused with retrieved images when `fusion` is set.
Tensor source_memory(const Seq2SeqModel& model, const FusionParameters* fusion,
                     const VisualContext* visual, const Example& ex);

std::vector<std::uint32_t> translate(const Seq2SeqModel& model, const FusionParameters* fusion,
                                     const VisualContext* visual, const Example& ex,
                                     std::size_t max_out_len);

// Per-example loss and gradients of one forward/backward pass; gradient
// contributions are scaled by `weight`. Returns the summed token loss and
// the number of target tokens.
std::pair<double, std::size_t> accumulate_example(Seq2SeqModel& model, FusionParameters* fusion,
                                                  const ImageTensor* images, const Example& ex,
                                                  const RunOptions& opts, double weight);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0.0;
  double dev_bleu = 0.0;
  double lr = 0.0;
};

std::string metrics_to_jsonl(std::span<const MetricsRecord> log);

struct TrainResult {
  Seq2SeqModel model;                     // best-dev snapshot
  std::optional<FusionParameters> fusion;
  std::vector<MetricsRecord> log;
  std::vector<double> step_losses;        // mean token loss of every step
  std::size_t steps = 0;
  double best_dev_bleu = -1.0;
};

// Sequences grouped by similar length, in a seeded order per epoch.
std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> data, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch);

// Trains `model` (and `fusion` when given; `visual` is required then).
// Stops at max_steps or after `patience` epochs without dev BLEU gain and
// returns the snapshot with the best dev BLEU. Throws TrainingError on a
// non-finite loss.
TrainResult train(Seq2SeqModel model, std::optional<FusionParameters> fusion, const VisualContext* visual,
                  std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& cfg, const Vocabulary& tgt_vocab,
                  const std::function<void(const MetricsRecord&)>& on_epoch = {});

}  // namespace lvg
