#pragma once

#include "lvg/corpus.hpp"
#include "lvg/eval.hpp"
#include "lvg/training.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lvg {

// Source side as sentence-image pairs; target side as plain token lists.
struct ParallelCorpus {
  std::vector<SentenceImagePair> pairs;
  std::vector<Sentence> targets;
};

// Target file: one sentence per line. Anything after a TAB (the gold
// file's ambiguous position) is ignored.
std::vector<Sentence> load_targets(const std::filesystem::path& path);
void save_targets(const std::filesystem::path& path, std::span<const Sentence> targets);

std::vector<Example> make_examples(const ParallelCorpus& corpus, const TokenizerConfig& tok,
                                   const StopWordList& stoplist, const Vocabulary& src_vocab,
                                   const Vocabulary& tgt_vocab);

struct TaskVocabularies {
  Vocabulary src;
  Vocabulary tgt;
};

// Source tokens seen fewer than `src_min_count` times map to <unk>.
TaskVocabularies build_vocabularies(const ParallelCorpus& corpus, const TokenizerConfig& tok,
                                    const StopWordList& stoplist, std::size_t src_min_count);

// Random token strings `w0..w{vocab-1}`, target = source. Image ids are
// placeholders that no dictionary will hold.
ParallelCorpus make_copy_task(std::size_t count, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                              std::uint64_t seed);

ParallelCorpus benchmark_corpus(std::span<const SentenceImagePair> pairs, std::span<const GoldSentence> gold);

struct Translation {
  std::vector<Sentence> hypotheses;
  std::vector<Sentence> references;
  double bleu = 0.0;
};

Translation translate_all(const Seq2SeqModel& model, const FusionParameters* fusion, const VisualContext* visual,
                          std::span<const Example> data, const Vocabulary& tgt_vocab, std::size_t extra_len = 5);

// One train+evaluate run on the disambiguation benchmark. The last
// `dev_fraction` of the training split serves as dev set.
struct DisambiguationRunConfig {
  ModelConfig model;   // vocab sizes are filled in
  TrainConfig train;
  bool fusion = true;
  double dev_fraction = 0.1;
  std::size_t src_min_count = 2;
  std::uint64_t init_seed = 1;
};

struct DisambiguationResult {
  double bleu = 0.0;
  double ambiguous_accuracy = 0.0;
  std::size_t steps = 0;
  std::vector<Sentence> hypotheses;
};

DisambiguationResult run_disambiguation(const DisambiguationBenchmark& bench, const DisambiguationRunConfig& cfg);

}  // namespace lvg
