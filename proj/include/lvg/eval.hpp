#pragma once

#include "lvg/corpus.hpp"
#include "lvg/dictionary.hpp"
#include "lvg/features.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lvg {

using Sentence = std::vector<std::string>;

// Corpus BLEU-4 in [0, 100]: geometric mean of clipped 1..4-gram
// precisions times the corpus brevity penalty. No smoothing, so any zero
// precision gives 0.
double bleu4(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

// Sentence BLEU-4 with add-one smoothing on the 2..4-gram precisions; used
// as the per-sentence metric for the sign test.
double sentence_bleu(const Sentence& hypothesis, const Sentence& reference);

// Fraction of token occurrences whose token has a dictionary entry.
double coverage(const WordImageDictionary& dict, std::span<const std::string> texts,
                const TokenizerConfig& cfg, const StopWordList& stoplist);

// Two-sided sign test over paired scores; ties are dropped.
double sign_test(std::span<const double> scores_a, std::span<const double> scores_b);

double ambiguous_token_accuracy(std::span<const Sentence> translations, std::span<const Sentence> gold,
                                std::span<const std::size_t> ambiguous_positions);

// Synthetic word-sense benchmark. Each source sentence holds one ambiguous
// word, some context words and a unique object word, paired with one image.
// The ambiguous word's translation depends on a latent sense that only the
// image encodes; the text is drawn independently of the sense.
struct DisambiguationSpec {
  std::uint32_t n_ambiguous_types = 10;
  std::uint32_t senses_per_type = 2;
  std::uint32_t n_context_tokens = 20;    // size of the context vocabulary
  std::uint32_t context_per_sentence = 2;
  std::uint32_t n_train = 5000;
  std::uint32_t n_test = 500;
  std::uint32_t d_img = 16;
  double center_distance = 10.0;  // distance between the two sense centers of a word
  double noise = 1.0;             // per-component std-dev of the pooled feature noise
  std::uint32_t regions = 4;      // grid rows pooled into each image vector
  std::uint64_t seed = 1;

  void validate() const;
};

struct GoldSentence {
  Sentence tokens;
  std::size_t ambiguous_position = 0;
  std::uint32_t ambiguous_type = 0;
  std::uint32_t sense = 0;
};

struct DisambiguationBenchmark {
  std::vector<SentenceImagePair> train;
  std::vector<SentenceImagePair> test;
  std::vector<GoldSentence> train_gold;
  std::vector<GoldSentence> test_gold;
  ImageFeatureStore features;
  // centers[type * senses + sense]
  std::vector<std::vector<double>> centers;
};

DisambiguationBenchmark gen_disambiguation_benchmark(const DisambiguationSpec& spec);

// Gold file: one target sentence per line, TAB, ambiguous position.
void save_gold(const std::filesystem::path& path, std::span<const GoldSentence> gold);
std::vector<GoldSentence> load_gold(const std::filesystem::path& path);

// Writes train.tsv, test.tsv, train.gold, test.gold and features.lvf.
void save_benchmark(const DisambiguationBenchmark& bench, const std::filesystem::path& dir);
DisambiguationBenchmark load_benchmark(const std::filesystem::path& dir);

}  // namespace lvg
