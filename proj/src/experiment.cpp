#include "lvg/experiment.hpp"

#include "lvg/dictionary.hpp"
#include "lvg/errors.hpp"
#include "lvg/rng.hpp"

#include <algorithm>

namespace lvg {

std::vector<Sentence> load_targets(const std::filesystem::path& path) {
  std::vector<Sentence> out;
  for (const auto& line : read_lines(path)) {
    const auto tab = line.find('\t');
    out.push_back(split_whitespace(std::string_view(line).substr(0, tab)));
  }
  return out;
}

void save_targets(const std::filesystem::path& path, std::span<const Sentence> targets) {
  std::string out;
  for (const auto& s : targets) {
    std::string line;
    for (const auto& t : s) line += (line.empty() ? "" : " ") + t;
    out += line + '\n';
  }
  write_file(path, out);
}

std::vector<Example> make_examples(const ParallelCorpus& corpus, const TokenizerConfig& tok,
                                   const StopWordList& stoplist, const Vocabulary& src_vocab,
                                   const Vocabulary& tgt_vocab) {
  if (corpus.pairs.size() != corpus.targets.size())
    throw PreconditionError("parallel corpus: " + std::to_string(corpus.pairs.size()) + " sources vs " +
                            std::to_string(corpus.targets.size()) + " targets");
  std::vector<Example> out;
  out.reserve(corpus.pairs.size());
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    Example ex;
    ex.src_tokens = tokenize(corpus.pairs[i].text, tok, stoplist);
    ex.src = src_vocab.encode(ex.src_tokens);
    ex.tgt = tgt_vocab.encode(corpus.targets[i]);
    out.push_back(std::move(ex));
  }
  return out;
}

TaskVocabularies build_vocabularies(const ParallelCorpus& corpus, const TokenizerConfig& tok,
                                    const StopWordList& stoplist, std::size_t src_min_count) {
  std::vector<TokenSequence> src;
  src.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) src.push_back(tokenize(p.text, tok, stoplist));
  return {Vocabulary::build(src, src_min_count), Vocabulary::build(corpus.targets, 1)};
}

ParallelCorpus make_copy_task(std::size_t count, std::size_t vocab, std::size_t min_len, std::size_t max_len,
                              std::uint64_t seed) {
  if (vocab < 1 || min_len < 1 || max_len < min_len)
    throw PreconditionError("copy task: need vocab >= 1 and 1 <= min_len <= max_len");
  CounterRng rng(seed, 7);
  ParallelCorpus out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    Sentence s;
    std::string text;
    for (std::size_t k = 0; k < len; ++k) {
      s.push_back("w" + std::to_string(rng.below(vocab)));
      text += (text.empty() ? "" : " ") + s.back();
    }
    out.pairs.push_back({std::move(text), "copy" + std::to_string(i)});
    out.targets.push_back(std::move(s));
  }
  return out;
}

ParallelCorpus benchmark_corpus(std::span<const SentenceImagePair> pairs, std::span<const GoldSentence> gold) {
  if (pairs.size() != gold.size()) throw PreconditionError("benchmark: pairs and gold differ in length");
  ParallelCorpus out;
  out.pairs.assign(pairs.begin(), pairs.end());
  for (const auto& g : gold) out.targets.push_back(g.tokens);
  return out;
}

Translation translate_all(const Seq2SeqModel& model, const FusionParameters* fusion, const VisualContext* visual,
                          std::span<const Example> data, const Vocabulary& tgt_vocab, std::size_t extra_len) {
  Translation out;
  for (const auto& ex : data) {
    out.hypotheses.push_back(tgt_vocab.decode(translate(model, fusion, visual, ex, ex.tgt.size() + extra_len)));
    out.references.push_back(tgt_vocab.decode(ex.tgt));
  }
  out.bleu = bleu4(out.hypotheses, out.references);
  return out;
}

DisambiguationResult run_disambiguation(const DisambiguationBenchmark& bench, const DisambiguationRunConfig& cfg) {
  if (!(cfg.dev_fraction >= 0.0 && cfg.dev_fraction < 1.0))
    throw PreconditionError("dev_fraction must lie in [0,1)");
  const TokenizerConfig tok;
  const StopWordList stoplist;

  const auto n_dev = static_cast<std::size_t>(cfg.dev_fraction * static_cast<double>(bench.train.size()));
  const std::size_t n_fit = bench.train.size() - n_dev;
  const ParallelCorpus all_train = benchmark_corpus(bench.train, bench.train_gold);
  ParallelCorpus fit, dev;
  fit.pairs.assign(all_train.pairs.begin(), all_train.pairs.begin() + static_cast<std::ptrdiff_t>(n_fit));
  fit.targets.assign(all_train.targets.begin(), all_train.targets.begin() + static_cast<std::ptrdiff_t>(n_fit));
  dev.pairs.assign(all_train.pairs.begin() + static_cast<std::ptrdiff_t>(n_fit), all_train.pairs.end());
  dev.targets.assign(all_train.targets.begin() + static_cast<std::ptrdiff_t>(n_fit), all_train.targets.end());
  const ParallelCorpus test = benchmark_corpus(bench.test, bench.test_gold);

  const auto vocabs = build_vocabularies(fit, tok, stoplist, cfg.src_min_count);
  const auto train_set = make_examples(fit, tok, stoplist, vocabs.src, vocabs.tgt);
  const auto dev_set = make_examples(dev, tok, stoplist, vocabs.src, vocabs.tgt);
  const auto test_set = make_examples(test, tok, stoplist, vocabs.src, vocabs.tgt);

  // Retrieval sees every sentence-image pair, as a seed corpus would.
  std::vector<SentenceImagePair> seed_pairs(bench.train.begin(), bench.train.end());
  seed_pairs.insert(seed_pairs.end(), bench.test.begin(), bench.test.end());
  const WordImageDictionary dict = build_dictionary(seed_pairs, tok, stoplist);
  VisualContext visual{&dict, &bench.features, cfg.train.m};

  ModelConfig mc = cfg.model;
  mc.vocab_src = static_cast<std::uint32_t>(vocabs.src.size());
  mc.vocab_tgt = static_cast<std::uint32_t>(vocabs.tgt.size());
  Seq2SeqModel model(mc, cfg.init_seed);
  std::optional<FusionParameters> fusion;
  if (cfg.fusion) fusion.emplace(bench.features.dim(), mc.d_model, cfg.init_seed + 1);

  auto trained = train(std::move(model), std::move(fusion), cfg.fusion ? &visual : nullptr, train_set, dev_set,
                       cfg.train, vocabs.tgt);
  const FusionParameters* fp = trained.fusion ? &*trained.fusion : nullptr;
  auto tr = translate_all(trained.model, fp, fp ? &visual : nullptr, test_set, vocabs.tgt);

  std::vector<std::size_t> positions;
  for (const auto& g : bench.test_gold) positions.push_back(g.ambiguous_position);
  DisambiguationResult out;
  out.bleu = tr.bleu;
  out.ambiguous_accuracy = ambiguous_token_accuracy(tr.hypotheses, tr.references, positions);
  out.steps = trained.steps;
  out.hypotheses = std::move(tr.hypotheses);
  return out;
}

}  // namespace lvg
