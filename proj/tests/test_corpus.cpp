#include "lvg/corpus.hpp"
#include "lvg/errors.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace lvg;

namespace {

using Strings = std::vector<std::string>;

// Naive BPE learner: recount every adjacent pair from scratch after each
// merge, on the word list itself rather than a frequency table.
std::vector<std::pair<std::string, std::string>> naive_bpe(const Strings& texts, std::size_t merges) {
  std::vector<Strings> corpus;
  for (const auto& t : texts) {
    for (const auto& w : oracle::words(t)) {
      Strings chars;
      for (char c : w) chars.emplace_back(1, c);
      corpus.push_back(chars);
    }
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t step = 0; step < merges; ++step) {
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& w : corpus)
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    std::pair<std::string, std::string> best;
    int best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {
        best = pair;
        best_count = c;
      }
    }
    if (best_count < 2) break;
    out.push_back(best);
    for (auto& w : corpus) {
      Strings merged;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == best.first && w[i + 1] == best.second) {
          merged.push_back(w[i] + w[i + 1]);
          ++i;
        } else {
          merged.push_back(w[i]);
        }
      }
      w = merged;
    }
  }
  return out;
}

TokenizerConfig bpe(std::vector<MergeRule> merges) {
  TokenizerConfig cfg;
  cfg.mode = TokenizerMode::bpe;
  cfg.merges = std::move(merges);
  return cfg;
}

}  // namespace

TEST(LoadPairs, SingleRecord) {
  oracle::TempDir dir("pairs");
  write_file(dir / "p.tsv", "a dog runs\timg_001\n");
  const auto pairs = load_pairs(dir / "p.tsv");
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].text, "a dog runs");
  EXPECT_EQ(pairs[0].image_id, "img_001");
}

TEST(LoadPairs, EmptyFileGivesNoPairs) {
  oracle::TempDir dir("pairs");
  write_file(dir / "p.tsv", "");
  EXPECT_TRUE(load_pairs(dir / "p.tsv").empty());
}

TEST(LoadPairs, BlankLinesAreSkippedInOrder) {
  const auto pairs = parse_pairs("one\te1\n\ntwo\te2\n");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0], (SentenceImagePair{"one", "e1"}));
  EXPECT_EQ(pairs[1], (SentenceImagePair{"two", "e2"}));
}

TEST(LoadPairs, MalformedLineReportsLineNumber) {
  try {
    parse_pairs("ok\te1\n\nno tab here\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_pairs("a\tb\tc\n"), ParseError);
  EXPECT_THROW(parse_pairs("   \te1\n"), ParseError);
  EXPECT_THROW(parse_pairs("text\t\n"), ParseError);
}

TEST(LoadPairs, MissingFileIsIoError) {
  EXPECT_THROW(load_pairs("/nonexistent/dir/pairs.tsv"), IoError);
}

TEST(LoadPairs, SaveRoundTrip) {
  oracle::TempDir dir("pairs");
  const std::vector<SentenceImagePair> pairs{{"a b", "x"}, {"c", "y"}};
  save_pairs(dir / "p.tsv", pairs);
  EXPECT_EQ(load_pairs(dir / "p.tsv"), pairs);
}

TEST(FilterStopWords, RemovesListedWords) {
  const StopWordList stop{"a"};
  EXPECT_EQ(filter_stop_words(Strings{"a", "dog", "runs"}, stop), (Strings{"dog", "runs"}));
  EXPECT_TRUE(filter_stop_words(Strings{}, stop).empty());
}

TEST(FilterStopWords, CaseFoldingMatchesOracle) {
  const StopWordList stop{"the"};
  const Strings in{"The", "the", "THE", "cat"};
  Strings expected;
  for (const auto& w : in)
    if (oracle::lower(w) != "the") expected.push_back(w);
  EXPECT_EQ(filter_stop_words(in, stop, true), expected);
  EXPECT_EQ(expected, Strings{"cat"});
  // Case-sensitive mode only drops the exact match.
  EXPECT_EQ(filter_stop_words(in, stop, false), (Strings{"The", "THE", "cat"}));
}

TEST(FilterStopWords, Idempotent) {
  const StopWordList stop{"a", "of", "the"};
  const Strings in{"the", "end", "of", "A", "story", "a"};
  const auto once = filter_stop_words(in, stop);
  EXPECT_EQ(filter_stop_words(once, stop), once);
}

TEST(StopWordList, EntriesAreLowercased) {
  oracle::TempDir dir("stop");
  write_file(dir / "s.txt", "The\nAND\n\nthe\n");
  const auto stop = StopWordList::load(dir / "s.txt");
  EXPECT_EQ(stop.size(), 2u);
  EXPECT_TRUE(stop.contains("the"));
  EXPECT_TRUE(stop.contains("and"));
}

TEST(Tokenize, WhitespaceMode) {
  TokenizerConfig cfg;
  const StopWordList stop{"a"};
  EXPECT_EQ(tokenize("a dog runs", cfg, stop), (Strings{"dog", "runs"}));
  EXPECT_EQ(tokenize("  Dog\t\tRUNS \n", cfg, stop), (Strings{"dog", "runs"}));
  EXPECT_TRUE(tokenize("", cfg, stop).empty());
}

TEST(Tokenize, GreedyMergesInRuleOrder) {
  const auto cfg = bpe({{"l", "o"}, {"lo", "w"}});
  EXPECT_EQ(tokenize("lower", cfg, StopWordList{}), (Strings{"low", "e", "r"}));
  EXPECT_TRUE(tokenize("", cfg, StopWordList{}).empty());
}

TEST(Tokenize, FilteringPrecedesSegmentation) {
  // "lo" is a stop word but also a merge product; only whole words are filtered.
  const auto cfg = bpe({{"l", "o"}});
  const StopWordList stop{"lo"};
  EXPECT_EQ(tokenize("lo low", cfg, stop), (Strings{"lo", "w"}));
}

TEST(Tokenize, Deterministic) {
  const auto cfg = bpe({{"a", "b"}, {"ab", "c"}});
  const StopWordList stop{"x"};
  EXPECT_EQ(tokenize("abc x abcab", cfg, stop), tokenize("abc x abcab", cfg, stop));
}

TEST(TokenizerConfig, RejectsRulesOverUnknownSymbols) {
  EXPECT_THROW(bpe({}).validate(), PreconditionError);
  EXPECT_THROW(bpe({{"l", "o"}, {"low", "e"}}).validate(), PreconditionError);
  EXPECT_NO_THROW(bpe({{"l", "o"}, {"lo", "w"}}).validate());
}

TEST(LearnBpe, ZeroMerges) { EXPECT_TRUE(learn_bpe(Strings{"low lower"}, 0).empty()); }

TEST(LearnBpe, SinglePair) {
  EXPECT_EQ(learn_bpe(Strings{"aaaa"}, 1), (std::vector<MergeRule>{{"a", "a"}}));
}

TEST(LearnBpe, MatchesBruteForcePairCounting) {
  const Strings texts{"low lower lowest"};
  const auto got = learn_bpe(texts, 2);
  const auto want = naive_bpe(texts, 2);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].left, want[i].first);
    EXPECT_EQ(got[i].right, want[i].second);
  }
  EXPECT_EQ(got, (std::vector<MergeRule>{{"l", "o"}, {"lo", "w"}}));
}

TEST(LearnBpe, RandomCorporaMatchOracle) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> letter(0, 3), len(1, 6), count(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    Strings texts;
    const int n = count(gen);
    for (int i = 0; i < n; ++i) {
      std::string w;
      const int l = len(gen);
      for (int k = 0; k < l; ++k) w += static_cast<char>('a' + letter(gen));
      texts.push_back(w);
    }
    const auto got = learn_bpe(texts, 8);
    const auto want = naive_bpe(texts, 8);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].left, want[i].first);
      EXPECT_EQ(got[i].right, want[i].second);
    }
  }
}

TEST(LearnBpe, StopsWhenNoPairRepeats) { EXPECT_TRUE(learn_bpe(Strings{"abc def"}, 5).empty()); }

TEST(Bpe, RoundTripAndClosedAlphabet) {
  const Strings texts{"banana bandana ban nab", "anagram banal"};
  const auto merges = learn_bpe(texts, 10);
  ASSERT_FALSE(merges.empty());
  std::set<std::string> alphabet;
  for (const auto& t : texts)
    for (char c : t)
      if (c != ' ') alphabet.insert(std::string(1, c));
  for (const auto& r : merges) alphabet.insert(r.merged());

  const auto cfg = bpe(merges);
  for (const auto& word : {"banana", "bandana", "nab", "abba", "xyz"}) {
    const auto pieces = tokenize(word, cfg, StopWordList{});
    std::string joined;
    for (const auto& p : pieces) {
      joined += p;
      if (std::string(word) != "xyz") EXPECT_TRUE(alphabet.count(p)) << p;
    }
    EXPECT_EQ(joined, word);
  }
}

TEST(Bpe, MultiByteCharactersStayWhole) {
  EXPECT_EQ(utf8_chars("h\xC3\xA9"), (Strings{"h", "\xC3\xA9"}));
  const auto pieces = apply_bpe("\xC3\xA9t\xC3\xA9", std::vector<MergeRule>{{"\xC3\xA9", "t"}});
  EXPECT_EQ(pieces, (Strings{"\xC3\xA9t", "\xC3\xA9"}));
}

TEST(Merges, FileRoundTrip) {
  oracle::TempDir dir("merges");
  const std::vector<MergeRule> rules{{"l", "o"}, {"lo", "w"}};
  save_merges(dir / "m.txt", rules);
  EXPECT_EQ(load_merges(dir / "m.txt"), rules);
  write_file(dir / "bad.txt", "l o w\n");
  EXPECT_THROW(load_merges(dir / "bad.txt"), ParseError);
}

TEST(Vocabulary, ReservedIdsAndFrequencyOrder) {
  const std::vector<TokenSequence> seqs{{"b", "a", "b"}, {"c", "b", "a"}};
  const auto v = Vocabulary::build(seqs);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.id("b"), 4u);
  EXPECT_EQ(v.id("a"), 5u);
  EXPECT_EQ(v.id("c"), 6u);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_EQ(Vocabulary::build(seqs, 2).id("c"), Vocabulary::kUnk);
}

TEST(Vocabulary, DecodeStopsAtEos) {
  const auto v = Vocabulary::build(std::vector<TokenSequence>{{"x", "y"}});
  const std::vector<std::uint32_t> ids{Vocabulary::kBos, v.id("x"), Vocabulary::kEos, v.id("y")};
  EXPECT_EQ(v.decode(ids), (Strings{"x"}));
}

TEST(Vocabulary, JsonRoundTrip) {
  oracle::TempDir dir("vocab");
  const auto v = Vocabulary::build(std::vector<TokenSequence>{{"x", "y", "x"}});
  v.save(dir / "v.json");
  EXPECT_EQ(Vocabulary::load(dir / "v.json"), v);
  write_file(dir / "bad.json", R"(["<pad>","<unk>","<s>","</s>","x","x"])");
  EXPECT_THROW(Vocabulary::load(dir / "bad.json"), FormatError);
}
