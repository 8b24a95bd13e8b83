#include "lvg/eval.hpp"

#include "lvg/errors.hpp"
#include "lvg/rng.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>

namespace lvg {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++counts[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                      s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

// (clipped matches, hypothesis n-gram total) for one sentence pair.
std::pair<std::size_t, std::size_t> clipped(const Sentence& hyp, const Sentence& ref, std::size_t n) {
  auto h = ngrams(hyp, n);
  auto r = ngrams(ref, n);
  std::size_t match = 0;
  for (const auto& [gram, c] : h) {
    auto it = r.find(gram);
    if (it != r.end()) match += std::min(c, it->second);
  }
  const std::size_t total = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  return {match, total};
}

double brevity_penalty(double hyp_len, double ref_len) {
  if (hyp_len <= 0.0) return 0.0;
  return hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
}

}  // namespace

double bleu4(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  if (hypotheses.size() != references.size())
    throw PreconditionError("bleu4: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                            std::to_string(references.size()) + " references");
  std::array<std::size_t, 4> match{};
  std::array<std::size_t, 4> total{};
  double hyp_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    hyp_len += static_cast<double>(hypotheses[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto [m, t] = clipped(hypotheses[s], references[s], n);
      match[n - 1] += m;
      total[n - 1] += t;
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (match[n] == 0 || total[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
  }
  return 100.0 * brevity_penalty(hyp_len, ref_len) * std::exp(log_sum / 4.0);
}

double sentence_bleu(const Sentence& hypothesis, const Sentence& reference) {
  if (hypothesis.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto [m, t] = clipped(hypothesis, reference, n);
    double p = 0.0;
    if (n == 1) {
      if (m == 0) return 0.0;
      p = static_cast<double>(m) / static_cast<double>(t);
    } else {
      p = (static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0);
    }
    log_sum += std::log(p);
  }
  return 100.0 *
         brevity_penalty(static_cast<double>(hypothesis.size()), static_cast<double>(reference.size())) *
         std::exp(log_sum / 4.0);
}

double coverage(const WordImageDictionary& dict, std::span<const std::string> texts,
                const TokenizerConfig& cfg, const StopWordList& stoplist) {
  std::size_t total = 0;
  std::size_t covered = 0;
  for (const auto& text : texts) {
    for (const auto& token : tokenize(text, cfg, stoplist)) {
      ++total;
      const auto* entry = dict.find(token);
      if (entry != nullptr && !entry->empty()) ++covered;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

double sign_test(std::span<const double> scores_a, std::span<const double> scores_b) {
  if (scores_a.size() != scores_b.size())
    throw PreconditionError("sign_test: score lists differ in length");
  if (scores_a.empty()) throw PreconditionError("sign_test: no scores");
  std::size_t wins = 0;
  std::size_t losses = 0;
  for (std::size_t i = 0; i < scores_a.size(); ++i) {
    if (scores_a[i] > scores_b[i]) ++wins;
    else if (scores_a[i] < scores_b[i]) ++losses;
  }
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  const std::size_t k = std::min(wins, losses);
  // P(X <= k) for X ~ Binomial(n, 1/2), built term by term in log space.
  const long double log_half_n = static_cast<long double>(n) * std::log(0.5L);
  long double log_term = log_half_n;  // i = 0
  long double tail = std::exp(log_term);
  for (std::size_t i = 0; i < k; ++i) {
    log_term += std::log(static_cast<long double>(n - i)) - std::log(static_cast<long double>(i + 1));
    tail += std::exp(log_term);
  }
  return static_cast<double>(std::min(1.0L, 2.0L * tail));
}

double ambiguous_token_accuracy(std::span<const Sentence> translations, std::span<const Sentence> gold,
                                std::span<const std::size_t> ambiguous_positions) {
  if (translations.size() != gold.size() || gold.size() != ambiguous_positions.size())
    throw PreconditionError("ambiguous_token_accuracy: inputs are not aligned");
  if (gold.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto pos = ambiguous_positions[i];
    if (pos >= gold[i].size())
      throw PreconditionError("ambiguous_token_accuracy: position " + std::to_string(pos) +
                              " beyond gold sentence " + std::to_string(i));
    if (pos < translations[i].size() && translations[i][pos] == gold[i][pos]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

// ------------------------------------------------------------ benchmark

void DisambiguationSpec::validate() const {
  if (n_ambiguous_types == 0) throw PreconditionError("benchmark: need at least one ambiguous type");
  if (senses_per_type != 2) throw PreconditionError("benchmark: senses_per_type must be 2");
  if (n_context_tokens == 0 && context_per_sentence > 0)
    throw PreconditionError("benchmark: context vocabulary is empty");
  if (d_img == 0 || regions == 0) throw PreconditionError("benchmark: d_img and regions must be positive");
  if (!(center_distance > 0.0) || !(noise >= 0.0)) throw PreconditionError("benchmark: bad geometry");
}

namespace {

std::string source_word(std::string_view kind, std::size_t i) { return std::string(kind) + std::to_string(i); }

}  // namespace

DisambiguationBenchmark gen_disambiguation_benchmark(const DisambiguationSpec& spec) {
  spec.validate();
  DisambiguationBenchmark bench;
  bench.features = ImageFeatureStore(spec.d_img);
  const std::size_t d = spec.d_img;
  const std::size_t senses = spec.senses_per_type;

  // Sense centers: a random base point per word and a random unit axis;
  // the two senses sit at base -/+ (distance/2) * axis.
  CounterRng geo(spec.seed, 1);
  for (std::size_t t = 0; t < spec.n_ambiguous_types; ++t) {
    std::vector<double> base(d), axis(d);
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      base[c] = geo.normal();
      axis[c] = geo.normal();
      norm += axis[c] * axis[c];
    }
    norm = std::sqrt(norm);
    for (std::size_t s = 0; s < senses; ++s) {
      const double sign = s == 0 ? -0.5 : 0.5;
      std::vector<double> center(d);
      for (std::size_t c = 0; c < d; ++c) center[c] = base[c] + sign * spec.center_distance * axis[c] / norm;
      bench.centers.push_back(std::move(center));
    }
  }

  std::size_t object_counter = 0;
  auto make_split = [&](std::uint32_t count, std::uint64_t stream, std::string_view tag,
                        std::vector<SentenceImagePair>& pairs, std::vector<GoldSentence>& gold) {
    CounterRng rng(spec.seed, stream);
    // Exactly balanced senses, assigned by a shuffle independent of the text.
    std::vector<std::uint32_t> sense(count);
    for (std::uint32_t i = 0; i < count; ++i) sense[i] = static_cast<std::uint32_t>(i % senses);
    keyed_shuffle(sense, spec.seed, stream + 100);

    for (std::uint32_t i = 0; i < count; ++i) {
      const auto type = static_cast<std::uint32_t>(rng.below(spec.n_ambiguous_types));
      const std::size_t slots = spec.context_per_sentence + 1;
      const std::size_t amb_pos = rng.below(slots);

      Sentence src;
      GoldSentence g;
      g.ambiguous_type = type;
      g.sense = sense[i];
      g.ambiguous_position = amb_pos;
      for (std::size_t p = 0; p < slots; ++p) {
        if (p == amb_pos) {
          src.push_back(source_word("amb", type));
          g.tokens.push_back("AMB" + std::to_string(type) + "." + std::to_string(sense[i]));
        } else {
          const auto k = rng.below(spec.n_context_tokens);
          src.push_back(source_word("ctx", k));
          g.tokens.push_back(source_word("CTX", k));
        }
      }
      src.push_back(source_word("obj", object_counter++));
      g.tokens.push_back("OBJ");

      // Image: `regions` noisy rows around the sense center, mean-pooled.
      const auto& center = bench.centers[type * senses + sense[i]];
      const double row_noise = spec.noise * std::sqrt(static_cast<double>(spec.regions));
      std::vector<float> grid(spec.regions * d);
      for (std::size_t r = 0; r < spec.regions; ++r)
        for (std::size_t c = 0; c < d; ++c)
          grid[r * d + c] = static_cast<float>(center[c] + row_noise * rng.normal());
      std::string image_id = std::string("img_") + std::string(tag) + std::to_string(i);
      bench.features.add(image_id, pool(grid, spec.regions));

      std::string text;
      for (const auto& w : src) text += (text.empty() ? "" : " ") + w;
      pairs.push_back({std::move(text), std::move(image_id)});
      gold.push_back(std::move(g));
    }
  };
  make_split(spec.n_train, 2, "tr", bench.train, bench.train_gold);
  make_split(spec.n_test, 3, "te", bench.test, bench.test_gold);
  return bench;
}

void save_gold(const std::filesystem::path& path, std::span<const GoldSentence> gold) {
  std::string out;
  for (const auto& g : gold) {
    std::string line;
    for (const auto& t : g.tokens) line += (line.empty() ? "" : " ") + t;
    out += line + '\t' + std::to_string(g.ambiguous_position) + '\n';
  }
  write_file(path, out);
}

std::vector<GoldSentence> load_gold(const std::filesystem::path& path) {
  std::vector<GoldSentence> gold;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("gold line missing TAB", line_no);
    GoldSentence g;
    g.tokens = split_whitespace(std::string_view(line).substr(0, tab));
    auto pos_text = std::string_view(line).substr(tab + 1);
    auto [ptr, ec] = std::from_chars(pos_text.data(), pos_text.data() + pos_text.size(), g.ambiguous_position);
    if (ec != std::errc{} || ptr != pos_text.data() + pos_text.size())
      throw ParseError("bad ambiguous position", line_no);
    if (g.ambiguous_position >= g.tokens.size())
      throw ParseError("ambiguous position beyond sentence end", line_no);
    // Recover type/sense from the AMB<type>.<sense> token when present.
    const auto& amb = g.tokens[g.ambiguous_position];
    if (amb.rfind("AMB", 0) == 0) {
      auto dot = amb.find('.');
      if (dot != std::string::npos) {
        std::from_chars(amb.data() + 3, amb.data() + dot, g.ambiguous_type);
        std::from_chars(amb.data() + dot + 1, amb.data() + amb.size(), g.sense);
      }
    }
    gold.push_back(std::move(g));
  }
  return gold;
}

void save_benchmark(const DisambiguationBenchmark& bench, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_pairs(dir / "train.tsv", bench.train);
  save_pairs(dir / "test.tsv", bench.test);
  save_gold(dir / "train.gold", bench.train_gold);
  save_gold(dir / "test.gold", bench.test_gold);
  save_feature_store(bench.features, dir / "features.lvf");
}

DisambiguationBenchmark load_benchmark(const std::filesystem::path& dir) {
  DisambiguationBenchmark bench;
  bench.train = load_pairs(dir / "train.tsv");
  bench.test = load_pairs(dir / "test.tsv");
  bench.train_gold = load_gold(dir / "train.gold");
  bench.test_gold = load_gold(dir / "test.gold");
  bench.features = load_feature_store(dir / "features.lvf");
  if (bench.train.size() != bench.train_gold.size() || bench.test.size() != bench.test_gold.size())
    throw FormatError(dir.string() + ": pair and gold files differ in length");
  return bench;
}

}  // namespace lvg
