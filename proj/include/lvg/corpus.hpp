#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lvg {

struct SentenceImagePair {
  std::string text;
  std::string image_id;

  friend bool operator==(const SentenceImagePair&, const SentenceImagePair&) = default;
};

// Lowercase stop words. Entries are folded to lowercase on construction so
// the set never holds mixed-case duplicates.
class StopWordList {
public:
  StopWordList() = default;
  explicit StopWordList(std::span<const std::string> words);
  StopWordList(std::initializer_list<std::string> words);

  static StopWordList load(const std::filesystem::path& path);

  bool contains(std::string_view word) const { return words_.find(word) != words_.end(); }
  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }
  const std::set<std::string, std::less<>>& words() const noexcept { return words_; }

private:
  std::set<std::string, std::less<>> words_;
};

enum class TokenizerMode { whitespace, bpe };

struct MergeRule {
  std::string left;
  std::string right;

  std::string merged() const { return left + right; }
  friend auto operator<=>(const MergeRule&, const MergeRule&) = default;
};

struct TokenizerConfig {
  TokenizerMode mode = TokenizerMode::whitespace;
  bool lowercase = true;
  std::vector<MergeRule> merges;

  // Throws PreconditionError when bpe mode has no merges or a rule refers
  // to a symbol that is neither a single character nor an earlier product.
  void validate() const;
};

// Filtered, segmented text: never contains stop words or empty strings.
using TokenSequence = std::vector<std::string>;

// One pair per non-blank line: `<sentence>\t<image_id>`.
std::vector<SentenceImagePair> load_pairs(const std::filesystem::path& path);
std::vector<SentenceImagePair> parse_pairs(std::string_view content);
void save_pairs(const std::filesystem::path& path, std::span<const SentenceImagePair> pairs);

std::vector<std::string> split_whitespace(std::string_view text);
// ASCII case folding; other bytes pass through untouched.
std::string to_lower(std::string_view text);
// Splits a UTF-8 string into code points (invalid bytes become single units).
std::vector<std::string> utf8_chars(std::string_view word);

std::vector<std::string> filter_stop_words(std::span<const std::string> tokens,
                                           const StopWordList& stoplist, bool lowercase = true);

TokenSequence tokenize(std::string_view text, const TokenizerConfig& cfg,
                       const StopWordList& stoplist);

// Applies every rule in order to one whitespace-free word.
std::vector<std::string> apply_bpe(std::string_view word, std::span<const MergeRule> merges);

// Greedy BPE: repeatedly merges the most frequent adjacent pair (ties go to
// the lexicographically smallest pair) until `num_merges` rules exist or no
// pair occurs at least twice.
std::vector<MergeRule> learn_bpe(std::span<const std::string> texts, std::size_t num_merges);

std::vector<MergeRule> load_merges(const std::filesystem::path& path);
void save_merges(const std::filesystem::path& path, std::span<const MergeRule> merges);

// Token <-> id map with four reserved ids.
class Vocabulary {
public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kUnk = 1;
  static constexpr std::uint32_t kBos = 2;
  static constexpr std::uint32_t kEos = 3;

  Vocabulary();

  // Tokens seen at least `min_count` times, ordered by descending frequency
  // then first appearance.
  static Vocabulary build(std::span<const TokenSequence> sequences, std::size_t min_count = 1);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::uint32_t add(const std::string& token);
  std::uint32_t id(std::string_view token) const;
  const std::string& token(std::uint32_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<std::uint32_t> encode(std::span<const std::string> tokens) const;
  // Stops at the first end-of-sequence id; skips pad and bos.
  std::vector<std::string> decode(std::span<const std::uint32_t> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
// Lines with trailing '\r' removed.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace lvg
