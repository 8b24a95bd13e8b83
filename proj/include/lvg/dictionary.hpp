#pragma once

#include "lvg/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lvg {

struct ImageCount {
  std::string image_id;
  std::uint32_t count = 0;

  friend bool operator==(const ImageCount&, const ImageCount&) = default;
};

// Token -> images that co-occurred with it, most frequent first. Equal
// counts keep the order in which the images first appeared in the corpus.
class WordImageDictionary {
public:
  using Entry = std::vector<ImageCount>;

  WordImageDictionary() = default;

  // Replaces one entry. Throws FormatError if the entry breaks the ordering
  // invariants (non-increasing counts, counts >= 1, unique image ids).
  void set_entry(std::string token, Entry entry);

  // First min(m, entry size) image ids; empty for unknown tokens.
  std::vector<std::string> lookup(std::string_view token, std::size_t m) const;
  const Entry* find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token) != nullptr; }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::map<std::string, Entry, std::less<>>& entries() const noexcept { return entries_; }

  friend bool operator==(const WordImageDictionary&, const WordImageDictionary&) = default;

private:
  std::map<std::string, Entry, std::less<>> entries_;
};

WordImageDictionary build_dictionary(std::span<const SentenceImagePair> pairs,
                                     const TokenizerConfig& cfg, const StopWordList& stoplist);

// JSON object: token -> [[image_id, count], ...] in stored order.
std::string dictionary_to_json(const WordImageDictionary& dict);
WordImageDictionary dictionary_from_json(std::string_view text);
void save_dictionary(const WordImageDictionary& dict, const std::filesystem::path& path);
WordImageDictionary load_dictionary(const std::filesystem::path& path);

}  // namespace lvg
