#include "lvg/dictionary.hpp"

#include "lvg/errors.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace lvg {

namespace {

void check_entry(const std::string& token, const WordImageDictionary::Entry& entry) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < entry.size(); ++i) {
    const auto& ic = entry[i];
    if (ic.image_id.empty()) throw FormatError("entry '" + token + "': empty image id");
    if (ic.count < 1) throw FormatError("entry '" + token + "': count must be >= 1");
    if (!seen.insert(ic.image_id).second)
      throw FormatError("entry '" + token + "': duplicate image id " + ic.image_id);
    if (i > 0 && entry[i - 1].count < ic.count)
      throw FormatError("entry '" + token + "': counts not in non-increasing order");
  }
}

}  // namespace

void WordImageDictionary::set_entry(std::string token, Entry entry) {
  check_entry(token, entry);
  entries_.insert_or_assign(std::move(token), std::move(entry));
}

std::vector<std::string> WordImageDictionary::lookup(std::string_view token, std::size_t m) const {
  if (m == 0) throw PreconditionError("lookup: m must be >= 1");
  std::vector<std::string> ids;
  const Entry* e = find(token);
  if (e == nullptr) return ids;
  const std::size_t k = std::min(m, e->size());
  ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) ids.push_back((*e)[i].image_id);
  return ids;
}

const WordImageDictionary::Entry* WordImageDictionary::find(std::string_view token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? nullptr : &it->second;
}

WordImageDictionary build_dictionary(std::span<const SentenceImagePair> pairs,
                                     const TokenizerConfig& cfg, const StopWordList& stoplist) {
  struct Tally {
    std::uint32_t count = 0;
    std::size_t first_seen = 0;
  };
  // token -> image -> tally; plus per-token image order of first appearance.
  std::unordered_map<std::string, std::unordered_map<std::string, Tally>> tallies;

  std::size_t order = 0;
  for (const auto& pair : pairs) {
    std::unordered_set<std::string> in_sentence;
    for (auto& token : tokenize(pair.text, cfg, stoplist)) {
      if (!in_sentence.insert(token).second) continue;
      auto [it, inserted] = tallies[token].try_emplace(pair.image_id, Tally{0, order});
      ++it->second.count;
    }
    ++order;
  }

  WordImageDictionary dict;
  for (auto& [token, images] : tallies) {
    std::vector<std::pair<std::string, Tally>> rows(images.begin(), images.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.second.count != b.second.count) return a.second.count > b.second.count;
      if (a.second.first_seen != b.second.first_seen) return a.second.first_seen < b.second.first_seen;
      return a.first < b.first;
    });
    WordImageDictionary::Entry entry;
    entry.reserve(rows.size());
    for (auto& [id, tally] : rows) entry.push_back({id, tally.count});
    dict.set_entry(token, std::move(entry));
  }
  return dict;
}

std::string dictionary_to_json(const WordImageDictionary& dict) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [token, entry] : dict.entries()) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& ic : entry) arr.push_back({ic.image_id, ic.count});
    j[token] = std::move(arr);
  }
  return j.dump() + "\n";
}

WordImageDictionary dictionary_from_json(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dictionary is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("dictionary must be a JSON object");

  WordImageDictionary dict;
  for (const auto& [token, arr] : j.items()) {
    if (!arr.is_array()) throw FormatError("entry '" + token + "': expected an array");
    WordImageDictionary::Entry entry;
    for (const auto& item : arr) {
      if (!item.is_array() || item.size() != 2 || !item[0].is_string() ||
          !item[1].is_number_unsigned()) {
        throw FormatError("entry '" + token + "': expected [image_id, count] items");
      }
      auto count = item[1].get<std::uint64_t>();
      if (count > UINT32_MAX) throw FormatError("entry '" + token + "': count out of range");
      entry.push_back({item[0].get<std::string>(), static_cast<std::uint32_t>(count)});
    }
    if (dict.contains(token)) throw FormatError("entry '" + token + "': duplicated key");
    dict.set_entry(token, std::move(entry));
  }
  return dict;
}

void save_dictionary(const WordImageDictionary& dict, const std::filesystem::path& path) {
  write_file(path, dictionary_to_json(dict));
}

WordImageDictionary load_dictionary(const std::filesystem::path& path) {
  return dictionary_from_json(read_file(path));
}

}  // namespace lvg
