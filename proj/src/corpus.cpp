#include "lvg/corpus.hpp"

#include "lvg/errors.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lvg {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Replaces every left-to-right occurrence of (rule.left, rule.right).
std::vector<std::string> merge_pair(std::vector<std::string> symbols, const MergeRule& rule) {
  std::vector<std::string> next;
  next.reserve(symbols.size());
  std::size_t i = 0;
  while (i < symbols.size()) {
    if (i + 1 < symbols.size() && symbols[i] == rule.left && symbols[i + 1] == rule.right) {
      next.push_back(rule.merged());
      i += 2;
    } else {
      next.push_back(std::move(symbols[i]));
      ++i;
    }
  }
  return next;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

StopWordList::StopWordList(std::span<const std::string> words) {
  for (const auto& w : words) {
    auto t = trim(w);
    if (!t.empty()) words_.insert(to_lower(t));
  }
}

StopWordList::StopWordList(std::initializer_list<std::string> words)
    : StopWordList(std::span<const std::string>(words.begin(), words.size())) {}

StopWordList StopWordList::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  return StopWordList(lines);
}

void TokenizerConfig::validate() const {
  if (mode != TokenizerMode::bpe) return;
  if (merges.empty()) throw PreconditionError("bpe tokenizer requires at least one merge rule");
  std::set<std::string, std::less<>> products;
  auto known = [&](const std::string& sym) {
    return utf8_chars(sym).size() == 1 || products.contains(sym);
  };
  for (std::size_t i = 0; i < merges.size(); ++i) {
    const auto& rule = merges[i];
    if (rule.left.empty() || rule.right.empty() || !known(rule.left) || !known(rule.right)) {
      throw PreconditionError("merge rule " + std::to_string(i + 1) + " (" + rule.left + " " +
                              rule.right + ") uses an unknown symbol");
    }
    products.insert(rule.merged());
  }
}

std::vector<SentenceImagePair> parse_pairs(std::string_view content) {
  std::vector<SentenceImagePair> pairs;
  std::size_t line_no = 0;
  while (!content.empty()) {
    ++line_no;
    auto nl = content.find('\n');
    std::string_view line = content.substr(0, nl);
    content.remove_prefix(nl == std::string_view::npos ? content.size() : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("missing TAB separator", line_no);
    if (line.find('\t', tab + 1) != std::string_view::npos)
      throw ParseError("more than one TAB separator", line_no);
    auto text = trim(line.substr(0, tab));
    auto image = trim(line.substr(tab + 1));
    if (text.empty()) throw ParseError("empty sentence", line_no);
    if (image.empty()) throw ParseError("empty image id", line_no);
    pairs.push_back({std::string(text), std::string(image)});
  }
  return pairs;
}

std::vector<SentenceImagePair> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(read_file(path));
}

void save_pairs(const std::filesystem::path& path, std::span<const SentenceImagePair> pairs) {
  std::string out;
  for (const auto& p : pairs) out += p.text + '\t' + p.image_id + '\n';
  write_file(path, out);
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> filter_stop_words(std::span<const std::string> tokens,
                                           const StopWordList& stoplist, bool lowercase) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    bool stop = lowercase ? stoplist.contains(to_lower(t)) : stoplist.contains(t);
    if (!stop) out.push_back(t);
  }
  return out;
}

std::vector<std::string> apply_bpe(std::string_view word, std::span<const MergeRule> merges) {
  auto symbols = utf8_chars(word);
  for (const auto& rule : merges) {
    if (symbols.size() < 2) break;
    symbols = merge_pair(std::move(symbols), rule);
  }
  return symbols;
}

TokenSequence tokenize(std::string_view text, const TokenizerConfig& cfg,
                       const StopWordList& stoplist) {
  auto words = split_whitespace(cfg.lowercase ? to_lower(text) : std::string(text));
  words = filter_stop_words(words, stoplist, cfg.lowercase);
  if (cfg.mode == TokenizerMode::whitespace) return words;

  TokenSequence out;
  for (const auto& w : words) {
    auto pieces = apply_bpe(w, cfg.merges);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()),
               std::make_move_iterator(pieces.end()));
  }
  return out;
}

std::vector<MergeRule> learn_bpe(std::span<const std::string> texts, std::size_t num_merges) {
  std::vector<MergeRule> merges;
  if (num_merges == 0) return merges;

  // Distinct words with their corpus frequency, in first-seen order.
  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> freq;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& text : texts) {
    for (auto& w : split_whitespace(text)) {
      auto [it, inserted] = index.try_emplace(w, words.size());
      if (inserted) {
        words.push_back(utf8_chars(w));
        freq.push_back(0);
      }
      ++freq[it->second];
    }
  }

  while (merges.size() < num_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& sy = words[w];
      for (std::size_t i = 0; i + 1 < sy.size(); ++i) counts[{sy[i], sy[i + 1]}] += freq[w];
    }
    // std::map iterates pairs in lexicographic order, so the first maximum
    // found is the tie-break winner.
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {
        best = &pair;
        best_count = c;
      }
    }
    if (best == nullptr || best_count < 2) break;

    MergeRule rule{best->first, best->second};
    for (auto& sy : words) sy = merge_pair(std::move(sy), rule);
    merges.push_back(std::move(rule));
  }
  return merges;
}

std::vector<MergeRule> load_merges(const std::filesystem::path& path) {
  std::vector<MergeRule> merges;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto parts = split_whitespace(line);
    if (parts.size() != 2) throw ParseError("merge rule needs exactly two symbols", line_no);
    merges.push_back({parts[0], parts[1]});
  }
  return merges;
}

void save_merges(const std::filesystem::path& path, std::span<const MergeRule> merges) {
  std::string out;
  for (const auto& r : merges) out += r.left + ' ' + r.right + '\n';
  write_file(path, out);
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<unk>", "<s>", "</s>"}) add(s);
}

Vocabulary Vocabulary::build(std::span<const TokenSequence> sequences, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& seq : sequences) {
    for (const auto& t : seq) {
      if (counts[t]++ == 0) order.push_back(t);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const auto& a, const auto& b) { return counts[a] > counts[b]; });
  Vocabulary v;
  for (const auto& t : order) {
    if (counts[t] >= min_count) v.add(t);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError(path.string() + ": vocabulary must be a JSON array");
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  for (const auto& t : j) {
    if (!t.is_string()) throw FormatError(path.string() + ": non-string vocabulary entry");
    auto s = t.get<std::string>();
    if (v.index_.contains(s)) throw FormatError(path.string() + ": duplicate token " + s);
    v.add(s);
  }
  if (v.size() < 4 || v.tokens_[kPad] != "<pad>" || v.tokens_[kUnk] != "<unk>" ||
      v.tokens_[kBos] != "<s>" || v.tokens_[kEos] != "</s>") {
    throw FormatError(path.string() + ": reserved tokens missing");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_file(path, nlohmann::json(tokens_).dump() + "\n");
}

std::uint32_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<std::uint32_t>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::uint32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::uint32_t id) const {
  if (id >= tokens_.size()) throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::uint32_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::uint32_t> ids) const {
  std::vector<std::string> out;
  for (auto id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

}  // namespace lvg
