#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond its public types and are written for
// obviousness, not speed.

#include "lvg/corpus.hpp"
#include "lvg/dictionary.hpp"
#include "lvg/eval.hpp"
#include "lvg/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace oracle {

inline std::vector<std::string> words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Enumerate every (pair, token) combination, count pairs per (token, image)
// and sort by (count desc, index of the first pair holding both).
inline std::map<std::string, std::vector<std::pair<std::string, std::uint32_t>>> brute_force_dictionary(
    const std::vector<lvg::SentenceImagePair>& pairs, const std::set<std::string>& stop) {
  std::set<std::string> vocab;
  std::vector<std::vector<std::string>> toks;
  for (const auto& p : pairs) {
    std::vector<std::string> t;
    for (const auto& w : words(p.text)) {
      if (!stop.count(lower(w))) t.push_back(lower(w));
    }
    vocab.insert(t.begin(), t.end());
    toks.push_back(t);
  }
  std::map<std::string, std::vector<std::pair<std::string, std::uint32_t>>> out;
  for (const auto& token : vocab) {
    std::vector<std::string> images;
    for (const auto& p : pairs) {
      if (std::find(images.begin(), images.end(), p.image_id) == images.end()) images.push_back(p.image_id);
    }
    std::vector<std::tuple<std::uint32_t, std::size_t, std::string>> rows;
    for (const auto& img : images) {
      std::uint32_t count = 0;
      std::size_t first = pairs.size();
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const bool has = std::find(toks[i].begin(), toks[i].end(), token) != toks[i].end();
        if (has && pairs[i].image_id == img) {
          ++count;
          first = std::min(first, i);
        }
      }
      if (count > 0) rows.emplace_back(count, first, img);
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::get<1>(a) < std::get<1>(b);
    });
    for (const auto& [count, first, img] : rows) out[token].emplace_back(img, count);
  }
  return out;
}

inline bool same_as_oracle(const lvg::WordImageDictionary& dict,
                           const std::map<std::string, std::vector<std::pair<std::string, std::uint32_t>>>& ref) {
  if (dict.size() != ref.size()) return false;
  for (const auto& [token, rows] : ref) {
    const auto* entry = dict.find(token);
    if (entry == nullptr || entry->size() != rows.size()) return false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if ((*entry)[i].image_id != rows[i].first || (*entry)[i].count != rows[i].second) return false;
    }
  }
  return true;
}

inline std::vector<lvg::SentenceImagePair> random_corpus(std::mt19937_64& gen, std::size_t max_pairs,
                                                        std::size_t max_vocab) {
  std::uniform_int_distribution<std::size_t> n_pairs(0, max_pairs);
  std::uniform_int_distribution<std::size_t> vocab_size(1, max_vocab);
  const std::size_t v = vocab_size(gen);
  const std::size_t n = n_pairs(gen);
  std::uniform_int_distribution<std::size_t> pick(0, v - 1);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::uniform_int_distribution<std::size_t> image(0, std::max<std::size_t>(1, n / 3));
  std::vector<lvg::SentenceImagePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    const std::size_t l = len(gen);
    for (std::size_t k = 0; k < l; ++k) text += (k ? " " : "") + std::string("t") + std::to_string(pick(gen));
    out.push_back({text, "img" + std::to_string(image(gen))});
  }
  return out;
}

// Corpus BLEU-4 written from the textbook definition with n-grams keyed
// by their joined string.
inline double reference_bleu(const std::vector<std::vector<std::string>>& hyps,
                             const std::vector<std::vector<std::string>>& refs) {
  double log_sum = 0.0;
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += hyps[i].size();
    ref_len += refs[i].size();
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    double matched = 0.0, total = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      auto grams = [n](const std::vector<std::string>& s) {
        std::map<std::string, int> c;
        for (std::size_t k = 0; k + n <= s.size(); ++k) {
          std::string key;
          for (std::size_t j = 0; j < n; ++j) key += s[k + j] + "\x1f";
          ++c[key];
        }
        return c;
      };
      const auto h = grams(hyps[i]);
      const auto r = grams(refs[i]);
      for (const auto& [g, c] : h) {
        total += c;
        const auto it = r.find(g);
        if (it != r.end()) matched += std::min(c, it->second);
      }
    }
    if (matched == 0.0) return 0.0;
    log_sum += std::log(matched / total) / 4.0;
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_sum);
}

// Two-sided sign-test p-value from exact integer binomial coefficients.
inline double binomial_two_sided(unsigned wins, unsigned n) {
  if (n == 0) return 1.0;
  std::vector<std::vector<unsigned long long>> pascal(n + 1);
  for (unsigned i = 0; i <= n; ++i) {
    pascal[i].assign(i + 1, 1);
    for (unsigned k = 1; k < i; ++k) pascal[i][k] = pascal[i - 1][k - 1] + pascal[i - 1][k];
  }
  const unsigned k = std::min(wins, n - wins);
  unsigned long long tail = 0;
  for (unsigned j = 0; j <= k; ++j) tail += pascal[n][j];
  const double p = 2.0 * static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n));
  return std::min(1.0, p);
}

// Central differences of `loss` with respect to every entry of `x`.
inline lvg::Tensor numeric_gradient(lvg::Tensor& x, const std::function<double()>& loss, double h = 1e-5) {
  lvg::Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max |a-b| / max(|a|, |b|, floor): a relative error that stays meaningful
// for entries whose true gradient is near zero.
inline double relative_error(const lvg::Tensor& a, const lvg::Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lvg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

}  // namespace oracle
