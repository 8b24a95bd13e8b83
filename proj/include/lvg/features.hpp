#pragma once

#include "lvg/corpus.hpp"
#include "lvg/dictionary.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lvg {

// Precomputed per-image feature vectors (the frozen CNN's pooled output).
// Records keep insertion order so save/load is byte-exact.
class ImageFeatureStore {
public:
  explicit ImageFeatureStore(std::uint32_t dim = 0) : dim_(dim) {}

  // Throws DimensionError on a length mismatch, PreconditionError on a
  // non-finite component or a duplicate id.
  void add(std::string image_id, std::vector<float> vector);

  const std::vector<float>* find(std::string_view image_id) const;
  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  friend bool operator==(const ImageFeatureStore& a, const ImageFeatureStore& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.vectors_ == b.vectors_;
  }

private:
  std::uint32_t dim_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

// Binary layout, little-endian:
//   "LVF1" | u32 count | u32 dim | count x (u16 id_len | id bytes | dim x f32)
std::string encode_feature_store(const ImageFeatureStore& store);
ImageFeatureStore decode_feature_store(std::string_view bytes, const std::string& context = "features");
void save_feature_store(const ImageFeatureStore& store, const std::filesystem::path& path);
ImageFeatureStore load_feature_store(const std::filesystem::path& path);

// Mean over the rows of a p x dim grid (row-major). p = 0 is an error.
std::vector<float> pool(std::span<const float> grid, std::size_t rows);

// n x m x dim retrieved-image features with an n x m validity mask. Real
// images fill a prefix of each token's m slots; padding slots are zero.
struct ImageTensor {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  ImageTensor() = default;
  ImageTensor(std::size_t n_, std::size_t m_, std::size_t dim_)
      : n(n_), m(m_), dim(dim_), values(n_ * m_ * dim_, 0.0), mask(n_ * m_, 0) {}

  std::span<double> slot(std::size_t i, std::size_t j) {
    return std::span<double>(values).subspan((i * m + j) * dim, dim);
  }
  std::span<const double> slot(std::size_t i, std::size_t j) const {
    return std::span<const double>(values).subspan((i * m + j) * dim, dim);
  }
  bool valid(std::size_t i, std::size_t j) const { return mask[i * m + j] != 0; }
  std::span<const std::uint8_t> token_mask(std::size_t i) const {
    return std::span<const std::uint8_t>(mask).subspan(i * m, m);
  }
  std::size_t valid_count(std::size_t i) const;
};

ImageTensor assemble_image_tensor(const WordImageDictionary& dict, const ImageFeatureStore& store,
                                  std::span<const std::string> tokens, std::size_t m);

}  // namespace lvg
