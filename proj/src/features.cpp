#include "lvg/features.hpp"

#include "lvg/binary_io.hpp"
#include "lvg/errors.hpp"

#include <cmath>
#include <limits>

namespace lvg {

namespace {
constexpr std::string_view kMagic = "LVF1";
}

void ImageFeatureStore::add(std::string image_id, std::vector<float> vector) {
  if (vector.size() != dim_) {
    throw DimensionError("image " + image_id + ": expected " + std::to_string(dim_) +
                         " components, got " + std::to_string(vector.size()));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) throw PreconditionError("image " + image_id + ": non-finite component");
  }
  if (vectors_.contains(image_id)) throw PreconditionError("duplicate image id " + image_id);
  vectors_.emplace(image_id, std::move(vector));
  ids_.push_back(std::move(image_id));
}

const std::vector<float>* ImageFeatureStore::find(std::string_view image_id) const {
  auto it = vectors_.find(std::string(image_id));
  return it == vectors_.end() ? nullptr : &it->second;
}

std::string encode_feature_store(const ImageFeatureStore& store) {
  std::string out(kMagic);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  binary::put<std::uint32_t>(out, store.dim());
  for (const auto& id : store.ids()) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max())
      throw PreconditionError("image id too long: " + id.substr(0, 32) + "...");
    binary::put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (float v : *store.find(id)) binary::put<float>(out, v);
  }
  return out;
}

ImageFeatureStore decode_feature_store(std::string_view bytes, const std::string& context) {
  binary::Reader in(bytes, context);
  if (in.bytes(4, "magic") != kMagic) in.fail("bad magic, expected LVF1");
  const auto count = in.get<std::uint32_t>("record count");
  const auto dim = in.get<std::uint32_t>("dim");

  ImageFeatureStore store(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string rec = "record " + std::to_string(r);
    const auto len = in.get<std::uint16_t>(rec + " id length");
    std::string id = in.bytes(len, rec + " id");
    std::vector<float> v(dim);
    for (auto& x : v) x = in.get<float>(rec + " (" + id + ") values");
    for (float x : v) {
      if (!std::isfinite(x)) in.fail(rec + " (" + id + "): non-finite value");
    }
    if (store.find(id) != nullptr) in.fail(rec + ": duplicate image id " + id);
    store.add(std::move(id), std::move(v));
  }
  if (in.remaining() != 0) {
    in.fail("file length does not match header: " + std::to_string(in.remaining()) +
            " trailing bytes");
  }
  return store;
}

void save_feature_store(const ImageFeatureStore& store, const std::filesystem::path& path) {
  write_file(path, encode_feature_store(store));
}

ImageFeatureStore load_feature_store(const std::filesystem::path& path) {
  return decode_feature_store(read_file(path), path.string());
}

std::vector<float> pool(std::span<const float> grid, std::size_t rows) {
  if (rows == 0) throw PreconditionError("pool: grid has no rows");
  if (grid.size() % rows != 0) throw DimensionError("pool: grid size not divisible by row count");
  const std::size_t dim = grid.size() / rows;
  std::vector<double> acc(dim, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < dim; ++c) acc[c] += grid[r * dim + c];
  std::vector<float> out(dim);
  for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(acc[c] / static_cast<double>(rows));
  return out;
}

std::size_t ImageTensor::valid_count(std::size_t i) const {
  std::size_t k = 0;
  for (std::size_t j = 0; j < m; ++j) k += mask[i * m + j] ? 1 : 0;
  return k;
}

ImageTensor assemble_image_tensor(const WordImageDictionary& dict, const ImageFeatureStore& store,
                                  std::span<const std::string> tokens, std::size_t m) {
  if (m == 0) throw PreconditionError("assemble_image_tensor: m must be >= 1");
  ImageTensor t(tokens.size(), m, store.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto ids = dict.lookup(tokens[i], m);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const auto* v = store.find(ids[j]);
      if (v == nullptr) {
        throw LookupError("token '" + tokens[i] + "': image " + ids[j] +
                          " missing from feature store");
      }
      auto slot = t.slot(i, j);
      std::copy(v->begin(), v->end(), slot.begin());
      t.mask[i * m + j] = 1;
    }
  }
  return t;
}

}  // namespace lvg
