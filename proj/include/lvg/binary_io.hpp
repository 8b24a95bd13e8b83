#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "lvg/errors.hpp"

namespace lvg::binary {

// Little-endian encoding helpers shared by the feature and checkpoint files.

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
}

class Reader {
public:
  Reader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  template <typename T>
  T get(std::string_view what) {
    need(sizeof(T), what);
    std::array<unsigned char, sizeof(T)> bits;
    std::memcpy(bits.data(), data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string bytes(std::size_t n, std::string_view what) {
    need(n, what);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  [[noreturn]] void fail(std::string_view what) const {
    throw FormatError(context_ + ": " + std::string(what));
  }

private:
  void need(std::size_t n, std::string_view what) const {
    if (data_.size() - pos_ < n)
      fail("truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
  }

  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace lvg::binary
