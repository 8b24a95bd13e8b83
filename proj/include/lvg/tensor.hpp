#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

namespace lvg {

// Dense row-major tensor of doubles. Rank 1 tensors behave as a single row
// when viewed through rows()/cols().
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : Tensor(std::vector<std::size_t>{rows, cols}, fill) {}

  static Tensor vector(std::size_t n, double fill = 0.0) {
    return Tensor(std::vector<std::size_t>{n}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    Tensor t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      assert(row.size() == c);
      std::copy(row.begin(), row.end(), t.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return t;
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept {
    if (shape_.empty()) return 0;
    if (shape_.size() == 1) return 1;
    return shape_[0];
  }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) noexcept {
    return std::span<double>(data_).subspan(r * cols(), cols());
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace lvg
