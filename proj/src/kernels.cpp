#include "lvg/kernels.hpp"

#include "lvg/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lvg::kernels {

namespace {

// Each row kernel computes one output row with a fixed reduction order.

inline void matmul_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i,
                       bool accumulate) {
  const std::size_t k = a.cols();
  const std::size_t m = b.cols();
  double* o = out.data() + i * m;
  if (!accumulate) std::fill(o, o + m, 0.0);
  const double* ar = a.data() + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = ar[p];
    const double* br = b.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
  }
}

inline void matmul_nt_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i,
                          bool accumulate) {
  const std::size_t k = a.cols();
  const std::size_t m = b.rows();
  const double* ar = a.data() + i * k;
  double* o = out.data() + i * m;
  for (std::size_t j = 0; j < m; ++j) {
    const double* br = b.data() + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
    o[j] = accumulate ? o[j] + s : s;
  }
}

inline void matmul_tn_row(const Tensor& a, const Tensor& b, Tensor& out, std::size_t i,
                          bool accumulate) {
  const std::size_t k = a.rows();
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  double* o = out.data() + i * m;
  if (!accumulate) std::fill(o, o + m, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a.data()[p * n + i];
    const double* br = b.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
  }
}

inline void softmax_row(double* x, std::size_t len, std::size_t allowed) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < allowed; ++j) mx = std::max(mx, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < allowed; ++j) {
    x[j] = std::exp(x[j] - mx);
    total += x[j];
  }
  for (std::size_t j = 0; j < allowed; ++j) x[j] /= total;
  for (std::size_t j = allowed; j < len; ++j) x[j] = 0.0;
}

void check_inner(const char* op, std::size_t left, std::size_t right) {
  if (left != right)
    throw DimensionError(std::string(op) + ": inner dimensions " + std::to_string(left) + " and " +
                         std::to_string(right) + " differ");
}

void ensure_shape(Tensor& out, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (out.rank() != 2 || out.rows() != rows || out.cols() != cols)
      throw DimensionError("accumulating into an output of the wrong shape");
    return;
  }
  if (out.rank() != 2 || out.rows() != rows || out.cols() != cols) out = Tensor(rows, cols);
}

template <typename RowFn>
void for_rows(std::size_t rows, std::size_t work, RowFn&& fn) {
  const auto n = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold && rows > 1)
  for (long long i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  check_inner("matmul", a.cols(), b.rows());
  ensure_shape(out, a.rows(), b.cols(), accumulate);
  for_rows(a.rows(), a.rows() * a.cols() * b.cols(),
           [&](std::size_t i) { matmul_row(a, b, out, i, accumulate); });
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  check_inner("matmul_nt", a.cols(), b.cols());
  ensure_shape(out, a.rows(), b.rows(), accumulate);
  for_rows(a.rows(), a.rows() * a.cols() * b.rows(),
           [&](std::size_t i) { matmul_nt_row(a, b, out, i, accumulate); });
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  check_inner("matmul_tn", a.rows(), b.rows());
  ensure_shape(out, a.cols(), b.cols(), accumulate);
  for_rows(a.cols(), a.rows() * a.cols() * b.cols(),
           [&](std::size_t i) { matmul_tn_row(a, b, out, i, accumulate); });
}

void add_row_bias(Tensor& x, std::span<const double> bias) {
  assert(bias.size() == x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void sum_rows(const Tensor& x, std::span<double> out) {
  assert(out.size() == x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
}

void softmax_rows(Tensor& x) {
  const std::size_t cols = x.cols();
  for_rows(x.rows(), x.size() * 8,
           [&](std::size_t r) { softmax_row(x.data() + r * cols, cols, cols); });
}

void softmax_rows_causal(Tensor& x) {
  const std::size_t cols = x.cols();
  for_rows(x.rows(), x.size() * 8, [&](std::size_t r) {
    softmax_row(x.data() + r * cols, cols, std::min(cols, r + 1));
  });
}

bool masked_softmax(std::span<double> x, std::span<const std::uint8_t> mask) {
  assert(x.size() == mask.size());
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (mask[j]) {
      mx = std::max(mx, x[j]);
      any = true;
    }
  }
  if (!any) {
    std::fill(x.begin(), x.end(), 0.0);
    return false;
  }
  double total = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = mask[j] ? std::exp(x[j] - mx) : 0.0;
    total += x[j];
  }
  for (double& v : x) v /= total;
  return true;
}

namespace serial {

// Plain triple loops, independent of the row kernels above.

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  check_inner("matmul", a.cols(), b.rows());
  ensure_shape(out, a.rows(), b.cols(), accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = accumulate ? out(i, j) + s : s;
    }
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  check_inner("matmul_nt", a.cols(), b.cols());
  ensure_shape(out, a.rows(), b.rows(), accumulate);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      out(i, j) = accumulate ? out(i, j) + s : s;
    }
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  check_inner("matmul_tn", a.rows(), b.rows());
  ensure_shape(out, a.cols(), b.cols(), accumulate);
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      out(i, j) = accumulate ? out(i, j) + s : s;
    }
}

void softmax_rows(Tensor& x) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = x(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) total += std::exp(x(r, c) - mx);
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) = std::exp(x(r, c) - mx) / total;
  }
}

}  // namespace serial

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace lvg::kernels
