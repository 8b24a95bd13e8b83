#pragma once

#include "lvg/tensor.hpp"

#include <cstdint>
#include <span>

namespace lvg::kernels {

// Dense kernels used by every forward and backward pass. The default
// versions split output rows across OpenMP threads once the work is large
// enough to amortize the fork. Each output element is reduced in a fixed
// order, so results do not depend on the thread count. The serial:: versions
// are naive loops kept as a reference for tests and benchmarks.
//
// Operands are 2-D tensors (rank-1 tensors count as a single row).
// Accumulating variants add into `out` instead of overwriting it.

// out = a * b              a: n x k, b: k x m
void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
// out = a * b^T            a: n x k, b: m x k
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
// out = a^T * b            a: k x n, b: k x m
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);

// Adds `bias` (length cols) to every row of `x`.
void add_row_bias(Tensor& x, std::span<const double> bias);
// out[c] += sum_r x(r, c)
void sum_rows(const Tensor& x, std::span<double> out);

// Row-wise softmax in place. The causal variant gives exactly zero weight
// to every column c > r.
void softmax_rows(Tensor& x);
void softmax_rows_causal(Tensor& x);

// Softmax over `x` restricted to slots where `mask` is true; excluded slots
// get exactly 0. Returns false (and zeros `x`) when no slot is allowed.
bool masked_softmax(std::span<double> x, std::span<const std::uint8_t> mask);

// Minimum number of multiply-adds before a kernel goes parallel.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

namespace serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false);
void softmax_rows(Tensor& x);

}  // namespace serial

// Threads OpenMP will use for the parallel kernels (1 when built without it).
int max_threads();

}  // namespace lvg::kernels
