#pragma once

#include "lvg/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lvg {

// A trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}
};

// Uniform in [-scale, scale], a pure function of (seed, stream, element).
void init_uniform(Tensor& t, double scale, std::uint64_t seed, std::uint64_t stream);

// Dropout state for one forward pass. Masks are derived from
// (seed, site, element) so a pass is reproducible from its seed alone.
struct DropoutContext {
  bool train = false;
  double rate = 0.0;
  std::uint64_t seed = 0;

  bool active() const noexcept { return train && rate > 0.0; }
};

// Inverted dropout. The returned mask holds the per-element multiplier
// (0 or 1/(1-rate)); empty when dropout is inactive.
Tensor dropout_forward(Tensor& x, const DropoutContext& ctx, std::uint64_t site);
void dropout_backward(Tensor& grad, const Tensor& mask);

class Linear {
public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out);

  Tensor forward(const Tensor& x) const;
  // Accumulates weight/bias gradients; returns d(loss)/dx.
  Tensor backward(const Tensor& x, const Tensor& dy);

  Parameter weight;  // in x out
  Parameter bias;    // out
};

class LayerNorm {
public:
  struct Cache {
    Tensor normalized;
    std::vector<double> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t dim);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);

  Parameter gain;
  Parameter bias;
  static constexpr double kEps = 1e-5;
};

class MultiHeadAttention {
public:
  struct Cache {
    Tensor query_in;
    Tensor kv_in;
    Tensor q, k, v;
    std::vector<Tensor> probs;  // per head, rows = queries
    Tensor context;             // concatenated heads before the output projection
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, std::size_t d_model, std::size_t n_heads);

  Tensor forward(const Tensor& query_in, const Tensor& kv_in, bool causal, Cache& cache) const;
  // Returns (d query_in, d kv_in).
  std::pair<Tensor, Tensor> backward(const Cache& cache, const Tensor& dy);

  std::size_t heads() const noexcept { return n_heads_; }

  Linear wq, wk, wv, wo;

private:
  std::size_t d_model_ = 0;
  std::size_t n_heads_ = 1;
};

class FeedForward {
public:
  struct Cache {
    Tensor x;
    Tensor hidden;  // post-ReLU
  };

  FeedForward() = default;
  FeedForward(std::string name, std::size_t d_model, std::size_t d_ff);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Cache& cache, const Tensor& dy);

  Linear in, out;
};

// Elementwise helpers.
void add_inplace(Tensor& a, const Tensor& b);

}  // namespace lvg
