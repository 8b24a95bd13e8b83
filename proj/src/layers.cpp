#include "lvg/layers.hpp"

#include "lvg/kernels.hpp"
#include "lvg/rng.hpp"

#include <cassert>
#include <cmath>

namespace lvg {

void init_uniform(Tensor& t, double scale, std::uint64_t seed, std::uint64_t stream) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * uniform01({seed, stream, i}) - 1.0) * scale;
}

Tensor dropout_forward(Tensor& x, const DropoutContext& ctx, std::uint64_t site) {
  if (!ctx.active()) return {};
  Tensor mask(x.shape());
  const double keep = 1.0 / (1.0 - ctx.rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = uniform01({ctx.seed, site, i}) < ctx.rate ? 0.0 : keep;
    x[i] *= mask[i];
  }
  return mask;
}

void dropout_backward(Tensor& grad, const Tensor& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
}

void add_inplace(Tensor& a, const Tensor& b) {
  assert(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : weight(name + ".weight", Tensor(in, out)), bias(name + ".bias", Tensor::vector(out)) {}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y;
  kernels::matmul(x, weight.value, y);
  kernels::add_row_bias(y, bias.value.values());
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy) {
  kernels::matmul_tn(x, dy, weight.grad, /*accumulate=*/true);
  kernels::sum_rows(dy, bias.grad.values());
  Tensor dx;
  kernels::matmul_nt(dy, weight.value, dx);
  return dx;
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::string name, std::size_t dim)
    : gain(name + ".gain", Tensor::vector(dim, 1.0)), bias(name + ".bias", Tensor::vector(dim)) {}

Tensor LayerNorm::forward(const Tensor& x, Cache& cache) const {
  const std::size_t rows = x.rows();
  const std::size_t d = x.cols();
  cache.normalized = Tensor(rows, d);
  cache.inv_std.assign(rows, 0.0);
  Tensor y(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kEps);
    cache.inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double nv = (xr[c] - mean) * inv;
      cache.normalized(r, c) = nv;
      y(r, c) = nv * gain.value[c] + bias.value[c];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Cache& cache, const Tensor& dy) {
  const std::size_t rows = dy.rows();
  const std::size_t d = dy.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor dx(rows, d);
  std::vector<double> dn(d);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum_dn = 0.0;
    double sum_dn_n = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double n = cache.normalized(r, c);
      gain.grad[c] += dy(r, c) * n;
      bias.grad[c] += dy(r, c);
      dn[c] = dy(r, c) * gain.value[c];
      sum_dn += dn[c];
      sum_dn_n += dn[c] * n;
    }
    for (std::size_t c = 0; c < d; ++c) {
      dx(r, c) = cache.inv_std[r] * (dn[c] - inv_d * sum_dn - cache.normalized(r, c) * inv_d * sum_dn_n);
    }
  }
  return dx;
}

// ---------------------------------------------------- MultiHeadAttention

namespace {

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t width) {
  Tensor out(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = x(r, head * width + c);
  return out;
}

void head_store(Tensor& x, const Tensor& part, std::size_t head, std::size_t width) {
  for (std::size_t r = 0; r < part.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) x(r, head * width + c) = part(r, c);
}

}  // namespace

MultiHeadAttention::MultiHeadAttention(std::string name, std::size_t d_model, std::size_t n_heads)
    : wq(name + ".q", d_model, d_model),
      wk(name + ".k", d_model, d_model),
      wv(name + ".v", d_model, d_model),
      wo(name + ".o", d_model, d_model),
      d_model_(d_model),
      n_heads_(n_heads) {
  assert(n_heads > 0 && d_model % n_heads == 0);
}

Tensor MultiHeadAttention::forward(const Tensor& query_in, const Tensor& kv_in, bool causal,
                                   Cache& cache) const {
  const std::size_t width = d_model_ / n_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  cache.query_in = query_in;
  cache.kv_in = kv_in;
  cache.q = wq.forward(query_in);
  cache.k = wk.forward(kv_in);
  cache.v = wv.forward(kv_in);
  cache.probs.assign(n_heads_, Tensor{});
  cache.context = Tensor(query_in.rows(), d_model_);

  for (std::size_t h = 0; h < n_heads_; ++h) {
    Tensor qh = head_slice(cache.q, h, width);
    Tensor kh = head_slice(cache.k, h, width);
    Tensor vh = head_slice(cache.v, h, width);
    Tensor scores;
    kernels::matmul_nt(qh, kh, scores);
    for (double& s : scores.values()) s *= scale;
    if (causal) {
      kernels::softmax_rows_causal(scores);
    } else {
      kernels::softmax_rows(scores);
    }
    Tensor ctx;
    kernels::matmul(scores, vh, ctx);
    head_store(cache.context, ctx, h, width);
    cache.probs[h] = std::move(scores);
  }
  return wo.forward(cache.context);
}

std::pair<Tensor, Tensor> MultiHeadAttention::backward(const Cache& cache, const Tensor& dy) {
  const std::size_t width = d_model_ / n_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(width));
  Tensor dcontext = wo.backward(cache.context, dy);

  Tensor dq(cache.q.rows(), d_model_);
  Tensor dk(cache.k.rows(), d_model_);
  Tensor dv(cache.v.rows(), d_model_);
  for (std::size_t h = 0; h < n_heads_; ++h) {
    const Tensor& p = cache.probs[h];
    Tensor qh = head_slice(cache.q, h, width);
    Tensor kh = head_slice(cache.k, h, width);
    Tensor vh = head_slice(cache.v, h, width);
    Tensor dctx = head_slice(dcontext, h, width);

    Tensor dp;
    kernels::matmul_nt(dctx, vh, dp);
    Tensor dvh;
    kernels::matmul_tn(p, dctx, dvh);

    // Softmax backward: ds = p * (dp - sum(dp * p)).
    Tensor ds(p.rows(), p.cols());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) dot += dp(r, c) * p(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) ds(r, c) = p(r, c) * (dp(r, c) - dot) * scale;
    }
    Tensor dqh;
    kernels::matmul(ds, kh, dqh);
    Tensor dkh;
    kernels::matmul_tn(ds, qh, dkh);

    head_store(dq, dqh, h, width);
    head_store(dk, dkh, h, width);
    head_store(dv, dvh, h, width);
  }

  Tensor dquery = wq.backward(cache.query_in, dq);
  Tensor dkv = wk.backward(cache.kv_in, dk);
  add_inplace(dkv, wv.backward(cache.kv_in, dv));
  return {std::move(dquery), std::move(dkv)};
}

// ----------------------------------------------------------- FeedForward

FeedForward::FeedForward(std::string name, std::size_t d_model, std::size_t d_ff)
    : in(name + ".in", d_model, d_ff), out(name + ".out", d_ff, d_model) {}

Tensor FeedForward::forward(const Tensor& x, Cache& cache) const {
  cache.x = x;
  cache.hidden = in.forward(x);
  for (double& v : cache.hidden.values()) v = v > 0.0 ? v : 0.0;
  return out.forward(cache.hidden);
}

Tensor FeedForward::backward(const Cache& cache, const Tensor& dy) {
  Tensor dh = out.backward(cache.hidden, dy);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (cache.hidden[i] <= 0.0) dh[i] = 0.0;
  }
  return in.backward(cache.x, dh);
}

}  // namespace lvg
