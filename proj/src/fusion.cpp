#include "lvg/fusion.hpp"

#include "lvg/errors.hpp"
#include "lvg/kernels.hpp"

#include <cmath>

namespace lvg {

namespace {

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

Tensor image_matrix(const ImageTensor& images) {
  Tensor x(images.n * images.m, images.dim);
  std::copy(images.values.begin(), images.values.end(), x.data());
  return x;
}

void check_text(const Tensor& h, std::size_t d_model, std::size_t n) {
  if (h.rows() != n || h.cols() != d_model) {
    throw DimensionError("text representation is " + std::to_string(h.rows()) + "x" +
                         std::to_string(h.cols()) + ", expected " + std::to_string(n) + "x" +
                         std::to_string(d_model));
  }
}

Tensor project_matrix(const Tensor& x, std::span<const std::uint8_t> mask, const FusionParameters& params) {
  Tensor out = params.proj.forward(x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    if (!mask[r]) std::fill(out.row(r).begin(), out.row(r).end(), 0.0);
  }
  return out;
}

}  // namespace

FusionParameters::FusionParameters(std::size_t d_img, std::size_t d_model, std::uint64_t init_seed)
    : proj("fusion.proj", d_img, d_model),
      gate_weight("fusion.gate.weight", Tensor::vector(2 * d_model)),
      gate_bias("fusion.gate.bias", Tensor::vector(1, kInitialGateBias)) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
  init_uniform(proj.weight.value, scale, init_seed, 0xF0);
  init_uniform(gate_weight.value, scale, init_seed, 0xF1);
}

std::vector<Parameter*> FusionParameters::parameters() {
  return {&proj.weight, &proj.bias, &gate_weight, &gate_bias};
}

std::vector<const Parameter*> FusionParameters::parameters() const {
  return {&proj.weight, &proj.bias, &gate_weight, &gate_bias};
}

void FusionParameters::zero_grad() {
  for (Parameter* p : parameters()) p->grad.zero();
}

Tensor project(const ImageTensor& images, const FusionParameters& params) {
  if (images.dim != params.d_img()) {
    throw DimensionError("image features have width " + std::to_string(images.dim) +
                         ", projection expects " + std::to_string(params.d_img()));
  }
  return project_matrix(image_matrix(images), images.mask, params);
}

Attended attend(const Tensor& h, const Tensor& projected, std::span<const std::uint8_t> mask,
                std::size_t m) {
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();
  if (projected.rows() != n * m || projected.cols() != d || mask.size() != n * m) {
    throw DimensionError("attend: projected images do not match the text representation");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Attended out{Tensor(n, d), Tensor(n, m), std::vector<std::uint8_t>(n, 0)};
  std::vector<double> scores(m);
  for (std::size_t i = 0; i < n; ++i) {
    auto hi = h.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      auto key = projected.row(i * m + j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += hi[c] * key[c];
      scores[j] = s * scale;
    }
    if (!kernels::masked_softmax(scores, mask.subspan(i * m, m))) {
      out.no_image[i] = 1;
      continue;
    }
    auto hb = out.hbar.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      out.weights(i, j) = scores[j];
      if (scores[j] == 0.0) continue;
      auto value = projected.row(i * m + j);
      for (std::size_t c = 0; c < d; ++c) hb[c] += scores[j] * value[c];
    }
  }
  return out;
}

Gated gate_fuse(const Tensor& h, const Tensor& hbar, const FusionParameters& params,
                std::span<const std::uint8_t> no_image) {
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();
  if (!h.same_shape(hbar) || no_image.size() != n || params.gate_weight.value.size() != 2 * d) {
    throw DimensionError("gate_fuse: inconsistent shapes");
  }
  Gated out{Tensor(n, d), std::vector<double>(n, 0.0)};
  const auto& g = params.gate_weight.value;
  for (std::size_t i = 0; i < n; ++i) {
    auto hi = h.row(i);
    auto fi = out.fused.row(i);
    if (no_image[i]) {
      std::copy(hi.begin(), hi.end(), fi.begin());
      continue;
    }
    auto hb = hbar.row(i);
    double z = params.gate_bias.value[0];
    for (std::size_t c = 0; c < d; ++c) z += g[c] * hi[c] + g[d + c] * hb[c];
    const double lambda = sigmoid(z);
    out.lambda[i] = lambda;
    for (std::size_t c = 0; c < d; ++c) fi[c] = (1.0 - lambda) * hi[c] + lambda * hb[c];
  }
  return out;
}

Tensor fusion_forward(const Tensor& h, const ImageTensor& images, const FusionParameters& params,
                      FusionCache* cache) {
  check_text(h, params.d_model(), images.n);
  if (images.dim != params.d_img()) {
    throw DimensionError("image features have width " + std::to_string(images.dim) +
                         ", projection expects " + std::to_string(params.d_img()));
  }
  FusionCache local;
  FusionCache& c = cache ? *cache : local;
  c.h = h;
  c.images = image_matrix(images);
  c.mask = images.mask;
  c.m = images.m;
  c.projected = project_matrix(c.images, c.mask, params);
  c.attended = attend(h, c.projected, c.mask, c.m);
  Gated gated = gate_fuse(h, c.attended.hbar, params, c.attended.no_image);
  c.lambda = std::move(gated.lambda);
  return std::move(gated.fused);
}

FusionGradients fusion_backward(const FusionCache& c, const Tensor& dfused, FusionParameters& params) {
  const std::size_t n = c.h.rows();
  const std::size_t d = c.h.cols();
  const std::size_t m = c.m;
  check_text(dfused, d, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const auto& g = params.gate_weight.value;

  FusionGradients out{Tensor(n, d), Tensor(n * m, c.images.cols())};
  Tensor dprojected(n * m, d);
  std::vector<double> dhb(d);
  std::vector<double> dw(m);

  for (std::size_t i = 0; i < n; ++i) {
    auto df = dfused.row(i);
    auto dh = out.dh.row(i);
    if (c.attended.no_image[i]) {
      std::copy(df.begin(), df.end(), dh.begin());
      continue;
    }
    auto hi = c.h.row(i);
    auto hb = c.attended.hbar.row(i);
    const double lambda = c.lambda[i];

    // Gate.
    double dlambda = 0.0;
    for (std::size_t k = 0; k < d; ++k) dlambda += df[k] * (hb[k] - hi[k]);
    const double dz = dlambda * lambda * (1.0 - lambda);
    for (std::size_t k = 0; k < d; ++k) {
      dh[k] = (1.0 - lambda) * df[k] + dz * g[k];
      dhb[k] = lambda * df[k] + dz * g[d + k];
      params.gate_weight.grad[k] += dz * hi[k];
      params.gate_weight.grad[d + k] += dz * hb[k];
    }
    params.gate_bias.grad[0] += dz;

    // Attention over this token's slots.
    double wdw = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dw[j] = 0.0;
      if (!c.mask[i * m + j]) continue;
      auto v = c.projected.row(i * m + j);
      for (std::size_t k = 0; k < d; ++k) dw[j] += dhb[k] * v[k];
      wdw += c.attended.weights(i, j) * dw[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (!c.mask[i * m + j]) continue;
      const double w = c.attended.weights(i, j);
      const double ds = w * (dw[j] - wdw) * scale;
      auto v = c.projected.row(i * m + j);
      auto dv = dprojected.row(i * m + j);
      for (std::size_t k = 0; k < d; ++k) {
        dv[k] = w * dhb[k] + ds * hi[k];
        dh[k] += ds * v[k];
      }
    }
  }

  // Projection: masked rows of dprojected are zero, so they add nothing.
  out.dimages = params.proj.backward(c.images, dprojected);
  return out;
}

}  // namespace lvg
