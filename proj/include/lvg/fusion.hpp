#pragma once

#include "lvg/features.hpp"
#include "lvg/layers.hpp"
#include "lvg/tensor.hpp"

#include <cstdint>
#include <vector>

namespace lvg {

// Visual-guidance fusion: project each retrieved image to text width, let
// the token attend over its own images, then mix the attended image vector
// into the token with a scalar sigmoid gate.
struct FusionParameters {
  Linear proj;           // d_img -> d_model
  Parameter gate_weight; // 2 * d_model, applied to concat(h_i, hbar_i)
  Parameter gate_bias;   // scalar

  FusionParameters() = default;
  // Projection weights U(-1/sqrt(d_model), 1/sqrt(d_model)); gate bias -2
  // so the gate starts near the text-only path (lambda ~ 0.12).
  FusionParameters(std::size_t d_img, std::size_t d_model, std::uint64_t init_seed);

  std::size_t d_img() const { return proj.weight.value.rows(); }
  std::size_t d_model() const { return proj.weight.value.cols(); }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  static constexpr double kInitialGateBias = -2.0;
};

// Projected image features, (n*m) x d_model; row i*m + j is token i, slot j.
// Masked slots are exactly zero (no bias).
Tensor project(const ImageTensor& images, const FusionParameters& params);

struct Attended {
  Tensor hbar;                      // n x d_model
  Tensor weights;                   // n x m, zero on masked slots
  std::vector<std::uint8_t> no_image;  // 1 where the token has no valid slot
};

Attended attend(const Tensor& h, const Tensor& projected, std::span<const std::uint8_t> mask,
                std::size_t m);

struct Gated {
  Tensor fused;                 // n x d_model
  std::vector<double> lambda;   // per token; exactly 0 where no_image is set
};

Gated gate_fuse(const Tensor& h, const Tensor& hbar, const FusionParameters& params,
                std::span<const std::uint8_t> no_image);

struct FusionCache {
  Tensor h;
  Tensor images;  // (n*m) x d_img
  std::vector<std::uint8_t> mask;
  std::size_t m = 0;
  Tensor projected;
  Attended attended;
  std::vector<double> lambda;
};

struct FusionGradients {
  Tensor dh;       // n x d_model
  Tensor dimages;  // (n*m) x d_img, zero on masked slots
};

Tensor fusion_forward(const Tensor& h, const ImageTensor& images, const FusionParameters& params,
                      FusionCache* cache = nullptr);
// Accumulates parameter gradients into params and returns input gradients.
FusionGradients fusion_backward(const FusionCache& cache, const Tensor& dfused,
                                FusionParameters& params);

}  // namespace lvg
