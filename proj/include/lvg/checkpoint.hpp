#pragma once

#include "lvg/fusion.hpp"
#include "lvg/model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace lvg {

// Binary checkpoint, little-endian:
//
//   "LVM1"
//   u32 d_model, n_layers_enc, n_layers_dec, n_heads, d_ff, vocab_src, vocab_tgt, max_len
//   f64 dropout
//   u32 has_fusion, u32 d_img (0 without fusion)
//   u32 tensor_count
//   tensor_count x (u32 rank | rank x u32 dim | f64 values, row-major)
//
// Tensors follow Seq2SeqModel::parameters() order; the four fusion tensors
// (projection weight, projection bias, gate weight, gate bias) come last.
struct Checkpoint {
  Seq2SeqModel model;
  std::optional<FusionParameters> fusion;
};

std::string encode_checkpoint(const Seq2SeqModel& model, const FusionParameters* fusion);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& context = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model,
                     const FusionParameters* fusion);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lvg
