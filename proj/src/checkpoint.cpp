#include "lvg/checkpoint.hpp"

#include "lvg/binary_io.hpp"
#include "lvg/corpus.hpp"
#include "lvg/errors.hpp"

#include <cmath>

namespace lvg {

namespace {

constexpr std::string_view kMagic = "LVM1";

void put_tensor(std::string& out, const Tensor& t) {
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto dim : t.shape()) binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  for (double v : t.values()) binary::put<double>(out, v);
}

void read_into(binary::Reader& in, Parameter& p) {
  const auto rank = in.get<std::uint32_t>(p.name + " rank");
  std::vector<std::size_t> shape;
  for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.get<std::uint32_t>(p.name + " dims"));
  if (shape != p.value.shape()) in.fail("tensor " + p.name + " has unexpected shape");
  for (double& v : p.value.values()) {
    v = in.get<double>(p.name + " values");
    if (!std::isfinite(v)) in.fail("tensor " + p.name + " holds a non-finite value");
  }
}

}  // namespace

std::string encode_checkpoint(const Seq2SeqModel& model, const FusionParameters* fusion) {
  const auto& c = model.config();
  std::string out(kMagic);
  for (std::uint32_t v : {c.d_model, c.n_layers_enc, c.n_layers_dec, c.n_heads, c.d_ff, c.vocab_src,
                          c.vocab_tgt, c.max_len}) {
    binary::put<std::uint32_t>(out, v);
  }
  binary::put<double>(out, c.dropout);
  binary::put<std::uint32_t>(out, fusion ? 1u : 0u);
  binary::put<std::uint32_t>(out, fusion ? static_cast<std::uint32_t>(fusion->d_img()) : 0u);

  auto params = model.parameters();
  std::vector<const Parameter*> all(params.begin(), params.end());
  if (fusion) {
    for (const Parameter* p : fusion->parameters()) all.push_back(p);
  }
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const Parameter* p : all) put_tensor(out, p->value);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& context) {
  binary::Reader in(bytes, context);
  if (in.bytes(4, "magic") != kMagic) in.fail("bad magic, expected LVM1");
  ModelConfig cfg;
  cfg.d_model = in.get<std::uint32_t>("d_model");
  cfg.n_layers_enc = in.get<std::uint32_t>("n_layers_enc");
  cfg.n_layers_dec = in.get<std::uint32_t>("n_layers_dec");
  cfg.n_heads = in.get<std::uint32_t>("n_heads");
  cfg.d_ff = in.get<std::uint32_t>("d_ff");
  cfg.vocab_src = in.get<std::uint32_t>("vocab_src");
  cfg.vocab_tgt = in.get<std::uint32_t>("vocab_tgt");
  cfg.max_len = in.get<std::uint32_t>("max_len");
  cfg.dropout = in.get<double>("dropout");
  const auto has_fusion = in.get<std::uint32_t>("fusion flag");
  const auto d_img = in.get<std::uint32_t>("d_img");
  const auto count = in.get<std::uint32_t>("tensor count");
  try {
    cfg.validate();
  } catch (const PreconditionError& e) {
    in.fail(e.what());
  }
  if (has_fusion > 1 || (has_fusion == 1 && d_img == 0)) in.fail("invalid fusion header");

  Checkpoint ck{Seq2SeqModel(cfg, 0), std::nullopt};
  if (has_fusion) ck.fusion.emplace(d_img, cfg.d_model, 0);

  auto params = ck.model.parameters();
  std::vector<Parameter*> all(params.begin(), params.end());
  if (ck.fusion) {
    for (Parameter* p : ck.fusion->parameters()) all.push_back(p);
  }
  if (count != all.size()) {
    in.fail("expected " + std::to_string(all.size()) + " tensors, header says " + std::to_string(count));
  }
  for (Parameter* p : all) read_into(in, *p);
  if (in.remaining() != 0) in.fail("trailing bytes after last tensor");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model,
                     const FusionParameters* fusion) {
  write_file(path, encode_checkpoint(model, fusion));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace lvg
