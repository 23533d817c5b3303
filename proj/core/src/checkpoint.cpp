#include "pfi/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "pfi/errors.hpp"

namespace pfi {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is, const std::string& path) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw FileError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const TransformerLM& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kFormatVersion);
  const ModelConfig& c = model.config();
  for (int field : {c.vocab_size, c.d_model, c.n_heads, c.d_ff, c.n_encoder_layers,
                    c.n_decoder_layers, c.max_seq_len, c.n_sentinels})
    write_u32(os, static_cast<uint32_t>(field));
  write_u32(os, static_cast<uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
  }
  if (!os) throw FileError("write failed: " + path);
}

TransformerLM load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FileError("not a PFCK checkpoint: " + path);
  const uint32_t version = read_u32(is, path);
  if (version != kFormatVersion)
    throw FileError("unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  c.vocab_size = static_cast<int>(read_u32(is, path));
  c.d_model = static_cast<int>(read_u32(is, path));
  c.n_heads = static_cast<int>(read_u32(is, path));
  c.d_ff = static_cast<int>(read_u32(is, path));
  c.n_encoder_layers = static_cast<int>(read_u32(is, path));
  c.n_decoder_layers = static_cast<int>(read_u32(is, path));
  c.max_seq_len = static_cast<int>(read_u32(is, path));
  c.n_sentinels = static_cast<int>(read_u32(is, path));
  c.validate();

  // Build a skeleton with the right parameter set, then overwrite values.
  Rng rng(0);
  TransformerLM model = TransformerLM::init(c, rng);

  const uint32_t n_blocks = read_u32(is, path);
  if (n_blocks != model.params().size())
    throw FileError("checkpoint parameter count does not match config: " + path);
  for (uint32_t b = 0; b < n_blocks; ++b) {
    const uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = read_u32(is, path);
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(read_u32(is, path));
      numel *= shape[i];
    }
    Tensor& t = model.param(name);
    if (t.shape() != shape)
      throw FileError("checkpoint block '" + name + "' has unexpected shape");
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(numel)));
    if (!is) throw FileError("truncated checkpoint: " + path);
  }
  return model;
}

}  // namespace pfi
