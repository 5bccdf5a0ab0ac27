#include "minimt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace minimt {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

struct Reader {
  const std::string& data;
  const std::string& path;
  std::size_t pos = 0;

  void need(std::size_t n) {
    if (pos + n > data.size()) throw ConfigError(path + ": truncated checkpoint file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

void write_params(std::string& out, ModelParams<float>& params) {
  auto tensors = named_tensors(params);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.tensor->rows()));
    put_u32(out, static_cast<std::uint32_t>(t.tensor->cols()));
    for (Eigen::Index r = 0; r < t.tensor->rows(); ++r) {
      for (Eigen::Index c = 0; c < t.tensor->cols(); ++c) put_f32(out, (*t.tensor)(r, c));
    }
  }
}

void read_params(Reader& in, const ModelConfig& cfg, ModelParams<float>& params) {
  params = zeros_like_config<float>(cfg);
  auto tensors = named_tensors(params);
  const std::uint32_t n = in.u32();
  if (n != tensors.size()) {
    throw ConfigError(in.path + ": tensor count " + std::to_string(n) + " does not match config (" +
                      std::to_string(tensors.size()) + ")");
  }
  for (auto& t : tensors) {
    const std::uint32_t name_len = in.u32();
    const std::string name = in.bytes(name_len);
    if (name != t.name) throw ConfigError(in.path + ": expected tensor `" + t.name + "`, found `" + name + "`");
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    if (rows != static_cast<std::uint32_t>(t.tensor->rows()) || cols != static_cast<std::uint32_t>(t.tensor->cols())) {
      throw ConfigError(in.path + ": tensor `" + name + "` has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", config expects " + std::to_string(t.tensor->rows()) + "x" +
                        std::to_string(t.tensor->cols()));
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) (*t.tensor)(r, c) = in.f32();
    }
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.vocab_size));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.d_model));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.d_ff));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.n_layers_enc));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.n_layers_dec));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.n_heads));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.max_positions));
  put_f32(out, static_cast<float>(ckpt.config.dropout_rate));
  put_f32(out, static_cast<float>(ckpt.config.layer_drop_rate));
  put_u64(out, ckpt.vocab_fingerprint);
  put_u64(out, ckpt.step);
  auto& params = const_cast<ModelParams<float>&>(ckpt.params);
  write_params(out, params);
  out.push_back(ckpt.has_optimizer ? '\x01' : '\x00');
  if (ckpt.has_optimizer) {
    put_u64(out, ckpt.adam_step);
    auto& m = const_cast<ModelParams<float>&>(ckpt.adam_m);
    auto& v = const_cast<ModelParams<float>&>(ckpt.adam_v);
    write_params(out, m);
    write_params(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ConfigError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::optional<std::uint64_t> expected_vocab_fingerprint,
                           bool override_fingerprint) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in{data, path};
  const std::string magic = in.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path + ": not a checkpoint file (bad magic)");
  }
  Checkpoint ckpt;
  ckpt.version = in.u32();
  if (ckpt.version != 1) throw ConfigError(path + ": unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.config.vocab_size = static_cast<int>(in.u32());
  ckpt.config.d_model = static_cast<int>(in.u32());
  ckpt.config.d_ff = static_cast<int>(in.u32());
  ckpt.config.n_layers_enc = static_cast<int>(in.u32());
  ckpt.config.n_layers_dec = static_cast<int>(in.u32());
  ckpt.config.n_heads = static_cast<int>(in.u32());
  ckpt.config.max_positions = static_cast<int>(in.u32());
  ckpt.config.dropout_rate = in.f32();
  ckpt.config.layer_drop_rate = in.f32();
  ckpt.vocab_fingerprint = in.u64();
  ckpt.step = in.u64();
  if (expected_vocab_fingerprint && *expected_vocab_fingerprint != ckpt.vocab_fingerprint && !override_fingerprint) {
    throw ConfigError(path + ": vocabulary fingerprint " + to_hex(ckpt.vocab_fingerprint) +
                      " does not match expected " + to_hex(*expected_vocab_fingerprint) +
                      " (pass the override to load anyway)");
  }
  read_params(in, ckpt.config, ckpt.params);
  const std::string flag = in.bytes(1);
  ckpt.has_optimizer = flag[0] != '\x00';
  if (ckpt.has_optimizer) {
    ckpt.adam_step = in.u64();
    read_params(in, ckpt.config, ckpt.adam_m);
    read_params(in, ckpt.config, ckpt.adam_v);
  }
  if (in.pos != data.size()) throw ConfigError(path + ": trailing bytes after checkpoint payload");
  return ckpt;
}

ModelParams<float> average_checkpoints(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("average_checkpoints: empty sequence");
  const auto& first = checkpoints.front();
  for (const auto& c : checkpoints) {
    if (!(c.config == first.config)) {
      throw std::invalid_argument("average_checkpoints: model config mismatch at step " + std::to_string(c.step));
    }
    if (c.vocab_fingerprint != first.vocab_fingerprint) {
      throw std::invalid_argument("average_checkpoints: vocab_fingerprint mismatch at step " + std::to_string(c.step));
    }
  }
  std::vector<const ModelParams<float>*> sets;
  sets.reserve(checkpoints.size());
  for (const auto& c : checkpoints) sets.push_back(&c.params);
  return average_params(sets);
}

}  // namespace minimt
