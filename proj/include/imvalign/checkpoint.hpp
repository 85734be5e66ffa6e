#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "imvalign/model.hpp"
#include "imvalign/optimizer.hpp"

// Checkpoint file: magic string, format version, config block, then named
// tensors as (name length, name, rank, dims, little-endian 32-bit floats).
// Optimizer moments ride along under an "opt." name prefix so training can
// resume exactly; inference ignores them.

namespace imvalign {

inline constexpr char kCheckpointMagic[] = "IMVALIGN-CKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw CheckpointError("checkpoint: unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in) {
  const std::uint64_t lo = read_u32(in);
  const std::uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}

inline float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

template <class Real>
void write_tensor(std::ostream& out, const std::string& name,
                  const Tensor<Real>& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(out, static_cast<std::uint32_t>(d));
  for (Real v : *t.data) write_f32(out, static_cast<float>(v));
}

struct RawTensor {
  std::vector<int> shape;
  std::vector<float> values;
};

inline std::pair<std::string, RawTensor> read_tensor(std::istream& in) {
  const std::uint32_t name_len = read_u32(in);
  if (name_len > 4096) throw CheckpointError("checkpoint: implausible name length");
  std::string name(name_len, '\0');
  in.read(name.data(), static_cast<std::streamsize>(name_len));
  if (!in) throw CheckpointError("checkpoint: unexpected end of file");
  RawTensor raw;
  const std::uint32_t rank = read_u32(in);
  if (rank > 8) throw CheckpointError("checkpoint: implausible tensor rank");
  long long numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32(in);
    raw.shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  raw.values.resize(static_cast<std::size_t>(numel));
  for (auto& v : raw.values) v = read_f32(in);
  return {std::move(name), std::move(raw)};
}

inline void write_config(std::ostream& out, const ModelConfig& cfg) {
  write_u32(out, static_cast<std::uint32_t>(cfg.encoder_layers));
  write_u32(out, static_cast<std::uint32_t>(cfg.text_encoder_layers));
  write_u32(out, static_cast<std::uint32_t>(cfg.predictor_layers));
  write_u32(out, static_cast<std::uint32_t>(cfg.decoder_layers));
  write_u32(out, static_cast<std::uint32_t>(cfg.heads));
  write_u32(out, static_cast<std::uint32_t>(cfg.dim));
  write_u32(out, static_cast<std::uint32_t>(cfg.ffn_mult));
  write_u32(out, static_cast<std::uint32_t>(cfg.vocab_size));
  write_u32(out, static_cast<std::uint32_t>(cfg.feature_dim));
  write_u32(out, static_cast<std::uint32_t>(cfg.predictor_kernel));
  write_u32(out, static_cast<std::uint32_t>(cfg.predictor_hidden));
  write_f64(out, cfg.lambda_align);
  write_f64(out, cfg.sigma_init);
  write_f64(out, cfg.label_smoothing);
  write_u64(out, cfg.seed);
}

inline ModelConfig read_config(std::istream& in) {
  ModelConfig cfg;
  cfg.encoder_layers = static_cast<int>(read_u32(in));
  cfg.text_encoder_layers = static_cast<int>(read_u32(in));
  cfg.predictor_layers = static_cast<int>(read_u32(in));
  cfg.decoder_layers = static_cast<int>(read_u32(in));
  cfg.heads = static_cast<int>(read_u32(in));
  cfg.dim = static_cast<int>(read_u32(in));
  cfg.ffn_mult = static_cast<int>(read_u32(in));
  cfg.vocab_size = static_cast<int>(read_u32(in));
  cfg.feature_dim = static_cast<int>(read_u32(in));
  cfg.predictor_kernel = static_cast<int>(read_u32(in));
  cfg.predictor_hidden = static_cast<int>(read_u32(in));
  cfg.lambda_align = read_f64(in);
  cfg.sigma_init = read_f64(in);
  cfg.label_smoothing = read_f64(in);
  cfg.seed = read_u64(in);
  return cfg;
}

}  // namespace ckpt_detail

template <class Real>
void save_checkpoint(const std::string& path, Model<Real>& model,
                     const Optimizer<Real>* opt = nullptr,
                     long long train_steps = 0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot open for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  ckpt_detail::write_u32(out, kCheckpointVersion);
  ckpt_detail::write_config(out, model.config());
  ckpt_detail::write_u64(out, static_cast<std::uint64_t>(train_steps));

  auto params = model.parameters();
  std::uint32_t count = static_cast<std::uint32_t>(params.size());
  if (opt)
    count += static_cast<std::uint32_t>(opt->first_moments().size() +
                                        opt->second_moments().size());
  ckpt_detail::write_u32(out, count);
  for (Parameter<Real>* p : params)
    ckpt_detail::write_tensor(out, p->name, p->tensor);
  if (opt) {
    for (const auto& [name, t] : opt->first_moments())
      ckpt_detail::write_tensor(out, "opt.m." + name, t);
    for (const auto& [name, t] : opt->second_moments())
      ckpt_detail::write_tensor(out, "opt.v." + name, t);
  }
  if (!out) throw CheckpointError("checkpoint: write failed: " + path);
}

template <class Real>
struct LoadedCheckpoint {
  Model<Real> model;
  long long train_steps = 0;
  bool has_optimizer_state = false;
  std::map<std::string, Tensor<Real>> opt_m;
  std::map<std::string, Tensor<Real>> opt_v;

  void restore_optimizer(Optimizer<Real>& opt) const {
    opt.first_moments() = opt_m;
    opt.second_moments() = opt_v;
    opt.set_step_count(train_steps);
  }
};

template <class Real>
LoadedCheckpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open: " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError("checkpoint: bad magic string");
  const std::uint32_t version = ckpt_detail::read_u32(in);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " +
                          std::to_string(version));
  const ModelConfig cfg = ckpt_detail::read_config(in);
  const long long steps = static_cast<long long>(ckpt_detail::read_u64(in));

  LoadedCheckpoint<Real> loaded{Model<Real>(cfg), steps, false, {}, {}};
  const std::uint32_t count = ckpt_detail::read_u32(in);
  std::map<std::string, ckpt_detail::RawTensor> raw;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = ckpt_detail::read_tensor(in);
    if (!raw.emplace(std::move(name), std::move(t)).second)
      throw CheckpointError("checkpoint: duplicate tensor name");
  }

  auto take = [&raw](const std::string& name) {
    auto it = raw.find(name);
    if (it == raw.end())
      throw CheckpointError("checkpoint: missing tensor: " + name);
    ckpt_detail::RawTensor t = std::move(it->second);
    raw.erase(it);
    return t;
  };

  for (Parameter<Real>* p : loaded.model.parameters()) {
    ckpt_detail::RawTensor t = take(p->name);
    if (t.shape != p->tensor.shape)
      throw CheckpointError("checkpoint: shape mismatch for " + p->name);
    for (std::size_t i = 0; i < t.values.size(); ++i)
      (*p->tensor.data)[i] = static_cast<Real>(t.values[i]);
  }
  for (auto& [name, t] : raw) {
    const bool is_m = name.rfind("opt.m.", 0) == 0;
    const bool is_v = name.rfind("opt.v.", 0) == 0;
    if (!is_m && !is_v)
      throw CheckpointError("checkpoint: unexpected tensor: " + name);
    Tensor<Real> tensor = Tensor<Real>::zeros(t.shape);
    for (std::size_t i = 0; i < t.values.size(); ++i)
      (*tensor.data)[i] = static_cast<Real>(t.values[i]);
    (is_m ? loaded.opt_m : loaded.opt_v)[name.substr(6)] = std::move(tensor);
    loaded.has_optimizer_state = true;
  }
  return loaded;
}

}  // namespace imvalign
