#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "imvalign/ops.hpp"
#include "imvalign/tensor.hpp"

// Plain pre-norm transformer encoder building blocks. No masking or dropout;
// sequences are unpadded and processed one at a time.

namespace imvalign {

template <class Real>
Tensor<Real> glorot_uniform(std::mt19937_64& rng, int fan_in, int fan_out,
                            std::vector<int> shape) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Real> t = Tensor<Real>::zeros(std::move(shape));
  for (auto& v : *t.data) v = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
Tensor<Real> gaussian_init(std::mt19937_64& rng, double stddev,
                           std::vector<int> shape) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Real> t = Tensor<Real>::zeros(std::move(shape));
  for (auto& v : *t.data) v = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
struct LinearLayer {
  Parameter<Real> weight;  // [in,out]
  Parameter<Real> bias;    // [out]

  void init(std::mt19937_64& rng, int in, int out, const std::string& name) {
    weight = Parameter<Real>(name + ".w", glorot_uniform<Real>(rng, in, out, {in, out}));
    bias = Parameter<Real>(name + ".b", Tensor<Real>::zeros({out}));
  }

  Tensor<Real> apply(Tape<Real>* tape, const Tensor<Real>& x) const {
    return add_row(tape, matmul(tape, x, weight.value()), bias.value());
  }

  void collect(std::vector<Parameter<Real>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <class Real>
struct LayerNormLayer {
  Parameter<Real> gain;
  Parameter<Real> bias;

  void init(int d, const std::string& name) {
    Tensor<Real> ones = Tensor<Real>::zeros({d});
    for (auto& v : *ones.data) v = Real(1);
    gain = Parameter<Real>(name + ".g", std::move(ones));
    bias = Parameter<Real>(name + ".b", Tensor<Real>::zeros({d}));
  }

  Tensor<Real> apply(Tape<Real>* tape, const Tensor<Real>& x) const {
    return layer_norm(tape, x, gain.value(), bias.value());
  }

  void collect(std::vector<Parameter<Real>*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

template <class Real>
struct SelfAttention {
  int heads = 1;
  int dim = 0;
  LinearLayer<Real> wq, wk, wv, wo;

  void init(std::mt19937_64& rng, int d, int heads_, const std::string& name) {
    heads = heads_;
    dim = d;
    wq.init(rng, d, d, name + ".q");
    wk.init(rng, d, d, name + ".k");
    wv.init(rng, d, d, name + ".v");
    wo.init(rng, d, d, name + ".o");
  }

  Tensor<Real> apply(Tape<Real>* tape, const Tensor<Real>& x) const {
    const int dh = dim / heads;
    Tensor<Real> q = wq.apply(tape, x);
    Tensor<Real> k = wk.apply(tape, x);
    Tensor<Real> v = wv.apply(tape, x);
    std::vector<Tensor<Real>> ctx;
    ctx.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor<Real> qh = slice_cols(tape, q, h * dh, dh);
      Tensor<Real> kh = slice_cols(tape, k, h * dh, dh);
      Tensor<Real> vh = slice_cols(tape, v, h * dh, dh);
      Tensor<Real> scores = scale(tape, matmul(tape, qh, transpose(tape, kh)),
                                  1.0 / std::sqrt(static_cast<double>(dh)));
      ctx.push_back(matmul(tape, row_softmax(tape, scores), vh));
    }
    return wo.apply(tape, concat_cols(tape, ctx));
  }

  void collect(std::vector<Parameter<Real>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

// Pre-norm block: x + attn(ln(x)), then x + ffn(ln(x)).
template <class Real>
struct EncoderBlock {
  LayerNormLayer<Real> ln1, ln2;
  SelfAttention<Real> attn;
  LinearLayer<Real> ff1, ff2;

  void init(std::mt19937_64& rng, int d, int heads, int ffn_dim,
            const std::string& name) {
    ln1.init(d, name + ".ln1");
    attn.init(rng, d, heads, name + ".attn");
    ln2.init(d, name + ".ln2");
    ff1.init(rng, d, ffn_dim, name + ".ff1");
    ff2.init(rng, ffn_dim, d, name + ".ff2");
  }

  Tensor<Real> apply(Tape<Real>* tape, const Tensor<Real>& x) const {
    Tensor<Real> h = add(tape, x, attn.apply(tape, ln1.apply(tape, x)));
    Tensor<Real> ff = ff2.apply(tape, relu(tape, ff1.apply(tape, ln2.apply(tape, h))));
    return add(tape, h, ff);
  }

  void collect(std::vector<Parameter<Real>*>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    ff1.collect(out);
    ff2.collect(out);
  }
};

// Pre-norm stack closed by a final norm; the final norm pins the output scale,
// which keeps the alignment attention temperature stable across training.
template <class Real>
struct EncoderStack {
  std::vector<EncoderBlock<Real>> blocks;
  LayerNormLayer<Real> final_norm;

  void init(std::mt19937_64& rng, int layers, int d, int heads, int ffn_dim,
            const std::string& name) {
    blocks.resize(static_cast<std::size_t>(layers));
    for (int i = 0; i < layers; ++i)
      blocks[static_cast<std::size_t>(i)].init(rng, d, heads, ffn_dim,
                                               name + "." + std::to_string(i));
    final_norm.init(d, name + ".out_norm");
  }

  Tensor<Real> apply(Tape<Real>* tape, const Tensor<Real>& x) const {
    Tensor<Real> h = x;
    for (const auto& b : blocks) h = b.apply(tape, h);
    return final_norm.apply(tape, h);
  }

  void collect(std::vector<Parameter<Real>*>& out) {
    for (auto& b : blocks) b.collect(out);
    final_norm.collect(out);
  }
};

}  // namespace imvalign
