#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "imvalign/ops.hpp"
#include "imvalign/tensor.hpp"
#include "imvalign/transformer.hpp"

// Alignment predictor: estimates the per-frame alignment increments from the
// acoustic embeddings alone, so inference needs no transcription. Two
// convolution layers (each with layer norm and relu) feed a one-channel
// projection whose relu keeps the output non-negative.

namespace imvalign {

struct PredictorConfig {
  int kernel_size = 3;
  int hidden_channels = 0;  // 0 -> embedding dim
  int layers = 2;

  void validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("predictor: kernel size must be odd and >= 1");
    if (layers != 2) throw ConfigError("predictor: layer count is fixed at 2");
    if (hidden_channels < 0)
      throw ConfigError("predictor: hidden channels must be >= 0");
  }
};

template <class Real>
struct PredictedAlignment {
  Tensor<Real> delta_star;  // [T], elementwise >= 0
  int predicted_length = 1;
};

template <class Real>
struct AlignmentPredictor {
  PredictorConfig cfg;
  Parameter<Real> conv1_w, conv1_b;
  LayerNormLayer<Real> ln1;
  Parameter<Real> conv2_w, conv2_b;
  LayerNormLayer<Real> ln2;
  Parameter<Real> proj_w, proj_b;

  void init(std::mt19937_64& rng, int d, const PredictorConfig& config,
            const std::string& name) {
    cfg = config;
    cfg.validate();
    const int hidden = cfg.hidden_channels > 0 ? cfg.hidden_channels : d;
    const int k = cfg.kernel_size;
    conv1_w = Parameter<Real>(
        name + ".conv1.w", glorot_uniform<Real>(rng, k * d, hidden, {k, d, hidden}));
    conv1_b = Parameter<Real>(name + ".conv1.b", Tensor<Real>::zeros({hidden}));
    ln1.init(hidden, name + ".ln1");
    conv2_w = Parameter<Real>(
        name + ".conv2.w",
        glorot_uniform<Real>(rng, k * hidden, hidden, {k, hidden, hidden}));
    conv2_b = Parameter<Real>(name + ".conv2.b", Tensor<Real>::zeros({hidden}));
    ln2.init(hidden, name + ".ln2");
    // Zero head weights with a small positive bias: the first increments are
    // a uniform positive constant, so the relu gate starts alive and the head
    // drifts toward the generator targets instead of overshooting into the
    // all-clipped region it cannot leave.
    proj_w = Parameter<Real>(name + ".proj.w", Tensor<Real>::zeros({hidden, 1}));
    proj_b = Parameter<Real>(name + ".proj.b", Tensor<Real>::from({1}, {Real(0.1)}));
  }

  // [T,d] -> [T] non-negative increments
  Tensor<Real> forward(Tape<Real>* tape, const Tensor<Real>& e_s) const {
    Tensor<Real> h = conv1d_same(tape, e_s, conv1_w.value(), conv1_b.value());
    h = relu(tape, ln1.apply(tape, h));
    h = conv1d_same(tape, h, conv2_w.value(), conv2_b.value());
    h = relu(tape, ln2.apply(tape, h));
    Tensor<Real> out =
        add_row(tape, matmul(tape, h, proj_w.value()), proj_b.value());
    return reshape(tape, relu(tape, out), {e_s.rows()});
  }

  void collect(std::vector<Parameter<Real>*>& out) {
    out.push_back(&conv1_w);
    out.push_back(&conv1_b);
    ln1.collect(out);
    out.push_back(&conv2_w);
    out.push_back(&conv2_b);
    ln2.collect(out);
    out.push_back(&proj_w);
    out.push_back(&proj_b);
  }
};

// L* = round(sum delta*) + 1, floored at 1. The cumulative increments estimate
// the index span L-1, hence the +1.
template <class Real>
int predict_length(const Tensor<Real>& delta_star) {
  double total = 0.0;
  for (Real v : *delta_star.data) total += static_cast<double>(v);
  const long long rounded = std::llround(total);
  return rounded < 0 ? 1 : static_cast<int>(rounded) + 1;
}

// MSE against the generator increments. The target must be detached by the
// caller; this loss may only reshape the predictor, never the generator.
template <class Real>
Tensor<Real> alignment_loss(Tape<Real>* tape, const Tensor<Real>& delta_star,
                            const Tensor<Real>& delta_target) {
  if (!delta_star.same_shape(delta_target))
    throw DimensionError("alignment_loss: length mismatch");
  return mse(tape, delta_star, delta_target.detached());
}

}  // namespace imvalign
