#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "imvalign/alignment.hpp"
#include "imvalign/data.hpp"
#include "imvalign/optimizer.hpp"
#include "imvalign/predictor.hpp"
#include "imvalign/transformer.hpp"

// Single-step non-autoregressive transducer. Training runs the alignment
// generator over acoustic and text embeddings and supervises the predictor
// with its increments; inference runs acoustic encoder -> predictor ->
// reconstruction -> one decoder pass, never touching the text encoder.

namespace imvalign {

inline constexpr double kMelPosScale = 4.0;
// Acoustic positions advance at a fraction of the frame rate, mirroring the
// subsampled granularity a convolutional speech front end would give.
inline constexpr double kMelPosStride = 4.0;
inline constexpr double kTextPosScale = 4.0;

struct ModelConfig {
  int encoder_layers = 2;
  int text_encoder_layers = 1;
  int predictor_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int dim = 64;
  int ffn_mult = 4;
  int vocab_size = 0;
  int feature_dim = 0;
  int predictor_kernel = 3;
  int predictor_hidden = 0;  // 0 -> dim
  double lambda_align = 1.0;
  double sigma_init = 0.5;
  double label_smoothing = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (encoder_layers < 1 || text_encoder_layers < 1 || decoder_layers < 1)
      throw ConfigError("model: layer counts must be >= 1");
    if (predictor_layers != 2)
      throw ConfigError("model: predictor layer count is fixed at 2");
    if (heads < 1 || dim < 1) throw ConfigError("model: heads and dim must be >= 1");
    if (dim % heads != 0) throw ConfigError("model: dim must be divisible by heads");
    if (vocab_size < 1) throw ConfigError("model: vocab size must be >= 1");
    if (feature_dim < 1) throw ConfigError("model: feature dim must be >= 1");
    if (ffn_mult < 1) throw ConfigError("model: ffn mult must be >= 1");
    if (lambda_align < 0.0) throw ConfigError("model: lambda must be >= 0");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw ConfigError("model: label smoothing must be in [0,1)");
    PredictorConfig pc{predictor_kernel, predictor_hidden, predictor_layers};
    pc.validate();
  }
};

template <class Real>
struct TrainStepOutput {
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_mse = 0.0;
  AlignmentBundle<Real> alignment;
  ReconstructionBundle<Real> reconstruction;
  Tensor<Real> delta_star;
};

struct Hypothesis {
  std::vector<int> tokens;
  int length = 0;
  std::vector<double> token_logprobs;
  bool degenerate = false;  // increments collapsed; length-1 fallback emitted
};

struct StageTimes {
  double encoder = 0.0;
  double predictor = 0.0;  // includes length prediction and reconstruction
  double decoder = 0.0;
  double total() const { return encoder + predictor + decoder; }
};

namespace model_detail {

// Movable relaxed counter (std::atomic alone would pin the owning class).
struct RelaxedCounter {
  std::atomic<long long> value{0};
  RelaxedCounter() = default;
  RelaxedCounter(RelaxedCounter&& o) noexcept
      : value(o.value.load(std::memory_order_relaxed)) {}
  RelaxedCounter& operator=(RelaxedCounter&& o) noexcept {
    value.store(o.value.load(std::memory_order_relaxed),
                std::memory_order_relaxed);
    return *this;
  }
};

}  // namespace model_detail

template <class Real>
class Model {
 public:
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    // One init stream per module, so resizing one part never reshuffles the
    // initialization of the others.
    auto stream = [&](std::uint64_t k) {
      return std::mt19937_64(cfg_.seed ^ (0x9E3779B97F4A7C15ULL * (k + 1)));
    };
    const int d = cfg_.dim;
    std::mt19937_64 rng_mel = stream(1);
    input_proj_.init(rng_mel, cfg_.feature_dim, d, "mel.in");
    mel_blocks_.init(rng_mel, cfg_.encoder_layers, d, cfg_.heads,
                     d * cfg_.ffn_mult, "mel.block");
    std::mt19937_64 rng_text = stream(2);
    token_embed_ = Parameter<Real>(
        "text.embed", gaussian_init<Real>(rng_text, 1.0, {cfg_.vocab_size, d}));
    text_blocks_.init(rng_text, cfg_.text_encoder_layers, d, cfg_.heads,
                      d * cfg_.ffn_mult, "text.block");
    PredictorConfig pc{cfg_.predictor_kernel, cfg_.predictor_hidden,
                       cfg_.predictor_layers};
    std::mt19937_64 rng_pred = stream(3);
    predictor_.init(rng_pred, d, pc, "pred");
    std::mt19937_64 rng_dec = stream(4);
    decoder_blocks_.init(rng_dec, cfg_.decoder_layers, d, cfg_.heads,
                         d * cfg_.ffn_mult, "dec.block");
    out_proj_.init(rng_dec, d, cfg_.vocab_size, "dec.out");
    sigma_ = Parameter<Real>(
        "sigma", Tensor<Real>::from({1}, {static_cast<Real>(cfg_.sigma_init)}));
  }

  const ModelConfig& config() const { return cfg_; }

  // [T,F] -> [T,d]; input projection (scaled by sqrt(d) so content dominates
  // the unit-amplitude positions) plus sinusoidal positions, then the encoder
  // stack.
  Tensor<Real> encode_acoustic(Tape<Real>* tape, const Tensor<Real>& x) const {
    if (x.rank() != 2 || x.cols() != cfg_.feature_dim)
      throw DimensionError("encode_acoustic: bad feature shape");
    if (x.rows() < 2)
      throw InputError("encode_acoustic: need at least two frames");
    Tensor<Real> h =
        scale(tape, input_proj_.apply(tape, x), std::sqrt(double(cfg_.dim)));
    h = add(tape, h,
            scale(tape,
                  sinusoidal_positions<Real>(x.rows(), cfg_.dim, kMelPosStride),
                  kMelPosScale));
    return mel_blocks_.apply(tape, h);
  }

  // token ids -> [L,d]
  Tensor<Real> encode_text(Tape<Real>* tape, const std::vector<int>& tokens) const {
    if (tokens.empty()) throw InputError("encode_text: empty transcription");
    Tensor<Real> h = scale(tape, embedding(tape, token_embed_.value(), tokens),
                           std::sqrt(double(cfg_.dim)));
    h = add(tape, h,
            scale(tape,
                  sinusoidal_positions<Real>(static_cast<int>(tokens.size()),
                                             cfg_.dim),
                  kTextPosScale));
    return text_blocks_.apply(tape, h);
  }

  // [L,d] -> [L,V] logits, one parallel pass over all positions.
  Tensor<Real> decode_semantic(Tape<Real>* tape, const Tensor<Real>& semantic) const {
    decoder_calls_.value.fetch_add(1, std::memory_order_relaxed);
    Tensor<Real> h = add(tape, semantic,
                         sinusoidal_positions<Real>(semantic.rows(), cfg_.dim));
    h = decoder_blocks_.apply(tape, h);
    return out_proj_.apply(tape, h);
  }

  Tensor<Real> features_tensor(const TranscriptionExample& ex) const {
    Tensor<Real> x = Tensor<Real>::zeros({ex.frames, ex.feature_dim});
    for (std::size_t i = 0; i < ex.features.size(); ++i)
      (*x.data)[i] = static_cast<Real>(ex.features[i]);
    return x;
  }

  struct LossGraph {
    Tensor<Real> total, ce, mse;
    GeneratorOutput<Real> generator;
    Tensor<Real> delta_star;
  };

  // Builds the full training loss on the given tape without updating anything.
  LossGraph forward_losses(Tape<Real>* tape, const TranscriptionExample& ex,
                           long long example_id = -1) const {
    if (ex.tokens.empty())
      throw InputError("forward_losses: example has no transcription");
    Tensor<Real> x = features_tensor(ex);
    Tensor<Real> e_s = encode_acoustic(tape, x);
    Tensor<Real> e_t = encode_text(tape, ex.tokens);
    LossGraph g;
    try {
      g.generator = generator_forward(tape, e_s, e_t, sigma_.value());
    } catch (const DegenerateAlignment& e) {
      throw DegenerateAlignment(e.span, example_id);
    }
    Tensor<Real> logits = decode_semantic(tape, g.generator.semantic);
    g.ce = cross_entropy(tape, logits, ex.tokens, cfg_.label_smoothing);
    g.delta_star = predictor_.forward(tape, e_s);
    g.mse = alignment_loss(tape, g.delta_star, g.generator.alignment.delta);
    g.total = add(tape, g.ce, scale(tape, g.mse, cfg_.lambda_align));
    return g;
  }

  TrainStepOutput<Real> train_step(const TranscriptionExample& ex,
                                   Optimizer<Real>& opt,
                                   long long example_id = -1) {
    Tape<Real> tape;
    LossGraph g = forward_losses(&tape, ex, example_id);

    TrainStepOutput<Real> out;
    out.loss_total = static_cast<double>((*g.total.data)[0]);
    out.loss_ce = static_cast<double>((*g.ce.data)[0]);
    out.loss_mse = static_cast<double>((*g.mse.data)[0]);
    out.alignment = g.generator.alignment;
    out.reconstruction = g.generator.reconstruction;
    out.delta_star = g.delta_star;
    if (!std::isfinite(out.loss_total))
      throw InputError("train_step: non-finite loss on example " +
                       std::to_string(example_id));

    tape.backward(g.total);
    auto params = parameters();
    opt.step(params);
    Optimizer<Real>::zero_grads(params);
    return out;
  }

  // Single-step inference: one decoder pass regardless of the predicted
  // length. forced_length > 0 overrides the length prediction (benchmarks
  // exercising fixed output lengths). A collapsed increment span degrades to a
  // length-1 hypothesis decoded from uniformly pooled acoustic embeddings.
  Hypothesis infer(const Tensor<Real>& features, StageTimes* times = nullptr,
                   int forced_length = 0) const {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    Tensor<Real> e_s = encode_acoustic(nullptr, features);
    auto t1 = clock::now();

    Hypothesis hyp;
    Tensor<Real> semantic;
    Tensor<Real> delta_star = predictor_.forward(nullptr, e_s);
    int length = forced_length > 0 ? forced_length : predict_length(delta_star);
    try {
      Tensor<Real> p_raw = accumulate_positions<Real>(nullptr, delta_star);
      Tensor<Real> p_hat = scale_positions<Real>(nullptr, p_raw, length);
      auto recon = reconstruct_attention<Real>(nullptr, p_hat, length, sigma_.value());
      semantic = matmul<Real>(nullptr, transpose<Real>(nullptr, recon.alpha_hat), e_s);
    } catch (const DegenerateAlignment&) {
      hyp.degenerate = true;
      length = 1;
      semantic = mean_pool(e_s);
    }
    auto t2 = clock::now();

    Tensor<Real> logits = decode_semantic(nullptr, semantic);
    finish_hypothesis(hyp, logits, length);
    auto t3 = clock::now();

    if (times) {
      times->encoder += std::chrono::duration<double>(t1 - t0).count();
      times->predictor += std::chrono::duration<double>(t2 - t1).count();
      times->decoder += std::chrono::duration<double>(t3 - t2).count();
    }
    return hyp;
  }

  // Analysis decoding: the alignment comes from the generator run on the
  // ground-truth transcription, isolating predictor error.
  Hypothesis infer_oracle(const TranscriptionExample& ex,
                          StageTimes* times = nullptr) const {
    if (ex.tokens.empty())
      throw EvalError("infer_oracle: example has no transcription");
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    Tensor<Real> x = features_tensor(ex);
    Tensor<Real> e_s = encode_acoustic(nullptr, x);
    auto t1 = clock::now();

    Hypothesis hyp;
    Tensor<Real> semantic;
    int length = static_cast<int>(ex.tokens.size());
    try {
      Tensor<Real> e_t = encode_text(nullptr, ex.tokens);
      auto gen = generator_forward<Real>(nullptr, e_s, e_t, sigma_.value());
      semantic = gen.semantic;
    } catch (const DegenerateAlignment&) {
      hyp.degenerate = true;
      length = 1;
      semantic = mean_pool(e_s);
    }
    auto t2 = clock::now();

    Tensor<Real> logits = decode_semantic(nullptr, semantic);
    finish_hypothesis(hyp, logits, length);
    auto t3 = clock::now();

    if (times) {
      times->encoder += std::chrono::duration<double>(t1 - t0).count();
      times->predictor += std::chrono::duration<double>(t2 - t1).count();
      times->decoder += std::chrono::duration<double>(t3 - t2).count();
    }
    return hyp;
  }

  std::vector<Parameter<Real>*> parameters() { return rebuild_parameter_list(); }

  // Parameter groups used by the inference access audit.
  std::vector<const Parameter<Real>*> text_encoder_parameters() const {
    std::vector<Parameter<Real>*> tmp;
    auto* self = const_cast<Model*>(this);
    tmp.push_back(&self->token_embed_);
    self->text_blocks_.collect(tmp);
    return {tmp.begin(), tmp.end()};
  }

  void reset_access_counts() const {
    for (const Parameter<Real>* p : all_parameters_const()) p->reset_reads();
  }

  long long decoder_calls() const {
    return decoder_calls_.value.load(std::memory_order_relaxed);
  }
  void reset_decoder_calls() const {
    decoder_calls_.value.store(0, std::memory_order_relaxed);
  }

  Parameter<Real>& sigma() { return sigma_; }
  const Parameter<Real>& sigma() const { return sigma_; }
  AlignmentPredictor<Real>& predictor() { return predictor_; }
  LinearLayer<Real>& input_projection() { return input_proj_; }
  LinearLayer<Real>& output_projection() { return out_proj_; }
  EncoderStack<Real>& mel_blocks() { return mel_blocks_; }
  EncoderStack<Real>& text_blocks() { return text_blocks_; }
  EncoderStack<Real>& decoder_blocks() { return decoder_blocks_; }
  Parameter<Real>& token_embedding() { return token_embed_; }

  std::vector<const Parameter<Real>*> all_parameters_const() const {
    auto* self = const_cast<Model*>(this);
    auto params = self->rebuild_parameter_list();
    return {params.begin(), params.end()};
  }

 private:
  std::vector<Parameter<Real>*> rebuild_parameter_list() {
    std::vector<Parameter<Real>*> out;
    input_proj_.collect(out);
    mel_blocks_.collect(out);
    out.push_back(&token_embed_);
    text_blocks_.collect(out);
    predictor_.collect(out);
    decoder_blocks_.collect(out);
    out_proj_.collect(out);
    out.push_back(&sigma_);
    return out;
  }

  Tensor<Real> mean_pool(const Tensor<Real>& e_s) const {
    const int t_len = e_s.rows();
    Tensor<Real> weights = Tensor<Real>::zeros({1, t_len});
    for (auto& w : *weights.data) w = Real(1) / static_cast<Real>(t_len);
    return matmul<Real>(nullptr, weights, e_s);
  }

  void finish_hypothesis(Hypothesis& hyp, const Tensor<Real>& logits,
                         int length) const {
    hyp.length = length;
    hyp.tokens.resize(static_cast<std::size_t>(length));
    hyp.token_logprobs.resize(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
      const int best = argmax_row(logits, i);
      hyp.tokens[static_cast<std::size_t>(i)] = best;
      hyp.token_logprobs[static_cast<std::size_t>(i)] =
          row_log_softmax_at(logits, i, best);
    }
  }

  ModelConfig cfg_;
  LinearLayer<Real> input_proj_;
  EncoderStack<Real> mel_blocks_;
  Parameter<Real> token_embed_;
  EncoderStack<Real> text_blocks_;
  AlignmentPredictor<Real> predictor_;
  EncoderStack<Real> decoder_blocks_;
  LinearLayer<Real> out_proj_;
  Parameter<Real> sigma_;
  mutable model_detail::RelaxedCounter decoder_calls_;
};

}  // namespace imvalign
