#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "imvalign/data.hpp"
#include "imvalign/model.hpp"

// Inference latency benchmarking with per-stage timers. The interesting
// structural facts are scaling ones: the predictor stage (increments, length,
// reconstruction) grows linearly in the frame count and is insensitive to the
// output length; absolute numbers are hardware-bound.

namespace imvalign {

struct TimingReport {
  double encoder_s = 0.0;
  double predictor_s = 0.0;
  double decoder_s = 0.0;
  double total_s = 0.0;
  double audio_s = 0.0;      // frames * frame_shift
  double rtf_proxy = 0.0;    // total_s / audio_s
  double frame_shift = 0.01;
  long long utterances = 0;
  int repeats = 0;
};

namespace bench_detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace bench_detail

// Runs `repeats` timed passes over the corpus (plus one untimed warm-up) and
// reports the median per stage. Single-threaded for stable numbers.
template <class Real>
TimingReport benchmark_inference(const Model<Real>& model,
                                 const std::vector<TranscriptionExample>& corpus,
                                 int repeats, double frame_shift = 0.01) {
  if (repeats < 3)
    throw ConfigError("bench: need at least 3 repeats for a stable median");
  using clock = std::chrono::steady_clock;

  std::vector<Tensor<Real>> inputs;
  inputs.reserve(corpus.size());
  long long frames = 0;
  for (const auto& ex : corpus) {
    inputs.push_back(model.features_tensor(ex));
    frames += ex.frames;
  }

  auto run_pass = [&](StageTimes& stages) {
    const auto start = clock::now();
    for (const auto& x : inputs) (void)model.infer(x, &stages);
    return std::chrono::duration<double>(clock::now() - start).count();
  };

  StageTimes warm;
  (void)run_pass(warm);

  std::vector<double> enc, pred, dec, total;
  for (int r = 0; r < repeats; ++r) {
    StageTimes stages;
    total.push_back(run_pass(stages));
    enc.push_back(stages.encoder);
    pred.push_back(stages.predictor);
    dec.push_back(stages.decoder);
  }

  TimingReport report;
  report.encoder_s = bench_detail::median(enc);
  report.predictor_s = bench_detail::median(pred);
  report.decoder_s = bench_detail::median(dec);
  report.total_s = bench_detail::median(total);
  report.frame_shift = frame_shift;
  report.audio_s = static_cast<double>(frames) * frame_shift;
  report.rtf_proxy = report.audio_s > 0 ? report.total_s / report.audio_s : 0.0;
  report.utterances = static_cast<long long>(corpus.size());
  report.repeats = repeats;
  return report;
}

struct ScalingReport {
  std::vector<std::pair<int, double>> frame_grid;   // (T, predictor stage s)
  double frame_correlation = 0.0;                   // time vs T
  double frame_slope = 0.0;                         // seconds per frame
  std::vector<std::pair<int, double>> length_grid;  // (L*, predictor stage s)
  double length_variation = 0.0;                    // (max-min)/median
  int fixed_frames = 0;
};

// Predictor-stage scaling study: frame grid with a fixed forced output length,
// then an output-length sweep at a fixed frame count.
template <class Real>
ScalingReport benchmark_scaling(const Model<Real>& model,
                                const std::vector<int>& frame_grid,
                                const std::vector<int>& length_grid,
                                int fixed_frames, int repeats,
                                std::uint64_t seed = 1) {
  if (repeats < 3)
    throw ConfigError("bench: need at least 3 repeats for a stable median");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto random_input = [&](int t_len) {
    Tensor<Real> x = Tensor<Real>::zeros({t_len, model.config().feature_dim});
    for (auto& v : *x.data) v = static_cast<Real>(dist(rng));
    return x;
  };

  auto predictor_time = [&](const Tensor<Real>& x, int forced_len) {
    StageTimes warm;
    (void)model.infer(x, &warm, forced_len);
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      StageTimes stages;
      (void)model.infer(x, &stages, forced_len);
      samples.push_back(stages.predictor);
    }
    return bench_detail::median(samples);
  };

  ScalingReport report;
  report.fixed_frames = fixed_frames;
  std::vector<double> xs, ys;
  for (int t_len : frame_grid) {
    Tensor<Real> x = random_input(t_len);
    const double s = predictor_time(x, 10);
    report.frame_grid.emplace_back(t_len, s);
    xs.push_back(static_cast<double>(t_len));
    ys.push_back(s);
  }
  report.frame_correlation = bench_detail::pearson(xs, ys);
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      num += (xs[i] - mx) * (ys[i] - my);
      den += (xs[i] - mx) * (xs[i] - mx);
    }
    report.frame_slope = den > 0 ? num / den : 0.0;
  }

  Tensor<Real> fixed_input = random_input(fixed_frames);
  std::vector<double> ls;
  for (int l : length_grid) {
    const double s = predictor_time(fixed_input, l);
    report.length_grid.emplace_back(l, s);
    ls.push_back(s);
  }
  if (!ls.empty()) {
    const double lo = *std::min_element(ls.begin(), ls.end());
    const double hi = *std::max_element(ls.begin(), ls.end());
    const double med = bench_detail::median(ls);
    report.length_variation = med > 0 ? (hi - lo) / med : 0.0;
  }
  return report;
}

}  // namespace imvalign
