#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

#include "imvalign/data.hpp"
#include "imvalign/model.hpp"
#include "imvalign/scoring.hpp"

namespace imvalign {

enum class DecodeMode { baseline, oracle };

struct EvalStats {
  ScoreReport score;
  long long examples = 0;
  long long exact_matches = 0;
  long long length_within_one = 0;  // |predicted length - reference length| <= 1
  long long degenerate = 0;
};

// Decodes every example and micro-averages the error counts. Baseline mode
// uses the predictor path; oracle mode reconstructs from the ground-truth
// transcription. Threads > 1 fan out over a read-only model snapshot.
template <class Real>
EvalStats evaluate_corpus(const Model<Real>& model,
                          const std::vector<TranscriptionExample>& corpus,
                          DecodeMode mode, int threads = 1) {
  for (const auto& ex : corpus) {
    if (ex.tokens.empty())
      throw EvalError("evaluate: corpus example lacks a transcription");
    for (int t : ex.tokens)
      if (t < 0 || t >= model.config().vocab_size)
        throw EvalError("evaluate: token id " + std::to_string(t) +
                        " outside checkpoint vocabulary of size " +
                        std::to_string(model.config().vocab_size));
  }

  const std::size_t n = corpus.size();
  auto run_range = [&](std::size_t begin, std::size_t end, EvalStats& stats) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = corpus[i];
      Hypothesis hyp = mode == DecodeMode::baseline
                           ? model.infer(model.features_tensor(ex))
                           : model.infer_oracle(ex);
      stats.score += edit_distance(ex.tokens, hyp.tokens);
      ++stats.examples;
      if (hyp.tokens == ex.tokens) ++stats.exact_matches;
      if (std::abs(hyp.length - static_cast<int>(ex.tokens.size())) <= 1)
        ++stats.length_within_one;
      if (hyp.degenerate) ++stats.degenerate;
    }
  };

  EvalStats total;
  if (threads <= 1 || n < 2) {
    run_range(0, n, total);
    return total;
  }
  const int workers = std::min<int>(threads, static_cast<int>(n));
  std::vector<EvalStats> partial(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = n * static_cast<std::size_t>(w) / workers;
    const std::size_t end = n * static_cast<std::size_t>(w + 1) / workers;
    pool.emplace_back(run_range, begin, end,
                      std::ref(partial[static_cast<std::size_t>(w)]));
  }
  for (auto& t : pool) t.join();
  for (const auto& p : partial) {
    total.score += p.score;
    total.examples += p.examples;
    total.exact_matches += p.exact_matches;
    total.length_within_one += p.length_within_one;
    total.degenerate += p.degenerate;
  }
  return total;
}

}  // namespace imvalign
