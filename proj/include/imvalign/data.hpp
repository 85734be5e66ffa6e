#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "imvalign/errors.hpp"

namespace imvalign {

// One utterance: a feature matrix, its transcription, and (for synthetic data)
// the true frame-to-token map. The map is diagnostic only; training never
// reads it.
struct TranscriptionExample {
  int frames = 0;
  int feature_dim = 0;
  std::vector<double> features;  // row-major [frames, feature_dim]
  std::vector<int> tokens;
  std::vector<int> alignment;    // empty, or one token index per frame

  bool has_alignment() const { return !alignment.empty(); }
};

struct SynthTaskConfig {
  int vocab_size = 20;
  int feature_dim = 16;
  int min_tokens = 3;
  int max_tokens = 8;
  int min_frames_per_token = 2;
  int max_frames_per_token = 5;
  double noise_std = 0.0;
  bool one_hot_prototypes = false;
  std::uint64_t seed = 1;

  void validate() const;
};

// Monotonic transduction task: each token emits a run of frames around a fixed
// per-token prototype vector. Prototypes are a pure function of the config, so
// corpora drawn from the same config share the task.
class SynthTask {
 public:
  explicit SynthTask(const SynthTaskConfig& cfg);

  TranscriptionExample sample(std::mt19937_64& rng) const;

  const SynthTaskConfig& config() const { return cfg_; }
  const std::vector<double>& prototypes() const { return prototypes_; }

 private:
  SynthTaskConfig cfg_;
  std::vector<double> prototypes_;  // [vocab_size, feature_dim]
};

TranscriptionExample gen_example(const SynthTask& task, std::mt19937_64& rng);

// Corpus file: a text header line, then one record per example:
//   tokens | T F | features | alignment
// with the last field optional. Floats use shortest round-trip formatting.
extern const std::string kCorpusMagic;    // "IMVALIGN-CORPUS"
extern const std::string kCorpusVersion;  // "v1"

void write_corpus(const std::string& path,
                  const std::vector<TranscriptionExample>& examples);
std::vector<TranscriptionExample> read_corpus(const std::string& path);

// One token string per line, id = line index. Duplicates are an error.
std::vector<std::string> load_vocab(const std::string& path);

// Lines of token_string<TAB>class_string.
std::vector<std::pair<std::string, std::string>> load_class_map(
    const std::string& path);

// Resolves a token->class file against a vocabulary: out[id] = dense class id.
// Every vocab entry must be mapped.
std::vector<int> resolve_class_map(
    const std::vector<std::string>& vocab,
    const std::vector<std::pair<std::string, std::string>>& pairs);

}  // namespace imvalign
