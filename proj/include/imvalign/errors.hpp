#pragma once

#include <stdexcept>
#include <string>

namespace imvalign {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when the cumulative alignment span collapses (untrained or degenerate
// increments). Callers decide the fallback; inference degrades gracefully,
// training surfaces the offending example.
struct DegenerateAlignment : std::runtime_error {
  double span;
  long long example_id;
  explicit DegenerateAlignment(double span_, long long example_id_ = -1)
      : std::runtime_error(make_message(span_, example_id_)),
        span(span_),
        example_id(example_id_) {}

 private:
  static std::string make_message(double span, long long id) {
    std::string msg = "degenerate alignment: position span " + std::to_string(span) +
                      " below threshold";
    if (id >= 0) msg += " (example " + std::to_string(id) + ")";
    return msg;
  }
};

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorpusHeaderError : CorpusError {
  using CorpusError::CorpusError;
};

struct CorpusVersionError : CorpusError {
  using CorpusError::CorpusError;
};

struct CorpusTruncatedError : CorpusError {
  using CorpusError::CorpusError;
};

struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyReferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace imvalign
