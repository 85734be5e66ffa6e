#pragma once

#include <vector>

#include "imvalign/errors.hpp"

namespace imvalign {

struct ScoreReport {
  long long substitutions = 0;
  long long deletions = 0;
  long long insertions = 0;
  long long ref_tokens = 0;

  long long total_errors() const { return substitutions + deletions + insertions; }

  // (S+D+I)/ref_tokens; undefined for an empty reference.
  double error_rate() const {
    if (ref_tokens == 0)
      throw EmptyReferenceError("score: error rate undefined for empty reference");
    return static_cast<double>(total_errors()) / static_cast<double>(ref_tokens);
  }

  ScoreReport& operator+=(const ScoreReport& o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_tokens += o.ref_tokens;
    return *this;
  }
};

// Minimal unit-cost alignment. The traceback resolves cost ties preferring
// substitution over insertion over deletion, so the S/D/I split is
// deterministic.
ScoreReport edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp);

// Edit distance after mapping both sequences through a many-to-one class map
// (class_of[id] = class id, -1 = unmapped).
ScoreReport class_mapped_error(const std::vector<int>& ref,
                               const std::vector<int>& hyp,
                               const std::vector<int>& class_of);

}  // namespace imvalign
