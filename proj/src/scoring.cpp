#include "imvalign/scoring.hpp"

#include <algorithm>

namespace imvalign {

ScoreReport edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // dist[i][j]: cost of aligning ref[0..i) with hyp[0..j)
  std::vector<std::vector<int>> dist(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) dist[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) dist[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0);
      const int ins = dist[i][j - 1] + 1;
      const int del = dist[i - 1][j] + 1;
      dist[i][j] = std::min({sub, ins, del});
    }

  ScoreReport report;
  report.ref_tokens = static_cast<long long>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0)) {
      if (ref[i - 1] != hyp[j - 1]) ++report.substitutions;
      --i;
      --j;
    } else if (j > 0 && dist[i][j] == dist[i][j - 1] + 1) {
      ++report.insertions;
      --j;
    } else {
      ++report.deletions;
      --i;
    }
  }
  return report;
}

ScoreReport class_mapped_error(const std::vector<int>& ref,
                               const std::vector<int>& hyp,
                               const std::vector<int>& class_of) {
  auto map_ids = [&class_of](const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) {
      if (id < 0 || id >= static_cast<int>(class_of.size()) ||
          class_of[static_cast<std::size_t>(id)] < 0)
        throw VocabError("class map: unmapped token id " + std::to_string(id));
      out.push_back(class_of[static_cast<std::size_t>(id)]);
    }
    return out;
  };
  return edit_distance(map_ids(ref), map_ids(hyp));
}

}  // namespace imvalign
