#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "imvalign/ops.hpp"
#include "imvalign/tensor.hpp"
#include "oracle.hpp"

namespace testutil {

inline imvalign::Tensor<double> to_tensor(const oracle::Mat& m) {
  return imvalign::Tensor<double>::from({m.rows, m.cols}, m.v);
}

inline oracle::Mat to_mat(const imvalign::Tensor<double>& t) {
  oracle::Mat m(t.rows(), t.cols());
  m.v = *t.data;
  return m;
}

inline imvalign::Tensor<double> vec_tensor(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return imvalign::Tensor<double>::from({n}, std::move(v));
}

inline imvalign::Tensor<double> random_tensor(std::mt19937_64& rng,
                                              std::vector<int> shape,
                                              double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  auto t = imvalign::Tensor<double>::zeros(std::move(shape));
  for (auto& v : *t.data) v = dist(rng);
  return t;
}

inline double max_abs_diff(const imvalign::Tensor<double>& t,
                           const std::vector<double>& expect) {
  double worst = 0.0;
  for (std::size_t i = 0; i < expect.size(); ++i)
    worst = std::max(worst, std::abs((*t.data)[i] - expect[i]));
  return worst;
}

inline double max_abs_diff(const imvalign::Tensor<double>& t, const oracle::Mat& m) {
  return max_abs_diff(t, m.v);
}

inline double max_abs_diff(const imvalign::Tensor<double>& t,
                           std::initializer_list<double> expect) {
  return max_abs_diff(t, std::vector<double>(expect));
}

// Fixed random projection turning a tensor-valued graph into a scalar for
// finite-difference checks (a plain sum can let sign errors cancel).
inline imvalign::Tensor<double> project(imvalign::Tape<double>* tape,
                                        const imvalign::Tensor<double>& t,
                                        const imvalign::Tensor<double>& weights) {
  return imvalign::sum(tape, imvalign::mul(tape, t, weights));
}

}  // namespace testutil
