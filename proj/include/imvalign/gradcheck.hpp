#pragma once

#include <cmath>
#include <vector>

#include "imvalign/tensor.hpp"

namespace imvalign {

struct GradCheckResult {
  double max_rel_err = 0.0;
  // smallest |pre-activation| seen at a relu/abs kink during the analytic pass;
  // callers should resample when this is below 10*eps
  double kink_margin = 0.0;
  long long elements_checked = 0;
};

// Compares reverse-mode gradients against central finite differences for a
// scalar-valued composition. `f` must rebuild the graph from the current
// parameter values: f(Tape<Real>*) -> scalar Tensor<Real>. Relative error per
// element uses max(|ad|, |fd|, floor) in the denominator.
template <class Real, class F>
GradCheckResult finite_diff_check(F&& f, const std::vector<Tensor<Real>*>& inputs,
                                  double eps = 1e-5, double rel_floor = 1e-6) {
  Tape<Real> tape;
  for (Tensor<Real>* t : inputs) {
    t->ensure_grad();
    t->zero_grad();
  }
  Tensor<Real> loss = f(&tape);
  tape.backward(loss);

  GradCheckResult result;
  result.kink_margin = tape.kink_margin();

  std::vector<std::vector<Real>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor<Real>* t : inputs) analytic.push_back(*t->grad);

  for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
    Tensor<Real>* t = inputs[pi];
    for (std::size_t i = 0; i < t->data->size(); ++i) {
      const Real saved = (*t->data)[i];
      (*t->data)[i] = saved + static_cast<Real>(eps);
      const double fp = static_cast<double>((*f(static_cast<Tape<Real>*>(nullptr)).data)[0]);
      (*t->data)[i] = saved - static_cast<Real>(eps);
      const double fm = static_cast<double>((*f(static_cast<Tape<Real>*>(nullptr)).data)[0]);
      (*t->data)[i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(ad), std::abs(fd), rel_floor});
      result.max_rel_err = std::max(result.max_rel_err, std::abs(ad - fd) / denom);
      ++result.elements_checked;
    }
  }
  return result;
}

}  // namespace imvalign
