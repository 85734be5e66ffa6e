#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "imvalign/tensor.hpp"

namespace imvalign {

enum class OptimizerKind { adam, sgd };

// Per-parameter-name first/second moment state so it can be checkpointed and
// restored for exact training resumption.
template <class Real>
class Optimizer {
 public:
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm gradient clip; 0 disables. The position-scaling gradient grows
  // like the inverse span, so untrained models see occasional huge spikes.
  double clip_norm = 1.0;

  void step(const std::vector<Parameter<Real>*>& params) {
    ++step_count_;
    if (clip_norm > 0.0) {
      double sq = 0.0;
      for (Parameter<Real>* p : params) {
        if (!p->trainable || !p->tensor.grad) continue;
        for (Real g : *p->tensor.grad) sq += static_cast<double>(g) * g;
      }
      const double norm = std::sqrt(sq);
      if (norm > clip_norm) {
        const Real factor = static_cast<Real>(clip_norm / norm);
        for (Parameter<Real>* p : params) {
          if (!p->trainable || !p->tensor.grad) continue;
          for (Real& g : *p->tensor.grad) g *= factor;
        }
      }
    }
    for (Parameter<Real>* p : params) {
      if (!p->trainable || !p->tensor.grad) continue;
      if (kind == OptimizerKind::sgd) {
        const Real rate = static_cast<Real>(lr);
        for (std::size_t i = 0; i < p->tensor.data->size(); ++i)
          (*p->tensor.data)[i] -= rate * (*p->tensor.grad)[i];
        continue;
      }
      Tensor<Real>& m = moment(m_, *p);
      Tensor<Real>& v = moment(v_, *p);
      const Real b1 = static_cast<Real>(beta1);
      const Real b2 = static_cast<Real>(beta2);
      const Real corr1 =
          Real(1) - static_cast<Real>(std::pow(beta1, static_cast<double>(step_count_)));
      const Real corr2 =
          Real(1) - static_cast<Real>(std::pow(beta2, static_cast<double>(step_count_)));
      const Real rate = static_cast<Real>(lr);
      const Real e = static_cast<Real>(eps);
      for (std::size_t i = 0; i < p->tensor.data->size(); ++i) {
        const Real g = (*p->tensor.grad)[i];
        Real& mi = (*m.data)[i];
        Real& vi = (*v.data)[i];
        mi = b1 * mi + (Real(1) - b1) * g;
        vi = b2 * vi + (Real(1) - b2) * g * g;
        const Real mhat = mi / corr1;
        const Real vhat = vi / corr2;
        (*p->tensor.data)[i] -= rate * mhat / (std::sqrt(vhat) + e);
      }
    }
  }

  static void zero_grads(const std::vector<Parameter<Real>*>& params) {
    for (Parameter<Real>* p : params) p->tensor.zero_grad();
  }

  long long step_count() const { return step_count_; }
  void set_step_count(long long n) { step_count_ = n; }

  std::map<std::string, Tensor<Real>>& first_moments() { return m_; }
  std::map<std::string, Tensor<Real>>& second_moments() { return v_; }
  const std::map<std::string, Tensor<Real>>& first_moments() const { return m_; }
  const std::map<std::string, Tensor<Real>>& second_moments() const { return v_; }

 private:
  Tensor<Real>& moment(std::map<std::string, Tensor<Real>>& store,
                       const Parameter<Real>& p) {
    auto it = store.find(p.name);
    if (it == store.end())
      it = store.emplace(p.name, Tensor<Real>::zeros(p.tensor.shape)).first;
    return it->second;
  }

  long long step_count_ = 0;
  std::map<std::string, Tensor<Real>> m_;
  std::map<std::string, Tensor<Real>> v_;
};

}  // namespace imvalign
