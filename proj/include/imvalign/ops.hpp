#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "imvalign/tensor.hpp"

// Dense kernels with forward values and reverse-mode gradients. Every op takes
// the tape as its first argument; pass nullptr for a value-only forward pass
// (inference, finite-difference probes). Gradients accumulate (+=) so a tensor
// consumed twice receives both contributions.

namespace imvalign {

namespace detail {

template <class Real>
inline bool want_track(const Tape<Real>* tape, const Tensor<Real>& a) {
  return tape != nullptr && a.tracked();
}

template <class Real>
inline bool want_track(const Tape<Real>* tape, const Tensor<Real>& a,
                       const Tensor<Real>& b) {
  return tape != nullptr && (a.tracked() || b.tracked());
}

}  // namespace detail

template <class Real>
Tensor<Real> add(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out]() {
      const std::size_t m = out.grad->size();
      if (a.grad)
        for (std::size_t i = 0; i < m; ++i) (*a.grad)[i] += (*out.grad)[i];
      if (b.grad)
        for (std::size_t i = 0; i < m; ++i) (*b.grad)[i] += (*out.grad)[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sub(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out]() {
      const std::size_t m = out.grad->size();
      if (a.grad)
        for (std::size_t i = 0; i < m; ++i) (*a.grad)[i] += (*out.grad)[i];
      if (b.grad)
        for (std::size_t i = 0; i < m; ++i) (*b.grad)[i] -= (*out.grad)[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> mul(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch");
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out]() {
      const std::size_t m = out.grad->size();
      if (a.grad)
        for (std::size_t i = 0; i < m; ++i) (*a.grad)[i] += (*out.grad)[i] * (*b.data)[i];
      if (b.grad)
        for (std::size_t i = 0; i < m; ++i) (*b.grad)[i] += (*out.grad)[i] * (*a.data)[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> scale(Tape<Real>* tape, const Tensor<Real>& a, double c) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const Real cc = static_cast<Real>(c);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * cc;
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, cc]() {
      const std::size_t m = out.grad->size();
      for (std::size_t i = 0; i < m; ++i) (*a.grad)[i] += (*out.grad)[i] * cc;
    });
  }
  return out;
}

template <class Real>
Tensor<Real> matmul(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: operands must be rank 2");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions mismatch");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  const Real* pa = a.ptr();
  const Real* pb = b.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < k; ++t) {
      const Real av = pa[i * k + t];
      for (int j = 0; j < n; ++j) po[i * n + j] += av * pb[t * n + j];
    }
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out, m, k, n]() {
      const Real* g = out.gptr();
      if (a.grad) {
        Real* ga = a.gptr();
        const Real* pb2 = b.ptr();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const Real gv = g[i * n + j];
            for (int t = 0; t < k; ++t) ga[i * k + t] += gv * pb2[t * n + j];
          }
      }
      if (b.grad) {
        Real* gb = b.gptr();
        const Real* pa2 = a.ptr();
        for (int i = 0; i < m; ++i)
          for (int t = 0; t < k; ++t) {
            const Real av = pa2[i * k + t];
            for (int j = 0; j < n; ++j) gb[t * n + j] += av * g[i * n + j];
          }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> transpose(Tape<Real>* tape, const Tensor<Real>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: operand must be rank 2");
  const int m = a.rows(), n = a.cols();
  Tensor<Real> out = Tensor<Real>::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) (*out.data)[j * m + i] = (*a.data)[i * n + j];
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, m, n]() {
      Real* ga = a.gptr();
      const Real* g = out.gptr();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

// Softmax over the last axis of a rank-2 tensor, stabilized by row-max
// subtraction.
template <class Real>
Tensor<Real> row_softmax(Tape<Real>* tape, const Tensor<Real>& a) {
  if (a.rank() != 2) throw DimensionError("row_softmax: operand must be rank 2");
  const int m = a.rows(), n = a.cols();
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  const Real* pa = a.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i) {
    Real mx = pa[i * n];
    for (int j = 1; j < n; ++j) mx = std::max(mx, pa[i * n + j]);
    Real sum = Real(0);
    for (int j = 0; j < n; ++j) {
      const Real e = std::exp(pa[i * n + j] - mx);
      po[i * n + j] = e;
      sum += e;
    }
    for (int j = 0; j < n; ++j) po[i * n + j] /= sum;
  }
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, m, n]() {
      Real* ga = a.gptr();
      const Real* y = out.ptr();
      const Real* g = out.gptr();
      for (int i = 0; i < m; ++i) {
        Real dot = Real(0);
        for (int j = 0; j < n; ++j) dot += y[i * n + j] * g[i * n + j];
        for (int j = 0; j < n; ++j)
          ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
      }
    });
  }
  return out;
}

// Cumulative sum along the last axis; backward is the reverse cumulative sum
// of the incoming gradient.
template <class Real>
Tensor<Real> cumsum_last(Tape<Real>* tape, const Tensor<Real>& a) {
  if (a.rank() < 1) throw DimensionError("cumsum_last: operand must have rank >= 1");
  const int n = a.shape.back();
  const long long outer = n > 0 ? a.numel() / n : 0;
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  for (long long o = 0; o < outer; ++o) {
    const Real* src = a.ptr() + o * n;
    Real* dst = out.ptr() + o * n;
    Real acc = Real(0);
    for (int i = 0; i < n; ++i) {
      acc += src[i];
      dst[i] = acc;
    }
  }
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, n, outer]() {
      Real* ga = a.gptr();
      const Real* g = out.gptr();
      for (long long o = 0; o < outer; ++o) {
        Real acc = Real(0);
        for (int i = n - 1; i >= 0; --i) {
          acc += g[o * n + i];
          ga[o * n + i] += acc;
        }
      }
    });
  }
  return out;
}

// Elementwise max(x, 0); subgradient at 0 is 0.
template <class Real>
Tensor<Real> relu(Tape<Real>* tape, const Tensor<Real>& a) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i)
    (*out.data)[i] = (*a.data)[i] > Real(0) ? (*a.data)[i] : Real(0);
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      margin = std::min(margin, std::abs(static_cast<double>((*a.data)[i])));
    if (n > 0) tape->note_kink_margin(margin);
    tape->record([a, out]() {
      const std::size_t m = out.grad->size();
      for (std::size_t i = 0; i < m; ++i)
        if ((*a.data)[i] > Real(0)) (*a.grad)[i] += (*out.grad)[i];
    });
  }
  return out;
}

// Normalizes the last axis to mean 0 / variance 1 (eps inside the root), then
// applies the affine gain and bias.
template <class Real>
Tensor<Real> layer_norm(Tape<Real>* tape, const Tensor<Real>& a,
                        const Tensor<Real>& gain, const Tensor<Real>& bias,
                        double eps = 1e-5) {
  if (a.rank() < 1) throw DimensionError("layer_norm: operand must have rank >= 1");
  const int d = a.shape.back();
  if (gain.numel() != d || bias.numel() != d)
    throw DimensionError("layer_norm: gain/bias must match last axis");
  const long long outer = a.numel() / d;
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  // cache inverse stddev and normalized values for backward
  auto inv_std = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(outer));
  auto xhat = std::make_shared<std::vector<Real>>(a.data->size());
  const Real* pa = a.ptr();
  const Real* pg = gain.ptr();
  const Real* pb = bias.ptr();
  Real* po = out.ptr();
  for (long long o = 0; o < outer; ++o) {
    const Real* row = pa + o * d;
    Real mean = Real(0);
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= Real(d);
    Real var = Real(0);
    for (int j = 0; j < d; ++j) {
      const Real c = row[j] - mean;
      var += c * c;
    }
    var /= Real(d);
    const Real is = Real(1) / std::sqrt(var + static_cast<Real>(eps));
    (*inv_std)[static_cast<std::size_t>(o)] = is;
    for (int j = 0; j < d; ++j) {
      const Real xh = (row[j] - mean) * is;
      (*xhat)[static_cast<std::size_t>(o * d + j)] = xh;
      po[o * d + j] = pg[j] * xh + pb[j];
    }
  }
  const bool track =
      tape != nullptr && (a.tracked() || gain.tracked() || bias.tracked());
  if (track) {
    out.ensure_grad();
    tape->record([a, gain, bias, out, inv_std, xhat, d, outer]() {
      const Real* g = out.gptr();
      const Real* pg2 = gain.ptr();
      for (long long o = 0; o < outer; ++o) {
        const Real* grow = g + o * d;
        const Real* xrow = xhat->data() + o * d;
        if (gain.grad || bias.grad) {
          for (int j = 0; j < d; ++j) {
            if (gain.grad) (*gain.grad)[j] += grow[j] * xrow[j];
            if (bias.grad) (*bias.grad)[j] += grow[j];
          }
        }
        if (a.grad) {
          // dx = inv_std * (gy - mean(gy) - xhat * mean(gy * xhat))
          Real mean_gy = Real(0), mean_gyx = Real(0);
          for (int j = 0; j < d; ++j) {
            const Real gy = grow[j] * pg2[j];
            mean_gy += gy;
            mean_gyx += gy * xrow[j];
          }
          mean_gy /= Real(d);
          mean_gyx /= Real(d);
          const Real is = (*inv_std)[static_cast<std::size_t>(o)];
          for (int j = 0; j < d; ++j) {
            const Real gy = grow[j] * pg2[j];
            (*a.grad)[o * d + j] += is * (gy - mean_gy - xrow[j] * mean_gyx);
          }
        }
      }
    });
  }
  return out;
}

// 1-D cross-correlation over [T, c_in] with odd kernel and zero padding so the
// output keeps length T.
template <class Real>
Tensor<Real> conv1d_same(Tape<Real>* tape, const Tensor<Real>& a,
                         const Tensor<Real>& w, const Tensor<Real>& b) {
  if (a.rank() != 2) throw DimensionError("conv1d_same: input must be rank 2");
  if (w.rank() != 3) throw DimensionError("conv1d_same: weight must be rank 3");
  const int t_len = a.rows(), c_in = a.cols();
  const int k = w.dim(0);
  if (k % 2 == 0) throw ConfigError("conv1d_same: kernel size must be odd");
  if (w.dim(1) != c_in)
    throw DimensionError("conv1d_same: weight input channels mismatch");
  const int c_out = w.dim(2);
  if (b.numel() != c_out)
    throw DimensionError("conv1d_same: bias size mismatch");
  const int h = (k - 1) / 2;
  Tensor<Real> out = Tensor<Real>::zeros({t_len, c_out});
  const Real* pa = a.ptr();
  const Real* pw = w.ptr();
  const Real* pb = b.ptr();
  Real* po = out.ptr();
  for (int t = 0; t < t_len; ++t) {
    for (int o = 0; o < c_out; ++o) po[t * c_out + o] = pb[o];
    for (int u = 0; u < k; ++u) {
      const int s = t + u - h;
      if (s < 0 || s >= t_len) continue;
      for (int ci = 0; ci < c_in; ++ci) {
        const Real xv = pa[s * c_in + ci];
        const Real* wrow = pw + (u * c_in + ci) * c_out;
        for (int o = 0; o < c_out; ++o) po[t * c_out + o] += xv * wrow[o];
      }
    }
  }
  const bool track =
      tape != nullptr && (a.tracked() || w.tracked() || b.tracked());
  if (track) {
    out.ensure_grad();
    tape->record([a, w, b, out, t_len, c_in, c_out, k, h]() {
      const Real* g = out.gptr();
      for (int t = 0; t < t_len; ++t) {
        const Real* grow = g + t * c_out;
        if (b.grad)
          for (int o = 0; o < c_out; ++o) (*b.grad)[o] += grow[o];
        for (int u = 0; u < k; ++u) {
          const int s = t + u - h;
          if (s < 0 || s >= t_len) continue;
          for (int ci = 0; ci < c_in; ++ci) {
            const std::size_t widx = static_cast<std::size_t>((u * c_in + ci) * c_out);
            if (w.grad) {
              const Real xv = (*a.data)[s * c_in + ci];
              for (int o = 0; o < c_out; ++o)
                (*w.grad)[widx + o] += xv * grow[o];
            }
            if (a.grad) {
              Real acc = Real(0);
              for (int o = 0; o < c_out; ++o)
                acc += (*w.data)[widx + o] * grow[o];
              (*a.grad)[s * c_in + ci] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

// Mean over positions of -log softmax(logits)[target]. With label smoothing,
// the target distribution mixes (1-s) one-hot with s/V uniform.
template <class Real>
Tensor<Real> cross_entropy(Tape<Real>* tape, const Tensor<Real>& logits,
                           const std::vector<int>& targets,
                           double label_smoothing = 0.0) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be rank 2");
  const int l_len = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != l_len)
    throw DimensionError("cross_entropy: target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= v) throw IndexError("cross_entropy: target id out of vocabulary");
  const Real s = static_cast<Real>(label_smoothing);
  auto probs = std::make_shared<std::vector<Real>>(logits.data->size());
  const Real* pz = logits.ptr();
  Real loss = Real(0);
  for (int i = 0; i < l_len; ++i) {
    const Real* row = pz + i * v;
    Real mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real sum = Real(0);
    for (int j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    const Real lse = mx + std::log(sum);
    for (int j = 0; j < v; ++j)
      (*probs)[static_cast<std::size_t>(i * v + j)] = std::exp(row[j] - lse);
    // sum_j q_j * (lse - z_j) with q = (1-s)*onehot + s/V
    Real row_loss = lse - row[targets[static_cast<std::size_t>(i)]];
    if (s > Real(0)) {
      Real mean_z = Real(0);
      for (int j = 0; j < v; ++j) mean_z += row[j];
      mean_z /= Real(v);
      row_loss = (Real(1) - s) * row_loss + s * (lse - mean_z);
    }
    loss += row_loss;
  }
  loss /= Real(l_len);
  Tensor<Real> out = Tensor<Real>::scalar(loss);
  if (detail::want_track(tape, logits)) {
    out.ensure_grad();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    tape->record([logits, out, probs, tgt, l_len, v, s]() {
      const Real g = (*out.grad)[0] / Real(l_len);
      const Real uniform = s / Real(v);
      for (int i = 0; i < l_len; ++i)
        for (int j = 0; j < v; ++j) {
          Real q = uniform;
          if (j == (*tgt)[static_cast<std::size_t>(i)]) q += Real(1) - s;
          (*logits.grad)[i * v + j] +=
              g * ((*probs)[static_cast<std::size_t>(i * v + j)] - q);
        }
    });
  }
  return out;
}

// Mean of squared differences.
template <class Real>
Tensor<Real> mse(Tape<Real>* tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (!a.same_shape(b)) throw DimensionError("mse: shape mismatch");
  const std::size_t n = a.data->size();
  if (n == 0) throw DimensionError("mse: empty operands");
  Real acc = Real(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Real d = (*a.data)[i] - (*b.data)[i];
    acc += d * d;
  }
  Tensor<Real> out = Tensor<Real>::scalar(acc / Real(n));
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out, n]() {
      const Real g = (*out.grad)[0] * Real(2) / Real(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Real d = (*a.data)[i] - (*b.data)[i];
        if (a.grad) (*a.grad)[i] += g * d;
        if (b.grad) (*b.grad)[i] -= g * d;
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> sum(Tape<Real>* tape, const Tensor<Real>& a) {
  Real acc = Real(0);
  for (Real v : *a.data) acc += v;
  Tensor<Real> out = Tensor<Real>::scalar(acc);
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out]() {
      const Real g = (*out.grad)[0];
      for (std::size_t i = 0; i < a.grad->size(); ++i) (*a.grad)[i] += g;
    });
  }
  return out;
}

// View with a new shape; shares both planes, so no backward step is needed.
template <class Real>
Tensor<Real> reshape(Tape<Real>* tape, const Tensor<Real>& a,
                     std::vector<int> new_shape) {
  if (Tensor<Real>::numel_of(new_shape) != a.numel())
    throw DimensionError("reshape: element count mismatch");
  Tensor<Real> out;
  out.shape = std::move(new_shape);
  out.data = a.data;
  if (detail::want_track(tape, a)) out.grad = a.grad;
  return out;
}

// out[i] = a[i+1] - a[i]
template <class Real>
Tensor<Real> adjacent_diff(Tape<Real>* tape, const Tensor<Real>& a) {
  if (a.rank() != 1) throw DimensionError("adjacent_diff: operand must be rank 1");
  const int n = a.dim(0);
  if (n < 1) throw DimensionError("adjacent_diff: operand must be non-empty");
  Tensor<Real> out = Tensor<Real>::zeros({n - 1});
  for (int i = 0; i + 1 < n; ++i) (*out.data)[i] = (*a.data)[i + 1] - (*a.data)[i];
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, n]() {
      for (int i = 0; i + 1 < n; ++i) {
        (*a.grad)[i + 1] += (*out.grad)[i];
        (*a.grad)[i] -= (*out.grad)[i];
      }
    });
  }
  return out;
}

// [a_0..a_{n-1}] -> [0, a_0, ..., a_{n-1}]
template <class Real>
Tensor<Real> pad_front_zero(Tape<Real>* tape, const Tensor<Real>& a) {
  if (a.rank() != 1) throw DimensionError("pad_front_zero: operand must be rank 1");
  const int n = a.dim(0);
  Tensor<Real> out = Tensor<Real>::zeros({n + 1});
  for (int i = 0; i < n; ++i) (*out.data)[i + 1] = (*a.data)[i];
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, n]() {
      for (int i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i + 1];
    });
  }
  return out;
}

// out[i,j] = a[i] - b[j]
template <class Real>
Tensor<Real> outer_sub(Tape<Real>* tape, const Tensor<Real>& a,
                       const Tensor<Real>& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw DimensionError("outer_sub: operands must be rank 1");
  const int m = a.dim(0), n = b.dim(0);
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      (*out.data)[i * n + j] = (*a.data)[i] - (*b.data)[j];
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out, m, n]() {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const Real g = (*out.grad)[i * n + j];
          if (a.grad) (*a.grad)[i] += g;
          if (b.grad) (*b.grad)[j] -= g;
        }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> square(Tape<Real>* tape, const Tensor<Real>& a) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*a.data)[i];
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out]() {
      for (std::size_t i = 0; i < a.grad->size(); ++i)
        (*a.grad)[i] += Real(2) * (*a.data)[i] * (*out.grad)[i];
    });
  }
  return out;
}

// |x| + c, subgradient of |x| at 0 is 0.
template <class Real>
Tensor<Real> abs_add(Tape<Real>* tape, const Tensor<Real>& a, double c) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const Real cc = static_cast<Real>(c);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i)
    (*out.data)[i] = std::abs((*a.data)[i]) + cc;
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      margin = std::min(margin, std::abs(static_cast<double>((*a.data)[i])));
    if (n > 0) tape->note_kink_margin(margin);
    tape->record([a, out]() {
      for (std::size_t i = 0; i < a.grad->size(); ++i) {
        const Real x = (*a.data)[i];
        const Real sign = x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0));
        (*a.grad)[i] += sign * (*out.grad)[i];
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> reciprocal(Tape<Real>* tape, const Tensor<Real>& a) {
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = Real(1) / (*a.data)[i];
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out]() {
      for (std::size_t i = 0; i < a.grad->size(); ++i) {
        const Real y = (*out.data)[i];
        (*a.grad)[i] -= y * y * (*out.grad)[i];
      }
    });
  }
  return out;
}

// Broadcast multiply by a one-element tensor (the scalar keeps its gradient).
template <class Real>
Tensor<Real> scale_by(Tape<Real>* tape, const Tensor<Real>& a,
                      const Tensor<Real>& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: scalar must have one element");
  Tensor<Real> out = Tensor<Real>::zeros(a.shape);
  const Real sv = (*s.data)[0];
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * sv;
  if (detail::want_track(tape, a, s)) {
    out.ensure_grad();
    tape->record([a, s, out, sv]() {
      const std::size_t m = out.grad->size();
      if (a.grad)
        for (std::size_t i = 0; i < m; ++i) (*a.grad)[i] += (*out.grad)[i] * sv;
      if (s.grad) {
        Real acc = Real(0);
        for (std::size_t i = 0; i < m; ++i) acc += (*out.grad)[i] * (*a.data)[i];
        (*s.grad)[0] += acc;
      }
    });
  }
  return out;
}

// Adds a row vector to every row of a rank-2 tensor (bias add).
template <class Real>
Tensor<Real> add_row(Tape<Real>* tape, const Tensor<Real>& a,
                     const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 1)
    throw DimensionError("add_row: expected rank-2 plus rank-1");
  const int m = a.rows(), n = a.cols();
  if (b.dim(0) != n) throw DimensionError("add_row: row size mismatch");
  Tensor<Real> out = Tensor<Real>::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      (*out.data)[i * n + j] = (*a.data)[i * n + j] + (*b.data)[j];
  if (detail::want_track(tape, a, b)) {
    out.ensure_grad();
    tape->record([a, b, out, m, n]() {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const Real g = (*out.grad)[i * n + j];
          if (a.grad) (*a.grad)[i * n + j] += g;
          if (b.grad) (*b.grad)[j] += g;
        }
    });
  }
  return out;
}

// Row gather: out[l] = table[ids[l]]; backward scatter-adds duplicate ids.
template <class Real>
Tensor<Real> embedding(Tape<Real>* tape, const Tensor<Real>& table,
                       const std::vector<int>& ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2");
  const int v = table.rows(), d = table.cols();
  const int l_len = static_cast<int>(ids.size());
  for (int id : ids)
    if (id < 0 || id >= v) throw IndexError("embedding: token id out of vocabulary");
  Tensor<Real> out = Tensor<Real>::zeros({l_len, d});
  for (int l = 0; l < l_len; ++l)
    for (int j = 0; j < d; ++j)
      (*out.data)[l * d + j] = (*table.data)[ids[static_cast<std::size_t>(l)] * d + j];
  if (detail::want_track(tape, table)) {
    out.ensure_grad();
    auto idv = std::make_shared<std::vector<int>>(ids);
    tape->record([table, out, idv, l_len, d]() {
      for (int l = 0; l < l_len; ++l)
        for (int j = 0; j < d; ++j)
          (*table.grad)[(*idv)[static_cast<std::size_t>(l)] * d + j] +=
              (*out.grad)[l * d + j];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> slice_cols(Tape<Real>* tape, const Tensor<Real>& a, int offset,
                        int len) {
  if (a.rank() != 2) throw DimensionError("slice_cols: operand must be rank 2");
  const int m = a.rows(), n = a.cols();
  if (offset < 0 || len <= 0 || offset + len > n)
    throw DimensionError("slice_cols: invalid column range");
  Tensor<Real> out = Tensor<Real>::zeros({m, len});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j)
      (*out.data)[i * len + j] = (*a.data)[i * n + offset + j];
  if (detail::want_track(tape, a)) {
    out.ensure_grad();
    tape->record([a, out, m, n, offset, len]() {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
          (*a.grad)[i * n + offset + j] += (*out.grad)[i * len + j];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> concat_cols(Tape<Real>* tape, const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const int m = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m)
      throw DimensionError("concat_cols: row count mismatch");
    total += p.cols();
  }
  Tensor<Real> out = Tensor<Real>::zeros({m, total});
  int off = 0;
  for (const auto& p : parts) {
    const int n = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        (*out.data)[i * total + off + j] = (*p.data)[i * n + j];
    off += n;
  }
  bool track = false;
  if (tape)
    for (const auto& p : parts) track = track || p.tracked();
  if (track) {
    out.ensure_grad();
    auto parts_copy = std::make_shared<std::vector<Tensor<Real>>>(parts);
    tape->record([parts_copy, out, m, total]() {
      int off2 = 0;
      for (const auto& p : *parts_copy) {
        const int n = p.cols();
        if (p.grad)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              (*p.grad)[i * n + j] += (*out.grad)[i * total + off2 + j];
        off2 += n;
      }
    });
  }
  return out;
}

// ---- value-only helpers (no gradients) ----

template <class Real>
int argmax_row(const Tensor<Real>& a, int row) {
  const int n = a.cols();
  const Real* p = a.ptr() + static_cast<long long>(row) * n;
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

template <class Real>
double row_log_softmax_at(const Tensor<Real>& a, int row, int col) {
  const int n = a.cols();
  const Real* p = a.ptr() + static_cast<long long>(row) * n;
  Real mx = p[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, p[j]);
  Real sum = Real(0);
  for (int j = 0; j < n; ++j) sum += std::exp(p[j] - mx);
  return static_cast<double>(p[col] - mx) - std::log(static_cast<double>(sum));
}

template <class Real>
bool all_finite(const Tensor<Real>& a) {
  for (Real v : *a.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// Fixed sin/cos positional table, untracked constant. `stride` divides the
// position index, letting a sequence advance its phases slower than once per
// step (frame-rate inputs use a stride near the frames-per-token rate).
template <class Real>
Tensor<Real> sinusoidal_positions(int t_len, int d, double stride = 1.0) {
  Tensor<Real> out = Tensor<Real>::zeros({t_len, d});
  for (int t = 0; t < t_len; ++t)
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      const double angle = t / stride * freq;
      (*out.data)[t * d + i] = static_cast<Real>(std::sin(angle));
      if (i + 1 < d) (*out.data)[t * d + i + 1] = static_cast<Real>(std::cos(angle));
    }
  return out;
}

}  // namespace imvalign
