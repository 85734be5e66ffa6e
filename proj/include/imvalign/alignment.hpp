#pragma once

#include <cmath>
#include <vector>

#include "imvalign/ops.hpp"
#include "imvalign/tensor.hpp"

// Monotonic alignment generator and distance-aware attention reconstruction.
// The generator turns acoustic/text embeddings into per-frame alignment
// increments; the reconstruction turns increments back into a frame-to-token
// attention matrix via a squared-distance Gaussian kernel normalized over
// frames. Everything is differentiable end to end, including sigma.

namespace imvalign {

template <class Real>
struct AlignmentBundle {
  Tensor<Real> alpha;       // [T,L] frame-to-token attention, rows sum to 1
  Tensor<Real> imv;         // [T]   expected token position per frame
  Tensor<Real> increments;  // [T-1] raw position increments between frames
  Tensor<Real> delta;       // [T]   clipped increments, delta[0] == 0
};

template <class Real>
struct ReconstructionBundle {
  Tensor<Real> positions_raw;  // [T]   accumulated increments
  Tensor<Real> positions;      // [T]   scaled to span 0..L-1
  Tensor<Real> index_vector;   // [L]   0..L-1
  Tensor<Real> distances;      // [T,L] squared frame/token distances
  Tensor<Real> alpha_hat;      // [T,L] reconstructed attention, columns sum to 1
  Tensor<Real> sigma;          // [1]   raw kernel-width parameter value
};

// DegenerateAlignment fires below this cumulative-position span.
inline constexpr double kDegenerateSpan = 1e-6;

// Relative epsilon for the span normalization. Relative (not absolute) so a
// uniform positive rescaling of the increments leaves the scaled positions
// unchanged to machine precision.
inline constexpr double kSpanEpsilon = 1e-8;

// Width offset keeping the Gaussian kernel positive for any raw sigma.
inline constexpr double kSigmaFloor = 1e-4;

// alpha[i,j] = softmax_j(e_s[i] . e_t[j] / sqrt(d))
template <class Real>
Tensor<Real> compute_attention(Tape<Real>* tape, const Tensor<Real>& e_s,
                               const Tensor<Real>& e_t) {
  if (e_s.rank() != 2 || e_t.rank() != 2)
    throw DimensionError("compute_attention: embeddings must be rank 2");
  if (e_s.cols() != e_t.cols())
    throw DimensionError("compute_attention: embedding dims mismatch");
  const int d = e_s.cols();
  Tensor<Real> logits = matmul(tape, e_s, transpose(tape, e_t));
  logits = scale(tape, logits, 1.0 / std::sqrt(static_cast<double>(d)));
  return row_softmax(tape, logits);
}

// p = alpha . [0,1,...,L-1]
template <class Real>
Tensor<Real> compute_imv(Tape<Real>* tape, const Tensor<Real>& alpha) {
  if (alpha.rank() != 2) throw DimensionError("compute_imv: alpha must be rank 2");
  const int t_len = alpha.rows(), l_len = alpha.cols();
  Tensor<Real> index_col = reshape(tape, Tensor<Real>::iota(l_len), {l_len, 1});
  Tensor<Real> p = matmul(tape, alpha, index_col);
  return reshape(tape, p, {t_len});
}

// delta[0] = 0, delta[i] = max(p[i] - p[i-1], 0)
template <class Real>
Tensor<Real> imv_increments(Tape<Real>* tape, const Tensor<Real>& p) {
  return pad_front_zero(tape, relu(tape, adjacent_diff(tape, p)));
}

template <class Real>
Tensor<Real> accumulate_positions(Tape<Real>* tape, const Tensor<Real>& delta) {
  if (delta.rank() != 1)
    throw DimensionError("accumulate_positions: delta must be rank 1");
  return cumsum_last(tape, delta);
}

// Maps accumulated positions onto 0..L-1:
//   scaled[i] = (p[i] - p[0]) / span * (L-1) / (1 + kSpanEpsilon)
// Throws DegenerateAlignment when the span collapses (all increments clipped,
// typically an untrained generator); callers decide the fallback.
template <class Real>
Tensor<Real> scale_positions(Tape<Real>* tape, const Tensor<Real>& p_raw,
                             int token_count) {
  if (p_raw.rank() != 1)
    throw DimensionError("scale_positions: positions must be rank 1");
  const int t_len = p_raw.dim(0);
  if (t_len < 2) throw InputError("scale_positions: need at least two frames");
  if (token_count < 1) throw InputError("scale_positions: token count must be >= 1");
  const Real first = (*p_raw.data)[0];
  const Real last = (*p_raw.data)[static_cast<std::size_t>(t_len - 1)];
  const double span = static_cast<double>(last - first);
  if (span <= kDegenerateSpan) throw DegenerateAlignment(span);

  const Real coeff = static_cast<Real>(
      static_cast<double>(token_count - 1) / (1.0 + kSpanEpsilon));
  const Real inv_span = Real(1) / (last - first);
  Tensor<Real> out = Tensor<Real>::zeros({t_len});
  for (int i = 0; i < t_len; ++i)
    (*out.data)[i] = ((*p_raw.data)[i] - first) * inv_span * coeff;

  if (detail::want_track(tape, p_raw)) {
    out.ensure_grad();
    tape->record([p_raw, out, t_len, first, inv_span, coeff]() {
      // With u_i = p[i] - p[0] and s = p[T-1] - p[0]:
      //   d out_i / d p_j = coeff/s * ([i==j] - [j==0])
      //                   - coeff*u_i/s^2 * ([j==T-1] - [j==0])
      Real grad_sum = Real(0), grad_u_sum = Real(0);
      for (int i = 0; i < t_len; ++i) {
        const Real g = (*out.grad)[i];
        grad_sum += g;
        grad_u_sum += g * ((*p_raw.data)[i] - first);
      }
      for (int i = 0; i < t_len; ++i)
        (*p_raw.grad)[i] += coeff * inv_span * (*out.grad)[i];
      (*p_raw.grad)[0] +=
          coeff * inv_span * (-grad_sum + grad_u_sum * inv_span);
      (*p_raw.grad)[static_cast<std::size_t>(t_len - 1)] -=
          coeff * inv_span * inv_span * grad_u_sum;
    });
  }
  return out;
}

// alpha_hat[i,j] = exp(-w * d_ij) / sum_i exp(-w * d_ij) with
// d_ij = (positions[i] - j)^2 and w = 1/(|sigma| + kSigmaFloor)^2.
// Normalization runs over frames, so columns sum to 1 (rows need not).
template <class Real>
ReconstructionBundle<Real> reconstruct_attention(Tape<Real>* tape,
                                                 const Tensor<Real>& positions,
                                                 int token_count,
                                                 const Tensor<Real>& sigma) {
  if (positions.rank() != 1)
    throw DimensionError("reconstruct_attention: positions must be rank 1");
  if (sigma.numel() != 1)
    throw DimensionError("reconstruct_attention: sigma must have one element");
  const int t_len = positions.dim(0);
  ReconstructionBundle<Real> bundle;
  bundle.positions = positions;
  bundle.sigma = sigma;
  bundle.index_vector = Tensor<Real>::iota(token_count);

  Tensor<Real> diff = outer_sub(tape, positions, bundle.index_vector);
  bundle.distances = square(tape, diff);

  Tensor<Real> width = abs_add(tape, sigma, kSigmaFloor);
  Tensor<Real> neg_inv_width2 =
      scale(tape, reciprocal(tape, square(tape, width)), -1.0);
  Tensor<Real> scores = scale_by(tape, bundle.distances, neg_inv_width2);

  // column-normalize: softmax over frames, stabilized by per-column max
  Tensor<Real> by_token = transpose(tape, scores);           // [L,T]
  Tensor<Real> norm = row_softmax(tape, by_token);           // rows sum to 1
  bundle.alpha_hat = transpose(tape, norm);                  // [T,L]
  (void)t_len;
  return bundle;
}

template <class Real>
struct GeneratorOutput {
  AlignmentBundle<Real> alignment;
  ReconstructionBundle<Real> reconstruction;
  Tensor<Real> semantic;  // [L,d] = alpha_hat^T . e_s
};

// Full composition: attention -> expected positions -> clipped increments ->
// accumulation -> scaling -> reconstruction -> semantic encodings.
template <class Real>
GeneratorOutput<Real> generator_forward(Tape<Real>* tape, const Tensor<Real>& e_s,
                                        const Tensor<Real>& e_t,
                                        const Tensor<Real>& sigma) {
  GeneratorOutput<Real> out;
  const int l_len = e_t.rows();
  out.alignment.alpha = compute_attention(tape, e_s, e_t);
  out.alignment.imv = compute_imv(tape, out.alignment.alpha);
  out.alignment.increments = adjacent_diff(tape, out.alignment.imv);
  out.alignment.delta =
      pad_front_zero(tape, relu(tape, out.alignment.increments));

  Tensor<Real> p_raw = accumulate_positions(tape, out.alignment.delta);
  Tensor<Real> p_hat = scale_positions(tape, p_raw, l_len);
  out.reconstruction = reconstruct_attention(tape, p_hat, l_len, sigma);
  out.reconstruction.positions_raw = p_raw;

  out.semantic = matmul(tape, transpose(tape, out.reconstruction.alpha_hat), e_s);
  return out;
}

}  // namespace imvalign
