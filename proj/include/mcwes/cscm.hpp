#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcwes/rng.hpp"
#include "mcwes/tensor.hpp"

namespace mcwes {

/// Cross-modal core-saliency compensation block. Two independent instances
/// exist in the model: one with rgb as the main modality, one with flow.
struct CscmParams {
  Tensor w_main, b_main;  // width-3 conv on the pooled descriptor
  Tensor w_q, b_q;        // width-1 conv producing the attention query
  Tensor w_f, b_f;        // width-1 conv after self-attention
  Tensor w_aux, b_aux;    // width-3 conv on the compensated auxiliary stream

  static CscmParams init(int d, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

/// Channel gate from the temporal mean of the main modality: a D-vector in
/// (0,1), one sigmoid-squashed conv output per channel.
Tensor squeeze_main(const Tensor& x_main, const CscmParams& p);

/// Single-query self-attention over the main modality (no residual shortcut):
/// row-normalized softmax of F_q F_q^T applied to F_q, then a width-1 conv.
Tensor core_saliency(const Tensor& x_main, const CscmParams& p);

/// Full block: the auxiliary stream is compensated with the core saliency of
/// the main stream, gated channel-wise by the squeezed main descriptor, and
/// the resulting (0,1) mask scales the main stream.
Tensor cscm_forward(const Tensor& x_main, const Tensor& x_aux, const CscmParams& p);

/// Xavier-uniform fill for a conv kernel (w x cin x cout) or a matrix; biases
/// are zero-initialized elsewhere. Exposed for reuse by the other parameter
/// groups.
void xavier_fill(Tensor& t, int fan_in, int fan_out, Rng& rng);

}  // namespace mcwes
