#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcwes/tensor.hpp"

namespace mcwes {

/// Per-class top-k divisors, order [mae, me, background]: k_i = max(1, T/h_i).
struct PoolingSpec {
  std::vector<int> h = {7, 9, 5};
};

struct DurationMaskSpec {
  int eta = 2;          // window length in snippets
  double omega_l = 1.2;
  double omega_u = 1.4;
};

struct LossWeights {
  double lambda1 = 0.5;  // duration-masked distribution term
  double lambda2 = 0.5;  // feature consistency
  double lambda3 = 0.8;  // sparsity
  double lambda4 = 0.8;  // guide
};

struct VideoLabels {
  bool mae = false;
  bool me = false;
};

/// Pools each logit column to the mean of its k_i largest entries (u) and
/// normalizes across classes (p). Gradient reaches only the selected entries.
std::pair<Tensor, Tensor> topk_pool(const Tensor& s, const PoolingSpec& spec);

/// Video-level cross-entropy on raw logits; background target forced to 1.
Tensor loss_dc1(const Tensor& s, const VideoLabels& y, const PoolingSpec& spec);

/// S with each snippet row scaled by its attention score.
Tensor suppress(const Tensor& s, const Tensor& a);

/// Cross-entropy on attention-suppressed logits; background target 0.
Tensor loss_dc2(const Tensor& s_hat, const VideoLabels& y, const PoolingSpec& spec);

/// Binary snippet mask from sliding-window attention deviations: positions
/// whose deviation falls strictly inside (omega_l * mean, omega_u * mean) are
/// zeroed; trailing positions with no deviation defined stay 1. Pure values
/// (no gradient). Throws ConfigError when T <= eta.
std::vector<double> duration_mask(const Tensor& a, const DurationMaskSpec& spec);

/// Cross-entropy on mask-suppressed logits; micro target dropped, background 1.
Tensor loss_dc3(const Tensor& s, const std::vector<double>& mask,
                const VideoLabels& y, const PoolingSpec& spec);

/// One video's contribution to the pairwise feature-consistency term.
struct FcVideo {
  Tensor s;       // T x 3 raw logits
  Tensor fused;   // T x D fused features
  Tensor a;       // T attention scores
  VideoLabels labels;
};

/// Pairwise co-activity similarity over both directions of every pair. Pairs
/// without a shared positive label are skipped with a warning; when nothing
/// remains the loss is defined as 0 (constant). k per direction is the source
/// video's mae sampling rate max(1, T/h_mae).
Tensor feature_consistency(const std::vector<std::pair<FcVideo, FcVideo>>& pairs,
                           const PoolingSpec& spec,
                           std::vector<std::string>* warnings);

/// Mutual mean-squared attention agreement with cross-detached targets.
Tensor loss_sc(const Tensor& a_rgb, const Tensor& a_flow);

/// Mean L1 sparsity of the three attention tracks.
Tensor loss_sl(const Tensor& a, const Tensor& a_rgb, const Tensor& a_flow);

/// Pulls all three attention tracks toward the per-snippet foreground
/// probability 1 - p_background, where p is the row-wise class softmax of the
/// raw logits s (T x 3).
Tensor loss_gl(const Tensor& s, const Tensor& a, const Tensor& a_rgb,
               const Tensor& a_flow);

/// L_sc + L_dc1 + L_dc2 + l1*L_dc3 + l2*L_fc + l3*L_sl + l4*L_gl.
Tensor joint_loss(const Tensor& l_sc, const Tensor& l_dc1, const Tensor& l_dc2,
                  const Tensor& l_dc3, const Tensor& l_fc, const Tensor& l_sl,
                  const Tensor& l_gl, const LossWeights& w);

}  // namespace mcwes
