#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcwes/cscm.hpp"
#include "mcwes/rng.hpp"
#include "mcwes/tensor.hpp"

namespace mcwes {

inline constexpr int kNumClasses = 2;  // macro, micro
inline constexpr int kNumLogits = kNumClasses + 1;
inline constexpr int kBackgroundCol = kNumClasses;  // background stored last

struct AttentionHeadParams {
  Tensor w1, b1;  // width-3 conv D -> H
  Tensor w2, b2;  // width-1 conv H -> 1
  int hidden = 0;

  static AttentionHeadParams init(int d, int hidden, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

struct FusionClassifierParams {
  Tensor w_fuse, b_fuse;  // width-1 conv 2D -> D
  Tensor w_cls, b_cls;    // width-1 conv D -> 3

  static FusionClassifierParams init(int d, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named() const;
};

struct ModelParams {
  CscmParams cscm_rgb, cscm_flow;
  AttentionHeadParams attn_rgb, attn_flow;
  FusionClassifierParams fusecls;
  double attn_dropout = 0.5;
  double cls_dropout = 0.7;

  /// Initialization order is fixed so a given rng seed always yields the same
  /// parameters.
  static ModelParams init(int d, int attention_hidden, Rng& rng);

  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Same tensors in the same order as named(); the optimizer keys moments by
  /// position.
  std::vector<Tensor> tensors() const;
  /// Replaces parameter values from a checkpoint snapshot. Throws DataError on
  /// unknown names, missing parameters or shape mismatches.
  void load_named(const std::vector<std::pair<std::string, Tensor>>& snapshot);
};

/// Per-snippet foreground probability in (0,1): conv -> ReLU -> (train-time
/// dropout) -> conv -> sigmoid.
Tensor attention_head(const Tensor& o, const AttentionHeadParams& p,
                      double dropout_rate, bool training, Rng& rng);

struct ForwardOutputs {
  Tensor o_rgb, o_flow;      // T x D enhanced modal features
  Tensor a_rgb, a_flow, a;   // T, attention scores; a is their mean
  Tensor fused;              // T x D
  Tensor s;                  // T x 3 class logits, background last
};

/// Whole-model forward pass. The seed fixes the train-time dropout masks
/// (consumed in a fixed order), so the pass is a pure function of
/// (inputs, params, training, seed).
ForwardOutputs forward(const Tensor& x_rgb, const Tensor& x_flow,
                       const ModelParams& params, bool training, uint64_t seed);

}  // namespace mcwes
