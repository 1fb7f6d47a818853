#include "mcwes/losses.hpp"

#include <cmath>

#include "mcwes/errors.hpp"
#include "mcwes/ops.hpp"
#include "mcwes/pipeline.hpp"

namespace mcwes {

using namespace ops;

namespace {

void check_pooling(const PoolingSpec& spec) {
  if (spec.h.size() != static_cast<size_t>(kNumLogits))
    throw ConfigError("pooling: h must have one divisor per class (3)");
  for (int hi : spec.h)
    if (hi < 1) throw ConfigError("pooling: divisors must be >= 1");
}

void check_logits(const Tensor& s) {
  if (s.rank() != 2 || s.dim(1) != kNumLogits)
    throw std::invalid_argument("losses: logits must be T x 3");
}

/// -sum_i y_i log softmax(u)_i, through log-softmax for stability.
Tensor cross_entropy(const Tensor& u, std::vector<double> y) {
  Tensor target = Tensor::from_data({kNumLogits}, std::move(y));
  return scale(dot(target, log_softmax(u)), -1.0);
}

}  // namespace

std::pair<Tensor, Tensor> topk_pool(const Tensor& s, const PoolingSpec& spec) {
  check_pooling(spec);
  check_logits(s);
  const int t = s.dim(0);
  std::vector<int> ks(static_cast<size_t>(kNumLogits));
  for (int i = 0; i < kNumLogits; ++i)
    ks[static_cast<size_t>(i)] = std::max(1, t / spec.h[static_cast<size_t>(i)]);
  Tensor u = topk_col_mean(s, ks);
  return {u, softmax(u, 0)};
}

Tensor loss_dc1(const Tensor& s, const VideoLabels& y, const PoolingSpec& spec) {
  auto [u, p] = topk_pool(s, spec);
  return cross_entropy(u, {y.mae ? 1.0 : 0.0, y.me ? 1.0 : 0.0, 1.0});
}

Tensor suppress(const Tensor& s, const Tensor& a) {
  check_logits(s);
  return mul_colvec(s, a);
}

Tensor loss_dc2(const Tensor& s_hat, const VideoLabels& y, const PoolingSpec& spec) {
  auto [u, p] = topk_pool(s_hat, spec);
  return cross_entropy(u, {y.mae ? 1.0 : 0.0, y.me ? 1.0 : 0.0, 0.0});
}

std::vector<double> duration_mask(const Tensor& a, const DurationMaskSpec& spec) {
  if (a.rank() != 1) throw std::invalid_argument("duration_mask: attention must be 1D");
  if (spec.eta < 1) throw ConfigError("duration mask: eta must be >= 1");
  if (!(0.0 < spec.omega_l && spec.omega_l < spec.omega_u))
    throw ConfigError("duration mask: need 0 < omega_l < omega_u");
  const int t = a.dim(0);
  if (t <= spec.eta)
    throw ConfigError("duration mask: sequence length " + std::to_string(t) +
                      " must exceed window eta=" + std::to_string(spec.eta));

  // Window means, then absolute deviations between neighboring windows;
  // computed on plain values so no gradient ever flows through the mask.
  const int n_q = t - spec.eta + 1;
  std::vector<double> q(static_cast<size_t>(n_q));
  for (int j = 0; j < n_q; ++j) {
    double acc = 0.0;
    for (int i = 0; i < spec.eta; ++i) acc += a.at(j + i);
    q[static_cast<size_t>(j)] = acc / spec.eta;
  }
  const int n_d = n_q - 1;  // == t - eta >= 1
  std::vector<double> delta(static_cast<size_t>(n_d));
  double mean_delta = 0.0;
  for (int j = 0; j < n_d; ++j) {
    delta[static_cast<size_t>(j)] = std::fabs(q[static_cast<size_t>(j) + 1] - q[static_cast<size_t>(j)]);
    mean_delta += delta[static_cast<size_t>(j)];
  }
  mean_delta /= n_d;

  std::vector<double> mask(static_cast<size_t>(t), 1.0);
  const double lo = spec.omega_l * mean_delta, hi = spec.omega_u * mean_delta;
  for (int j = 0; j < n_d; ++j)
    if (lo < delta[static_cast<size_t>(j)] && delta[static_cast<size_t>(j)] < hi)
      mask[static_cast<size_t>(j)] = 0.0;
  return mask;
}

Tensor loss_dc3(const Tensor& s, const std::vector<double>& mask,
                const VideoLabels& y, const PoolingSpec& spec) {
  check_logits(s);
  if (static_cast<int>(mask.size()) != s.dim(0))
    throw std::invalid_argument("loss_dc3: mask length must equal T");
  Tensor m = Tensor::from_data({s.dim(0)}, mask);
  auto [u, p] = topk_pool(mul_colvec(s, m), spec);
  return cross_entropy(u, {y.mae ? 1.0 : 0.0, 0.0, 1.0});
}

Tensor feature_consistency(const std::vector<std::pair<FcVideo, FcVideo>>& pairs,
                           const PoolingSpec& spec,
                           std::vector<std::string>* warnings) {
  check_pooling(spec);
  const int h_mae = spec.h[0];
  int n_shared = 0;
  Tensor total = Tensor::scalar(0.0);

  for (size_t pi = 0; pi < pairs.size(); ++pi) {
    const FcVideo& v1 = pairs[pi].first;
    const FcVideo& v2 = pairs[pi].second;
    const bool shared_mae = v1.labels.mae && v2.labels.mae;
    const bool shared_me = v1.labels.me && v2.labels.me;
    if (!shared_mae && !shared_me) {
      if (warnings)
        warnings->push_back("feature consistency: pair " + std::to_string(pi) +
                            " shares no positive label; skipped");
      continue;
    }
    n_shared += (shared_mae ? 1 : 0) + (shared_me ? 1 : 0);

    auto one_direction = [&](const FcVideo& src, const FcVideo& dst) {
      const int k = std::max(1, src.a.dim(0) / h_mae);
      const std::vector<int> idx = topk_indices(src.a.data(), k);
      Tensor u_sel = slice_cols(gather_rows(src.s, idx), 0, kNumClasses);  // k x n
      Tensor f_sel = gather_rows(src.fused, idx);                          // k x D
      Tensor w = softmax(u_sel, 1);
      Tensor den = sum(dst.a);
      for (int cls = 0; cls < kNumClasses; ++cls) {
        if (!(cls == 0 ? shared_mae : shared_me)) continue;
        Tensor fs = mul_colvec(f_sel, column(w, cls));        // k x D
        Tensor sim = matmul(fs, transpose(dst.fused));        // k x T
        Tensor ms = max_over_axis0(softmax(sim, 0));          // T
        total = add(total, div_by_scalar(dot(dst.a, ms), den));
      }
    };
    one_direction(v1, v2);
    one_direction(v2, v1);
  }

  if (n_shared == 0) {
    if (warnings)
      warnings->push_back("feature consistency: no valid pairs in batch; loss set to 0");
    return Tensor::scalar(0.0);
  }
  return affine(total, -1.0 / (2.0 * n_shared), 1.0);
}

Tensor loss_sc(const Tensor& a_rgb, const Tensor& a_flow) {
  if (a_rgb.shape() != a_flow.shape())
    throw std::invalid_argument("loss_sc: attention shapes must match");
  const int t = a_rgb.dim(0);
  Tensor d1 = sub(a_rgb, stop_gradient(a_flow));
  Tensor d2 = sub(stop_gradient(a_rgb), a_flow);
  return scale(add(sum(mul(d1, d1)), sum(mul(d2, d2))), 1.0 / (2.0 * t));
}

Tensor loss_sl(const Tensor& a, const Tensor& a_rgb, const Tensor& a_flow) {
  const int t = a.dim(0);
  return scale(add(add(l1_norm(a), l1_norm(a_rgb)), l1_norm(a_flow)),
               1.0 / (3.0 * t));
}

Tensor loss_gl(const Tensor& s, const Tensor& a, const Tensor& a_rgb,
               const Tensor& a_flow) {
  check_logits(s);
  const int t = s.dim(0);
  if (a.rank() != 1 || a.dim(0) != t)
    throw std::invalid_argument("loss_gl: attention length must match logits");
  Tensor p_fg = affine(column(softmax(s, 1), kBackgroundCol), -1.0, 1.0);
  Tensor acc = add(add(l1_norm(sub(p_fg, a)), l1_norm(sub(p_fg, a_rgb))),
                   l1_norm(sub(p_fg, a_flow)));
  return scale(acc, 1.0 / (3.0 * t));
}

Tensor joint_loss(const Tensor& l_sc, const Tensor& l_dc1, const Tensor& l_dc2,
                  const Tensor& l_dc3, const Tensor& l_fc, const Tensor& l_sl,
                  const Tensor& l_gl, const LossWeights& w) {
  Tensor out = add(add(l_sc, l_dc1), l_dc2);
  out = add(out, scale(l_dc3, w.lambda1));
  out = add(out, scale(l_fc, w.lambda2));
  out = add(out, scale(l_sl, w.lambda3));
  out = add(out, scale(l_gl, w.lambda4));
  return out;
}

}  // namespace mcwes
