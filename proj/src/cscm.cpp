#include "mcwes/cscm.hpp"

#include <cmath>

#include "mcwes/ops.hpp"

namespace mcwes {

using namespace ops;

void xavier_fill(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  // Glorot bound shrunk 4x: Adam's per-entry steps are lr-sized regardless of
  // gradient scale, so a smaller start lets short training budgets rewrite
  // weight directions instead of fighting the random initialization.
  const double limit = 0.25 * std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
}

namespace {

Tensor conv_kernel(int w, int cin, int cout, Rng& rng) {
  Tensor k = Tensor::zeros({w, cin, cout}, true);
  xavier_fill(k, w * cin, w * cout, rng);
  return k;
}

}  // namespace

CscmParams CscmParams::init(int d, Rng& rng) {
  CscmParams p;
  p.w_main = conv_kernel(3, d, d, rng);
  p.b_main = Tensor::zeros({d}, true);
  p.w_q = conv_kernel(1, d, d, rng);
  p.b_q = Tensor::zeros({d}, true);
  p.w_f = conv_kernel(1, d, d, rng);
  p.b_f = Tensor::zeros({d}, true);
  p.w_aux = conv_kernel(3, d, d, rng);
  p.b_aux = Tensor::zeros({d}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> CscmParams::named(
    const std::string& prefix) const {
  return {{prefix + "/w_main", w_main}, {prefix + "/b_main", b_main},
          {prefix + "/w_q", w_q},       {prefix + "/b_q", b_q},
          {prefix + "/w_f", w_f},       {prefix + "/b_f", b_f},
          {prefix + "/w_aux", w_aux},   {prefix + "/b_aux", b_aux}};
}

Tensor squeeze_main(const Tensor& x_main, const CscmParams& p) {
  // Temporal mean as a length-1 sequence; the width-3 conv's outer taps land
  // on zero padding, so only the center tap contributes.
  Tensor pooled = reshape(mean_over_axis(x_main, 0), {1, x_main.dim(1)});
  return reshape(sigmoid(conv1d(pooled, p.w_main, p.b_main)), {x_main.dim(1)});
}

Tensor core_saliency(const Tensor& x_main, const CscmParams& p) {
  Tensor fq = conv1d(x_main, p.w_q, p.b_q);
  Tensor att = softmax(matmul(fq, transpose(fq)), 1);
  return conv1d(matmul(att, fq), p.w_f, p.b_f);
}

Tensor cscm_forward(const Tensor& x_main, const Tensor& x_aux, const CscmParams& p) {
  Tensor f_main = squeeze_main(x_main, p);
  Tensor f_core = core_saliency(x_main, p);
  Tensor f_aux = conv1d(add(x_aux, f_core), p.w_aux, p.b_aux);
  Tensor r_fuse = sigmoid(mul_rowvec(f_aux, f_main));
  return mul(r_fuse, x_main);
}

}  // namespace mcwes
