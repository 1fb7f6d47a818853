#include "mcwes/pipeline.hpp"

#include "mcwes/errors.hpp"
#include "mcwes/ops.hpp"

namespace mcwes {

using namespace ops;

namespace {

Tensor conv_kernel(int w, int cin, int cout, Rng& rng) {
  Tensor k = Tensor::zeros({w, cin, cout}, true);
  xavier_fill(k, w * cin, w * cout, rng);
  return k;
}

}  // namespace

AttentionHeadParams AttentionHeadParams::init(int d, int hidden, Rng& rng) {
  AttentionHeadParams p;
  p.w1 = conv_kernel(3, d, hidden, rng);
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = conv_kernel(1, hidden, 1, rng);
  p.b2 = Tensor::zeros({1}, true);
  p.hidden = hidden;
  return p;
}

std::vector<std::pair<std::string, Tensor>> AttentionHeadParams::named(
    const std::string& prefix) const {
  return {{prefix + "/w1", w1}, {prefix + "/b1", b1},
          {prefix + "/w2", w2}, {prefix + "/b2", b2}};
}

FusionClassifierParams FusionClassifierParams::init(int d, Rng& rng) {
  FusionClassifierParams p;
  p.w_fuse = conv_kernel(1, 2 * d, d, rng);
  p.b_fuse = Tensor::zeros({d}, true);
  p.w_cls = conv_kernel(1, d, kNumLogits, rng);
  p.b_cls = Tensor::zeros({kNumLogits}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> FusionClassifierParams::named() const {
  return {{"fuse/w", w_fuse}, {"fuse/b", b_fuse}, {"cls/w", w_cls}, {"cls/b", b_cls}};
}

ModelParams ModelParams::init(int d, int attention_hidden, Rng& rng) {
  if (d < 1) throw ConfigError("model: feature dim must be >= 1");
  if (attention_hidden < 1) throw ConfigError("model: attention hidden size must be >= 1");
  ModelParams p;
  p.cscm_rgb = CscmParams::init(d, rng);
  p.cscm_flow = CscmParams::init(d, rng);
  p.attn_rgb = AttentionHeadParams::init(d, attention_hidden, rng);
  p.attn_flow = AttentionHeadParams::init(d, attention_hidden, rng);
  p.fusecls = FusionClassifierParams::init(d, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& kv : cscm_rgb.named("cscm_rgb")) out.push_back(kv);
  for (auto& kv : cscm_flow.named("cscm_flow")) out.push_back(kv);
  for (auto& kv : attn_rgb.named("attn_rgb")) out.push_back(kv);
  for (auto& kv : attn_flow.named("attn_flow")) out.push_back(kv);
  for (auto& kv : fusecls.named()) out.push_back(kv);
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& kv : named()) out.push_back(kv.second);
  return out;
}

void ModelParams::load_named(
    const std::vector<std::pair<std::string, Tensor>>& snapshot) {
  auto mine = named();
  if (snapshot.size() != mine.size())
    throw DataError("model load: expected " + std::to_string(mine.size()) +
                    " parameters, got " + std::to_string(snapshot.size()));
  for (auto& [name, live] : mine) {
    const Tensor* found = nullptr;
    for (auto& [sname, stensor] : snapshot)
      if (sname == name) {
        found = &stensor;
        break;
      }
    if (!found) throw DataError("model load: missing parameter " + name);
    if (found->shape() != live.shape())
      throw DataError("model load: shape mismatch for " + name);
    live.data() = found->data();
  }
}

Tensor attention_head(const Tensor& o, const AttentionHeadParams& p,
                      double dropout_rate, bool training, Rng& rng) {
  Tensor h = relu(conv1d(o, p.w1, p.b1));
  if (training) h = dropout(h, dropout_rate, rng);
  return reshape(sigmoid(conv1d(h, p.w2, p.b2)), {o.dim(0)});
}

namespace {

// Subtract each feature's temporal mean so per-recording appearance offsets
// cannot saturate the downstream gates; only within-video deviations carry
// class evidence anyway. A length-1 video centers to all zeros.
Tensor center_over_time(const Tensor& x) {
  Tensor mu = reshape(mean_over_axis(x, 0), {1, x.dim(1)});
  return sub(x, matmul(Tensor::full({x.dim(0), 1}, 1.0), mu));
}

}  // namespace

ForwardOutputs forward(const Tensor& x_rgb, const Tensor& x_flow,
                       const ModelParams& params, bool training, uint64_t seed) {
  if (x_rgb.rank() != 2 || x_flow.rank() != 2 || x_rgb.shape() != x_flow.shape())
    throw std::invalid_argument("forward: modality shapes must match (T x D)");
  Rng rng(seed);  // dropout masks; consumed in a fixed order

  Tensor c_rgb = center_over_time(x_rgb);
  Tensor c_flow = center_over_time(x_flow);
  ForwardOutputs out;
  out.o_rgb = cscm_forward(c_rgb, c_flow, params.cscm_rgb);
  out.o_flow = cscm_forward(c_flow, c_rgb, params.cscm_flow);
  out.a_rgb = attention_head(out.o_rgb, params.attn_rgb, params.attn_dropout,
                             training, rng);
  out.a_flow = attention_head(out.o_flow, params.attn_flow, params.attn_dropout,
                              training, rng);
  out.a = scale(add(out.a_rgb, out.a_flow), 0.5);
  out.fused = conv1d(concat_cols(out.o_rgb, out.o_flow), params.fusecls.w_fuse,
                     params.fusecls.b_fuse);
  Tensor cls_in = training ? dropout(out.fused, params.cls_dropout, rng) : out.fused;
  out.s = conv1d(cls_in, params.fusecls.w_cls, params.fusecls.b_cls);
  return out;
}

}  // namespace mcwes
