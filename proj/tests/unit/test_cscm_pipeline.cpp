#include <cmath>
#include <vector>

#include "doctest.h"
#include "mcwes/cscm.hpp"
#include "mcwes/errors.hpp"
#include "mcwes/ops.hpp"
#include "mcwes/pipeline.hpp"
#include "testutil.hpp"

using namespace mcwes;
using namespace mcwes::ops;
using testutil::rand_tensor;

namespace {

using Mat = std::vector<std::vector<double>>;

double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<size_t>(t.dim(0)), std::vector<double>(static_cast<size_t>(t.dim(1))));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at(i, j);
  return m;
}

// Plain-loop temporal conv used as the duplicate route in oracle checks.
Mat ref_conv(const Mat& x, const Tensor& k, const Tensor& b) {
  const int t_len = static_cast<int>(x.size());
  const int cin = static_cast<int>(x[0].size());
  const int w = k.dim(0), cout = k.dim(2);
  const int pad = (w - 1) / 2;
  Mat y(static_cast<size_t>(t_len), std::vector<double>(static_cast<size_t>(cout), 0.0));
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < cout; ++j) {
      double acc = b.at(j);
      for (int u = 0; u < w; ++u) {
        const int xr = t + u - pad;
        if (xr < 0 || xr >= t_len) continue;
        for (int ci = 0; ci < cin; ++ci)
          acc += x[static_cast<size_t>(xr)][static_cast<size_t>(ci)] *
                 k.data()[static_cast<size_t>((u * cin + ci) * cout + j)];
      }
      y[static_cast<size_t>(t)][static_cast<size_t>(j)] = acc;
    }
  return y;
}

// Straight-line recomputation of the whole cross-modal block from its formulas.
Mat ref_cscm(const Mat& x_main, const Mat& x_aux, const CscmParams& p) {
  const int t_len = static_cast<int>(x_main.size());
  const int d = static_cast<int>(x_main[0].size());

  std::vector<double> pooled(static_cast<size_t>(d), 0.0);
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < d; ++j) pooled[static_cast<size_t>(j)] += x_main[static_cast<size_t>(t)][static_cast<size_t>(j)];
  for (int j = 0; j < d; ++j) pooled[static_cast<size_t>(j)] /= t_len;
  // Width-3 conv on a single-step sequence: only the center tap lands on data.
  std::vector<double> f_main(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) {
    double acc = p.b_main.at(j);
    for (int ci = 0; ci < d; ++ci)
      acc += pooled[static_cast<size_t>(ci)] * p.w_main.data()[static_cast<size_t>((1 * d + ci) * d + j)];
    f_main[static_cast<size_t>(j)] = ref_sigmoid(acc);
  }

  Mat fq = ref_conv(x_main, p.w_q, p.b_q);
  Mat att(static_cast<size_t>(t_len), std::vector<double>(static_cast<size_t>(t_len)));
  for (int i = 0; i < t_len; ++i) {
    double denom = 0.0;
    for (int j = 0; j < t_len; ++j) {
      double s = 0.0;
      for (int k2 = 0; k2 < d; ++k2)
        s += fq[static_cast<size_t>(i)][static_cast<size_t>(k2)] * fq[static_cast<size_t>(j)][static_cast<size_t>(k2)];
      att[static_cast<size_t>(i)][static_cast<size_t>(j)] = std::exp(s);
      denom += att[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    for (int j = 0; j < t_len; ++j) att[static_cast<size_t>(i)][static_cast<size_t>(j)] /= denom;
  }
  Mat mixed(static_cast<size_t>(t_len), std::vector<double>(static_cast<size_t>(d), 0.0));
  for (int i = 0; i < t_len; ++i)
    for (int j = 0; j < t_len; ++j)
      for (int k2 = 0; k2 < d; ++k2)
        mixed[static_cast<size_t>(i)][static_cast<size_t>(k2)] +=
            att[static_cast<size_t>(i)][static_cast<size_t>(j)] * fq[static_cast<size_t>(j)][static_cast<size_t>(k2)];
  Mat f_core = ref_conv(mixed, p.w_f, p.b_f);

  Mat comp(static_cast<size_t>(t_len), std::vector<double>(static_cast<size_t>(d)));
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < d; ++j)
      comp[static_cast<size_t>(t)][static_cast<size_t>(j)] =
          x_aux[static_cast<size_t>(t)][static_cast<size_t>(j)] + f_core[static_cast<size_t>(t)][static_cast<size_t>(j)];
  Mat f_aux = ref_conv(comp, p.w_aux, p.b_aux);

  Mat o(static_cast<size_t>(t_len), std::vector<double>(static_cast<size_t>(d)));
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < d; ++j)
      o[static_cast<size_t>(t)][static_cast<size_t>(j)] =
          ref_sigmoid(f_aux[static_cast<size_t>(t)][static_cast<size_t>(j)] * f_main[static_cast<size_t>(j)]) *
          x_main[static_cast<size_t>(t)][static_cast<size_t>(j)];
  return o;
}

}  // namespace

TEST_CASE("squeeze_main pools then gates through sigmoid") {
  Rng rng(1);
  CscmParams p = CscmParams::init(2, rng);
  // Zero weights: sigmoid(0) = 0.5 per channel.
  for (auto& [name, t] : p.named("c"))
    for (double& v : t.data()) v = 0.0;
  Tensor x = Tensor::from_data({2, 2}, {1, 3, 3, 5});
  Tensor f = squeeze_main(x, p);
  CHECK(f.dim(0) == 2);
  CHECK(f.at(0) == 0.5);
  CHECK(f.at(1) == 0.5);

  // Center tap = identity: output is sigmoid of the temporal mean [2,4].
  p.w_main.data()[(1 * 2 + 0) * 2 + 0] = 1.0;
  p.w_main.data()[(1 * 2 + 1) * 2 + 1] = 1.0;
  Tensor f2 = squeeze_main(x, p);
  CHECK(f2.at(0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(f2.at(1) == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))).epsilon(1e-12));

  for (double v : f2.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("core_saliency degenerates to a plain conv at T=1") {
  Rng rng(2);
  const int d = 3;
  CscmParams p = CscmParams::init(d, rng);
  Tensor x = rand_tensor({1, d}, rng, -1, 1, false);
  Tensor core = core_saliency(x, p);
  Tensor fq = conv1d(x, p.w_q, p.b_q);
  Tensor direct = conv1d(fq, p.w_f, p.b_f);
  for (int j = 0; j < d; ++j)
    CHECK(core.at(0, j) == doctest::Approx(direct.at(0, j)).epsilon(1e-12));
}

TEST_CASE("core_saliency attention follows the identity-weights fixture") {
  Rng rng(3);
  CscmParams p = CscmParams::init(2, rng);
  // W_q = W_f = identity width-1 convs, zero biases.
  for (Tensor t : {p.w_q, p.w_f})
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) t.data()[static_cast<size_t>(i) * 2 + j] = i == j ? 1.0 : 0.0;
  for (Tensor t : {p.b_q, p.b_f})
    for (double& v : t.data()) v = 0.0;

  Tensor x = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  // F_q = X, F_q F_q^T = I; each softmax row is [e/(e+1), 1/(e+1)] shaped.
  const double hi = std::exp(1.0) / (std::exp(1.0) + 1.0);
  const double lo = 1.0 / (std::exp(1.0) + 1.0);
  Tensor core = core_saliency(x, p);
  CHECK(core.at(0, 0) == doctest::Approx(hi).epsilon(1e-12));
  CHECK(core.at(0, 1) == doctest::Approx(lo).epsilon(1e-12));
  CHECK(core.at(1, 0) == doctest::Approx(lo).epsilon(1e-12));
  CHECK(core.at(1, 1) == doctest::Approx(hi).epsilon(1e-12));
}

TEST_CASE("cscm_forward gates without amplifying and zeroes with its input") {
  Rng rng(4);
  const int t = 5, d = 4;
  CscmParams p = CscmParams::init(d, rng);
  Tensor x_aux = rand_tensor({t, d}, rng, -2, 2, false);

  Tensor zeros = Tensor::zeros({t, d});
  Tensor o0 = cscm_forward(zeros, x_aux, p);
  for (double v : o0.data()) CHECK(v == 0.0);

  Tensor x_main = rand_tensor({t, d}, rng, -2, 2, false);
  Tensor o = cscm_forward(x_main, x_aux, p);
  for (size_t i = 0; i < o.data().size(); ++i) {
    CHECK(std::fabs(o.data()[i]) <= std::fabs(x_main.data()[i]));
    if (x_main.data()[i] != 0.0)
      CHECK(o.data()[i] * x_main.data()[i] >= 0.0);  // sign preserved
  }
}

TEST_CASE("cscm_forward matches the straight-line reference on random instances") {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const int t = 4, d = 3;
    CscmParams p = CscmParams::init(d, rng);
    Tensor x_main = rand_tensor({t, d}, rng, -1.5, 1.5, false);
    Tensor x_aux = rand_tensor({t, d}, rng, -1.5, 1.5, false);
    Tensor o = cscm_forward(x_main, x_aux, p);
    Mat ref = ref_cscm(to_mat(x_main), to_mat(x_aux), p);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(o.at(i, j) == doctest::Approx(ref[static_cast<size_t>(i)][static_cast<size_t>(j)]).epsilon(1e-12));
  }
}

TEST_CASE("cscm is symmetric under role swap with the same code path") {
  Rng rng(6);
  const int t = 4, d = 3;
  CscmParams p = CscmParams::init(d, rng);
  Tensor a = rand_tensor({t, d}, rng, -1, 1, false);
  Tensor b = rand_tensor({t, d}, rng, -1, 1, false);
  // Same params, swapped inputs: the function must depend only on arguments.
  Tensor o1 = cscm_forward(a, b, p);
  Tensor o2 = cscm_forward(b, a, p);
  Mat ref1 = ref_cscm(to_mat(a), to_mat(b), p);
  Mat ref2 = ref_cscm(to_mat(b), to_mat(a), p);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) {
      CHECK(o1.at(i, j) == doctest::Approx(ref1[static_cast<size_t>(i)][static_cast<size_t>(j)]).epsilon(1e-12));
      CHECK(o2.at(i, j) == doctest::Approx(ref2[static_cast<size_t>(i)][static_cast<size_t>(j)]).epsilon(1e-12));
    }
}

TEST_CASE("cscm gradients reach every parameter tensor") {
  Rng rng(7);
  const int t = 4, d = 3;
  CscmParams p = CscmParams::init(d, rng);
  Tensor x_main = rand_tensor({t, d}, rng, -1, 1, false);
  Tensor x_aux = rand_tensor({t, d}, rng, -1, 1, false);
  Tensor probe = rand_tensor({t, d}, rng, 0.5, 1.5, false);
  sum(mul(cscm_forward(x_main, x_aux, p), probe)).backward();
  for (auto& [name, tensor] : p.named("cscm")) {
    double norm = 0.0;
    for (double g : tensor.grad()) norm += std::fabs(g);
    INFO("parameter ", name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("attention_head produces (0,1) scores of the right length") {
  Rng rng(8);
  const int d = 6, h = 5;
  AttentionHeadParams p = AttentionHeadParams::init(d, h, rng);

  for (int t : {1, 7, 250}) {
    Tensor o = rand_tensor({t, d}, rng, -1, 1, false);
    Tensor a = attention_head(o, p, 0.5, false, rng);
    CHECK(a.dim(0) == t);
    for (double v : a.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  // Zero weights: sigmoid(0) = 0.5 everywhere.
  AttentionHeadParams zp = AttentionHeadParams::init(d, h, rng);
  for (auto& [name, t] : zp.named("z"))
    for (double& v : t.data()) v = 0.0;
  Tensor o = rand_tensor({4, d}, rng, -1, 1, false);
  Tensor a = attention_head(o, zp, 0.5, false, rng);
  for (double v : a.data()) CHECK(v == 0.5);

  // Saturating the output bias pushes every score above 0.99.
  p.b2.data()[0] += 10.0;
  Tensor a_hi = attention_head(o, p, 0.5, false, rng);
  for (double v : a_hi.data()) CHECK(v > 0.99);
}

TEST_CASE("forward is deterministic, well-shaped and averages the attentions") {
  Rng rng(9);
  const int t = 11, d = 6;
  ModelParams params = ModelParams::init(d, 8, rng);
  Tensor x_rgb = rand_tensor({t, d}, rng, -1, 1, false);
  Tensor x_flow = rand_tensor({t, d}, rng, -1, 1, false);

  ForwardOutputs o1 = forward(x_rgb, x_flow, params, false, 123);
  ForwardOutputs o2 = forward(x_rgb, x_flow, params, false, 456);  // eval ignores seed
  CHECK(o1.s.data() == o2.s.data());
  CHECK(o1.a.data() == o2.a.data());

  CHECK(o1.s.dim(0) == t);
  CHECK(o1.s.dim(1) == 3);
  CHECK(o1.fused.dim(1) == d);
  for (int i = 0; i < t; ++i) {
    CHECK(o1.a.at(i) == (o1.a_rgb.at(i) + o1.a_flow.at(i)) / 2.0);
    CHECK(o1.a.at(i) >= 0.0);
    CHECK(o1.a.at(i) <= 1.0);
  }

  // Train-time forward: same seed bit-identical, different seed differs.
  ForwardOutputs t1 = forward(x_rgb, x_flow, params, true, 77);
  ForwardOutputs t2 = forward(x_rgb, x_flow, params, true, 77);
  ForwardOutputs t3 = forward(x_rgb, x_flow, params, true, 78);
  CHECK(t1.s.data() == t2.s.data());
  CHECK(t1.s.data() != t3.s.data());
}

TEST_CASE("forward routes gradients into every parameter group") {
  Rng rng(10);
  const int t = 12, d = 5;
  ModelParams params = ModelParams::init(d, 6, rng);
  Tensor x_rgb = rand_tensor({t, d}, rng, -1, 1, false);
  Tensor x_flow = rand_tensor({t, d}, rng, -1, 1, false);

  ForwardOutputs out = forward(x_rgb, x_flow, params, false, 1);
  Tensor probe_s = rand_tensor({t, 3}, rng, 0.5, 1.5, false);
  Tensor probe_a = rand_tensor({t}, rng, 0.5, 1.5, false);
  Tensor loss = add(sum(mul(out.s, probe_s)), dot(out.a, probe_a));
  loss.backward();

  for (auto& [name, tensor] : params.named()) {
    double norm = 0.0;
    for (double g : tensor.grad()) norm += std::fabs(g);
    INFO("parameter ", name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("model parameters snapshot and reload exactly") {
  Rng rng1(11), rng2(11), rng3(12);
  ModelParams a = ModelParams::init(4, 3, rng1);
  ModelParams b = ModelParams::init(4, 3, rng2);
  ModelParams c = ModelParams::init(4, 3, rng3);
  auto an = a.named(), bn = b.named(), cn = c.named();
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < an.size(); ++i) {
    if (an[i].second.data() != bn[i].second.data()) all_equal = false;
    if (an[i].second.data() != cn[i].second.data()) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // Round trip through the snapshot listing.
  ModelParams fresh = ModelParams::init(4, 3, rng3);
  fresh.load_named(an);
  auto fn = fresh.named();
  for (size_t i = 0; i < an.size(); ++i) CHECK(fn[i].second.data() == an[i].second.data());

  // Wrong count and wrong shape both fail loudly.
  auto broken = an;
  broken.pop_back();
  CHECK_THROWS_AS(fresh.load_named(broken), DataError);
  auto wrong_shape = an;
  wrong_shape[0].second = Tensor::zeros({1, 1, 1});
  CHECK_THROWS_AS(fresh.load_named(wrong_shape), DataError);
}
