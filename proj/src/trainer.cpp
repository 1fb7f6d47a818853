#include "mcwes/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mcwes/adam.hpp"
#include "mcwes/checkpoint.hpp"
#include "mcwes/errors.hpp"
#include "mcwes/losses.hpp"
#include "mcwes/ops.hpp"
#include "mcwes/rng.hpp"

namespace mcwes::trainer {

using namespace ops;

namespace {

/// When the config pins snippet length or fps, every record must agree.
void check_conventions(const dataio::Corpus& corpus, const RunConfig& cfg) {
  for (const dataio::VideoRecord& rec : corpus.records) {
    if (cfg.snippet_len > 0 && rec.snippet_len != cfg.snippet_len)
      throw ConfigError("config snippet_len=" + std::to_string(cfg.snippet_len) +
                        " conflicts with video " + rec.id + " (g=" +
                        std::to_string(rec.snippet_len) + ")");
    if (cfg.fps > 0 && rec.fps != cfg.fps)
      throw ConfigError("config fps conflicts with video " + rec.id);
  }
}

std::vector<int> pick_batch(int n, int batch_size, Rng& rng) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(batch_size));
  if (n >= batch_size) {
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < batch_size; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n - i)));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
      out.push_back(idx[static_cast<size_t>(i)]);
    }
  } else {
    for (int i = 0; i < batch_size; ++i)
      out.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n))));
  }
  return out;
}

bool share_positive(const VideoLabels& a, const VideoLabels& b) {
  return (a.mae && b.mae) || (a.me && b.me);
}

}  // namespace

TrainResult train(const dataio::Corpus& corpus, const RunConfig& cfg,
                  std::ostream* trace) {
  check_config(cfg);
  if (corpus.records.empty()) throw ConfigError("train: corpus is empty");
  check_conventions(corpus, cfg);

  const int n = static_cast<int>(corpus.records.size());
  Rng init_rng(mix_seed(cfg.seed, std::string("init")));
  TrainResult result{ModelParams::init(corpus.feature_dim, cfg.attention_hidden, init_rng), {}};
  ModelParams& params = result.params;
  std::vector<Tensor> tensors = params.tensors();
  const std::vector<std::pair<std::string, Tensor>> named = params.named();

  AdamState opt;
  opt.learning_rate = cfg.learning_rate;

  Rng batch_rng(mix_seed(cfg.seed, std::string("batch")));
  Rng pair_rng(mix_seed(cfg.seed, std::string("pairs")));
  const uint64_t drop_base = mix_seed(cfg.seed, std::string("dropout"));
  const uint64_t sub_base = mix_seed(cfg.seed, std::string("subsample"));

  if (trace) *trace << "iteration,L_sc,L_dc1,L_dc2,L_dc3,L_fc,L_sl,L_gl,L_total\n";

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    const std::vector<int> batch = pick_batch(n, cfg.batch_size, batch_rng);

    struct Slot {
      ForwardOutputs out;
      VideoLabels labels;
    };
    std::vector<Slot> slots;
    Tensor sum_sc = Tensor::scalar(0.0), sum_dc1 = Tensor::scalar(0.0);
    Tensor sum_dc2 = Tensor::scalar(0.0), sum_dc3 = Tensor::scalar(0.0);
    Tensor sum_sl = Tensor::scalar(0.0), sum_gl = Tensor::scalar(0.0);

    for (size_t slot = 0; slot < batch.size(); ++slot) {
      const dataio::VideoRecord& rec = corpus.records[static_cast<size_t>(batch[slot])];
      const dataio::VideoFeatures& feats = corpus.features[static_cast<size_t>(batch[slot])];
      const uint64_t view = static_cast<uint64_t>(iter) * 4096 + slot;
      const std::vector<int> idx =
          dataio::subsample_indices(rec.snippet_count(), cfg.t_train, mix_seed(sub_base, view));
      Tensor x_rgb = gather_rows(feats.rgb, idx);
      Tensor x_flow = gather_rows(feats.flow, idx);

      ForwardOutputs o = forward(x_rgb, x_flow, params, true, mix_seed(drop_base, view));
      const VideoLabels y{rec.label_mae, rec.label_me};
      const std::vector<double> mask = duration_mask(o.a, cfg.mask);

      sum_sc = add(sum_sc, loss_sc(o.a_rgb, o.a_flow));
      sum_dc1 = add(sum_dc1, loss_dc1(o.s, y, cfg.pooling));
      sum_dc2 = add(sum_dc2, loss_dc2(suppress(o.s, o.a), y, cfg.pooling));
      sum_dc3 = add(sum_dc3, loss_dc3(o.s, mask, y, cfg.pooling));
      sum_sl = add(sum_sl, loss_sl(o.a, o.a_rgb, o.a_flow));
      sum_gl = add(sum_gl, loss_gl(o.s, o.a, o.a_rgb, o.a_flow));
      slots.push_back({std::move(o), y});
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Tensor l_sc = scale(sum_sc, inv_b), l_dc1 = scale(sum_dc1, inv_b);
    Tensor l_dc2 = scale(sum_dc2, inv_b), l_dc3 = scale(sum_dc3, inv_b);
    Tensor l_sl = scale(sum_sl, inv_b), l_gl = scale(sum_gl, inv_b);

    Tensor l_fc = Tensor::scalar(0.0);
    if (cfg.pair_count >= 2) {
      std::vector<int> chosen;
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        std::vector<int> order(slots.size());
        std::iota(order.begin(), order.end(), 0);
        for (int i = 0; i < cfg.pair_count; ++i) {
          const int j = i + static_cast<int>(pair_rng.uniform_int(order.size() - static_cast<size_t>(i)));
          std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        ok = true;
        for (int i = 0; i + 1 < cfg.pair_count && ok; i += 2)
          ok = share_positive(slots[static_cast<size_t>(order[static_cast<size_t>(i)])].labels,
                              slots[static_cast<size_t>(order[static_cast<size_t>(i + 1)])].labels);
        if (ok) chosen.assign(order.begin(), order.begin() + cfg.pair_count);
      }
      if (ok) {
        std::vector<std::pair<FcVideo, FcVideo>> pairs;
        for (int i = 0; i + 1 < cfg.pair_count; i += 2) {
          auto as_fc = [&](int slot) {
            const Slot& s = slots[static_cast<size_t>(slot)];
            return FcVideo{s.out.s, s.out.fused, s.out.a, s.labels};
          };
          pairs.emplace_back(as_fc(chosen[static_cast<size_t>(i)]),
                             as_fc(chosen[static_cast<size_t>(i + 1)]));
        }
        l_fc = feature_consistency(pairs, cfg.pooling, &result.warnings);
      } else {
        result.warnings.push_back("iteration " + std::to_string(iter) +
                                  ": no label-sharing pairing found; pairwise term skipped");
      }
    }

    Tensor total = joint_loss(l_sc, l_dc1, l_dc2, l_dc3, l_fc, l_sl, l_gl, cfg.weights);
    total.backward();
    for (const auto& [name, tensor] : named)
      if (!tensor.grad_finite())
        throw std::runtime_error("training aborted at iteration " + std::to_string(iter) +
                                 ": non-finite gradient in " + name);
    adam_step(tensors, opt);

    if (trace) {
      char line[512];
      std::snprintf(line, sizeof(line),
                    "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", iter,
                    l_sc.value(), l_dc1.value(), l_dc2.value(), l_dc3.value(),
                    l_fc.value(), l_sl.value(), l_gl.value(), total.value());
      *trace << line;
    }
  }
  return result;
}

void save_model(const std::string& path, const ModelParams& params) {
  checkpoint::save(path, params.named());
}

ModelParams load_model(const std::string& path) {
  const std::vector<std::pair<std::string, Tensor>> snapshot = checkpoint::load(path);
  const Tensor* cls_w = nullptr;
  const Tensor* attn_w1 = nullptr;
  for (const auto& [name, t] : snapshot) {
    if (name == "cls/w") cls_w = &t;
    if (name == "attn_rgb/w1") attn_w1 = &t;
  }
  if (!cls_w || !attn_w1 || cls_w->rank() != 3 || attn_w1->rank() != 3)
    throw DataError("checkpoint " + path + ": missing or malformed model parameters");
  const int d = cls_w->dim(1);
  const int hidden = attn_w1->dim(2);
  Rng dummy(0);
  ModelParams params = ModelParams::init(d, hidden, dummy);
  params.load_named(snapshot);
  return params;
}

std::vector<spotting::Proposal> spot_corpus(const dataio::Corpus& corpus,
                                            const ModelParams& params,
                                            const RunConfig& cfg) {
  check_config(cfg);
  check_conventions(corpus, cfg);
  if (!corpus.records.empty() && params.fusecls.w_cls.dim(1) != corpus.feature_dim)
    throw DataError("model expects feature dim " +
                    std::to_string(params.fusecls.w_cls.dim(1)) + " but corpus has " +
                    std::to_string(corpus.feature_dim));
  std::vector<spotting::Proposal> all;
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const dataio::VideoRecord& rec = corpus.records[i];
    const dataio::VideoFeatures& feats = corpus.features[i];
    ForwardOutputs o = forward(feats.rgb, feats.flow, params, false, 0);
    Tensor s_hat = suppress(o.s, o.a);
    Tensor p = topk_pool(o.s, cfg.pooling).second;
    std::vector<spotting::Proposal> props = spotting::spot_video(
        rec.id, o.a, s_hat, p, rec.snippet_len, rec.fps, cfg.spot);
    all.insert(all.end(), props.begin(), props.end());
  }
  return all;
}

LosoResult loso(const dataio::Corpus& corpus, const RunConfig& cfg,
                const std::string& out_dir) {
  check_config(cfg);
  std::set<std::string> subjects;
  for (const dataio::VideoRecord& rec : corpus.records) subjects.insert(rec.subject);
  if (subjects.size() < 2)
    throw ConfigError("loso: need at least two subjects, found " +
                      std::to_string(subjects.size()));

  std::filesystem::create_directories(out_dir);
  LosoResult result;
  std::vector<spotting::Proposal> pooled_props;

  for (const std::string& subject : subjects) {
    dataio::Corpus fit, held;
    fit.feature_dim = held.feature_dim = corpus.feature_dim;
    for (size_t i = 0; i < corpus.records.size(); ++i) {
      dataio::Corpus& dst = corpus.records[i].subject == subject ? held : fit;
      dst.records.push_back(corpus.records[i]);
      dst.features.push_back(corpus.features[i]);
    }

    RunConfig fold_cfg = cfg;
    fold_cfg.seed = mix_seed(cfg.seed, subject);
    const std::string stem = out_dir + "/fold_" + subject;

    std::ofstream trace(stem + ".trace.csv", std::ios::binary);
    if (!trace) throw DataError("cannot write trace file " + stem + ".trace.csv");
    TrainResult fold = train(fit, fold_cfg, &trace);
    save_model(stem + ".mcwc", fold.params);

    std::vector<spotting::Proposal> props = spot_corpus(held, fold.params, cfg);
    spotting::save_proposals(stem + ".proposals.json", props);
    metrics::EvalReport report = metrics::evaluate(props, held.records, cfg.k_eval);
    metrics::save_report(stem + ".report.json", report);

    result.folds.push_back({subject, report});
    pooled_props.insert(pooled_props.end(), props.begin(), props.end());
  }

  result.pooled = metrics::evaluate(pooled_props, corpus.records, cfg.k_eval);
  metrics::save_report(out_dir + "/report.json", result.pooled);
  return result;
}

}  // namespace mcwes::trainer
