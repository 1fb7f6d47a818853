#include "mcwes/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "mcwes/errors.hpp"
#include "mcwes/rng.hpp"
#include "mcwes/wire.hpp"

namespace mcwes::dataio {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void reject(const std::string& video, const std::string& why) {
  throw DataError("manifest: video '" + video + "': " + why);
}

void validate_record(const VideoRecord& r, bool has_ground_truth_field) {
  if (r.id.empty()) throw DataError("manifest: video with empty id");
  if (r.subject.empty()) reject(r.id, "empty subject");
  if (!(r.fps > 0.0)) reject(r.id, "fps must be positive");
  if (r.snippet_len < 1) reject(r.id, "snippet_len must be >= 1");
  if (r.frame_count < r.snippet_len)
    reject(r.id, "frame_count shorter than one snippet");
  int n_mae = 0, n_me = 0;
  for (const Interval& iv : r.ground_truth) {
    if (iv.cls != "mae" && iv.cls != "me")
      reject(r.id, "ground-truth class must be 'mae' or 'me'");
    if (!(1 <= iv.onset_frame && iv.onset_frame <= iv.offset_frame &&
          iv.offset_frame <= r.frame_count))
      reject(r.id, "ground-truth interval outside [1, frame_count]");
    (iv.cls == "mae" ? n_mae : n_me) += 1;
  }
  if (has_ground_truth_field) {
    if (r.label_mae != (n_mae > 0))
      reject(r.id, "label mae inconsistent with ground truth");
    if (r.label_me != (n_me > 0))
      reject(r.id, "label me inconsistent with ground truth");
  }
}

int get_int(const json& j, const char* key, const std::string& video) {
  if (!j.contains(key)) reject(video, std::string("missing field '") + key + "'");
  if (!j[key].is_number_integer()) reject(video, std::string("field '") + key + "' must be an integer");
  return j[key].get<int>();
}

int get_binary(const json& j, const char* key, const std::string& video) {
  const int v = get_int(j, key, video);
  if (v != 0 && v != 1) reject(video, std::string("field '") + key + "' must be 0 or 1");
  return v;
}

std::string get_str(const json& j, const char* key, const std::string& video) {
  if (!j.contains(key)) reject(video, std::string("missing field '") + key + "'");
  if (!j[key].is_string()) reject(video, std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace

std::vector<VideoRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open: " + path);
  json root;
  try {
    root = json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError("manifest: invalid JSON in " + path + ": " + e.what());
  }
  if (!root.is_array()) throw DataError("manifest: top level must be an array");

  std::vector<VideoRecord> out;
  std::set<std::string> seen_ids;
  for (const json& j : root) {
    if (!j.is_object()) throw DataError("manifest: entries must be objects");
    VideoRecord r;
    r.id = get_str(j, "id", "<unknown>");
    if (!seen_ids.insert(r.id).second) reject(r.id, "duplicate id");
    r.subject = get_str(j, "subject", r.id);
    if (!j.contains("fps") || !j["fps"].is_number()) reject(r.id, "missing or non-numeric fps");
    r.fps = j["fps"].get<double>();
    r.frame_count = get_int(j, "frame_count", r.id);
    r.snippet_len = get_int(j, "snippet_len", r.id);
    if (!j.contains("labels") || !j["labels"].is_object())
      reject(r.id, "missing labels object");
    r.label_mae = get_binary(j["labels"], "mae", r.id) == 1;
    r.label_me = get_binary(j["labels"], "me", r.id) == 1;
    const bool has_gt = j.contains("ground_truth");
    if (has_gt) {
      if (!j["ground_truth"].is_array()) reject(r.id, "ground_truth must be an array");
      for (const json& gj : j["ground_truth"]) {
        Interval iv;
        iv.onset_frame = get_int(gj, "onset_frame", r.id);
        iv.offset_frame = get_int(gj, "offset_frame", r.id);
        iv.cls = get_str(gj, "class", r.id);
        r.ground_truth.push_back(std::move(iv));
      }
    }
    validate_record(r, has_gt);
    out.push_back(std::move(r));
  }
  return out;
}

void save_manifest(const std::string& path, const std::vector<VideoRecord>& records) {
  ordered_json root = ordered_json::array();
  for (const VideoRecord& r : records) {
    ordered_json j;
    j["id"] = r.id;
    j["subject"] = r.subject;
    j["fps"] = r.fps;
    j["frame_count"] = r.frame_count;
    j["snippet_len"] = r.snippet_len;
    j["labels"] = {{"mae", r.label_mae ? 1 : 0}, {"me", r.label_me ? 1 : 0}};
    ordered_json gts = ordered_json::array();
    for (const Interval& iv : r.ground_truth) {
      ordered_json g;
      g["onset_frame"] = iv.onset_frame;
      g["offset_frame"] = iv.offset_frame;
      g["class"] = iv.cls;
      gts.push_back(std::move(g));
    }
    j["ground_truth"] = std::move(gts);
    root.push_back(std::move(j));
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("manifest: cannot open for writing: " + path);
  os << root.dump(2) << "\n";
  if (!os) throw DataError("manifest: write failed: " + path);
}

Tensor load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("features: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MCWF", 4) != 0)
    throw DataError("features: bad magic: " + path);
  const uint32_t version = wire::get_u32(is, "features");
  if (version != 1)
    throw DataError("features: unsupported version " + std::to_string(version) + ": " + path);
  const uint32_t t = wire::get_u32(is, "features");
  const uint32_t d = wire::get_u32(is, "features");
  if (t == 0 || d == 0 || t > (1u << 22) || d > (1u << 22))
    throw DataError("features: implausible dimensions: " + path);
  std::vector<double> data(static_cast<size_t>(t) * d);
  for (double& v : data) v = static_cast<double>(wire::get_f32(is, "features"));
  is.peek();
  if (!is.eof()) throw DataError("features: trailing bytes: " + path);
  return Tensor::from_data({static_cast<int>(t), static_cast<int>(d)}, std::move(data));
}

void save_features(const std::string& path, const Tensor& features) {
  if (features.rank() != 2) throw DataError("features: tensor must be 2D");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("features: cannot open for writing: " + path);
  os.write("MCWF", 4);
  wire::put_u32(os, 1);
  wire::put_u32(os, static_cast<uint32_t>(features.dim(0)));
  wire::put_u32(os, static_cast<uint32_t>(features.dim(1)));
  for (double v : features.data()) wire::put_f32(os, static_cast<float>(v));
  if (!os) throw DataError("features: write failed: " + path);
}

Corpus load_corpus(const std::string& manifest_path, const std::string& feature_dir) {
  Corpus corpus;
  corpus.records = load_manifest(manifest_path);
  for (const VideoRecord& r : corpus.records) {
    const fs::path dir(feature_dir);
    VideoFeatures vf;
    for (const char* modality : {"rgb", "flow"}) {
      const fs::path p = dir / (r.id + "." + modality + ".mcwf");
      if (!fs::exists(p))
        throw DataError("corpus: video '" + r.id + "': missing " + modality +
                        " feature file " + p.string());
      Tensor f = load_features(p.string());
      if (f.dim(0) != r.snippet_count())
        throw DataError("corpus: video '" + r.id + "': " + modality + " has T=" +
                        std::to_string(f.dim(0)) + " but manifest implies T=" +
                        std::to_string(r.snippet_count()));
      if (corpus.feature_dim == 0)
        corpus.feature_dim = f.dim(1);
      else if (f.dim(1) != corpus.feature_dim)
        throw DataError("corpus: video '" + r.id + "': feature dim " +
                        std::to_string(f.dim(1)) + " differs from corpus dim " +
                        std::to_string(corpus.feature_dim));
      (std::strcmp(modality, "rgb") == 0 ? vf.rgb : vf.flow) = f;
    }
    if (vf.rgb.dim(0) != vf.flow.dim(0))
      throw DataError("corpus: video '" + r.id + "': modality T mismatch");
    corpus.features.push_back(std::move(vf));
  }
  return corpus;
}

void save_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  save_manifest((fs::path(dir) / "manifest.json").string(), corpus.records);
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const std::string& id = corpus.records[i].id;
    save_features((fs::path(dir) / (id + ".rgb.mcwf")).string(), corpus.features[i].rgb);
    save_features((fs::path(dir) / (id + ".flow.mcwf")).string(), corpus.features[i].flow);
  }
}

namespace {

struct PlannedInterval {
  bool is_mae = false;
  int snippet_span = 0;  // snippets the interval touches
  int dur_frames = 0;
  int onset_snippet = 0;  // 0-based
};

// Draw onset snippets so intervals keep >= 4 background snippets between each
// other and >= 2 from either end; retries shrink the plan so generation always
// terminates. The gap keeps planted intervals separable after proposal
// merging and leaves background-only snippets inside every video.
bool try_place(std::vector<PlannedInterval>& items, int t, Rng& rng) {
  constexpr int kGap = 4, kEdge = 2;
  for (auto& it : items) {
    const int hi = t - kEdge - it.snippet_span;
    if (hi < kEdge) return false;
    it.onset_snippet = kEdge + static_cast<int>(rng.uniform_int(
                                   static_cast<uint64_t>(hi - kEdge + 1)));
  }
  std::vector<const PlannedInterval*> sorted;
  for (const auto& it : items) sorted.push_back(&it);
  std::sort(sorted.begin(), sorted.end(),
            [](const PlannedInterval* a, const PlannedInterval* b) {
              return a->onset_snippet < b->onset_snippet;
            });
  for (size_t i = 1; i < sorted.size(); ++i) {
    const int prev_end = sorted[i - 1]->onset_snippet + sorted[i - 1]->snippet_span;
    if (sorted[i]->onset_snippet - prev_end < kGap) return false;
  }
  return true;
}

}  // namespace

Corpus synth_corpus(const SynthSpec& spec) {
  if (spec.n_videos < 1) throw ConfigError("synth: n_videos must be >= 1");
  if (spec.feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
  if (!(spec.fps > 0.0)) throw ConfigError("synth: fps must be positive");
  if (spec.snippet_len < 1) throw ConfigError("synth: snippet_len must be >= 1");
  if (spec.t_min < 10) throw ConfigError("synth: t_min must be >= 10");
  if (spec.t_max < spec.t_min) throw ConfigError("synth: t_max must be >= t_min");
  if (spec.effect_size < 0.0) throw ConfigError("synth: effect_size must be >= 0");

  const int g = spec.snippet_len;
  const int me_max_frames = static_cast<int>(std::floor(0.5 * spec.fps));
  if (g > me_max_frames)
    throw ConfigError("synth: snippet_len " + std::to_string(g) +
                      " exceeds the " + std::to_string(me_max_frames) +
                      "-frame micro-expression maximum; no micro-expression can "
                      "cover a full snippet");
  // Macro durations must land in (0.5s, 4.0s] as whole snippet counts.
  const int mae_c_min = static_cast<int>(std::floor(0.5 * spec.fps / g)) + 1;
  const int mae_c_max = static_cast<int>(std::floor(4.0 * spec.fps / g));
  if (mae_c_max < mae_c_min)
    throw ConfigError("synth: no whole-snippet macro-expression duration fits (0.5s, 4.0s]");

  const int n_subjects =
      spec.n_subjects > 0 ? spec.n_subjects : std::max(1, spec.n_videos / 8);

  Rng rng(spec.seed);

  // One random unit direction per class, shared by both modalities.
  auto unit_dir = [&rng](int d) {
    std::vector<double> v(static_cast<size_t>(d));
    double norm2 = 0.0;
    for (double& x : v) {
      x = rng.normal01();
      norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
  };
  const std::vector<double> dir_mae = unit_dir(spec.feature_dim);
  const std::vector<double> dir_me = unit_dir(spec.feature_dim);

  Corpus corpus;
  corpus.feature_dim = spec.feature_dim;

  for (int v = 0; v < spec.n_videos; ++v) {
    VideoRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%04d", v);
    rec.id = buf;
    std::snprintf(buf, sizeof(buf), "s%02d", v % n_subjects);
    rec.subject = buf;
    rec.fps = spec.fps;
    rec.snippet_len = g;
    const int t = spec.t_min + static_cast<int>(rng.uniform_int(
                                   static_cast<uint64_t>(spec.t_max - spec.t_min + 1)));
    rec.frame_count = t * g;

    // Joint class-presence draw. Video-level negatives must exist for both
    // classes, and a sizeable share of micro-positive videos must carry no
    // macro interval at all: otherwise the micro pooling window can fill up
    // with co-occurring macro snippets and the micro class never has to learn
    // its own evidence. Positive videos carry several intervals so the top-k
    // pools see enough planted snippets.
    const double r_cls = rng.uniform01();
    const bool has_mae = r_cls < 0.35 || (r_cls >= 0.65 && r_cls < 0.90);
    const bool has_me = r_cls >= 0.35 && r_cls < 0.90;
    const int n_mae =
        has_mae ? 2 + static_cast<int>(rng.uniform_int(2)) : 0;
    const int n_me =
        has_me ? 6 + static_cast<int>(rng.uniform_int(4)) : 0;

    std::vector<PlannedInterval> items;
    const int span_lo = std::min(mae_c_max, mae_c_min + 1);
    const int span_hi = std::min(mae_c_max, 9);
    for (int i = 0; i < n_mae; ++i) {
      PlannedInterval it;
      it.is_mae = true;
      it.snippet_span = span_lo + static_cast<int>(rng.uniform_int(
                                      static_cast<uint64_t>(span_hi - span_lo + 1)));
      it.dur_frames = it.snippet_span * g;
      items.push_back(it);
    }
    for (int i = 0; i < n_me; ++i) {
      // Micro intervals span exactly one snippet: a snippet-aligned proposal
      // over a longer micro interval would itself exceed the micro duration
      // cap and could never be counted as one.
      PlannedInterval it;
      it.is_mae = false;
      it.dur_frames = g;
      it.snippet_span = 1;
      items.push_back(it);
    }
    int attempts = 0;
    while (!items.empty() && !try_place(items, t, rng)) {
      if (++attempts >= 200) {
        items.pop_back();  // shrink until it fits
        attempts = 0;
      }
    }

    // Background noise, both modalities independent. The base distribution is
    // hierarchical: a per-video random mean offset (mimicking per-recording
    // appearance shifts) plus within-video noise, scaled so each feature is
    // marginally zero-mean unit-variance. Video-level statistics therefore
    // carry no class information; only within-video deviations do.
    constexpr double kVideoOffsetStd = 0.98;
    const double within_std =
        std::sqrt(1.0 - kVideoOffsetStd * kVideoOffsetStd);
    auto noise_matrix = [&rng, t, within_std](int d) {
      Tensor m = Tensor::zeros({t, d});
      std::vector<double> offset(static_cast<size_t>(d));
      for (double& v : offset) v = kVideoOffsetStd * rng.normal01();
      double* p = m.data().data();
      for (int row = 0; row < t; ++row)
        for (int kd = 0; kd < d; ++kd)
          *p++ = offset[static_cast<size_t>(kd)] + within_std * rng.normal01();
      return m;
    };
    VideoFeatures vf;
    vf.rgb = noise_matrix(spec.feature_dim);
    vf.flow = noise_matrix(spec.feature_dim);

    for (const PlannedInterval& it : items) {
      const std::vector<double>& dir = it.is_mae ? dir_mae : dir_me;
      for (int s = it.onset_snippet; s < it.onset_snippet + it.snippet_span; ++s) {
        // Frames of the interval that fall inside snippet s.
        const int overlap = std::min(it.dur_frames - (s - it.onset_snippet) * g, g);
        if (2 * overlap < g) continue;  // snippet is mostly background
        for (int kd = 0; kd < spec.feature_dim; ++kd) {
          const double shift = spec.effect_size * dir[static_cast<size_t>(kd)];
          vf.rgb.data()[static_cast<size_t>(s) * spec.feature_dim + kd] += shift;
          vf.flow.data()[static_cast<size_t>(s) * spec.feature_dim + kd] += shift;
        }
      }
      Interval iv;
      iv.onset_frame = it.onset_snippet * g + 1;
      iv.offset_frame = it.onset_snippet * g + it.dur_frames;
      iv.cls = it.is_mae ? "mae" : "me";
      rec.ground_truth.push_back(std::move(iv));
      (it.is_mae ? rec.label_mae : rec.label_me) = true;
    }
    std::sort(rec.ground_truth.begin(), rec.ground_truth.end(),
              [](const Interval& a, const Interval& b) {
                return a.onset_frame < b.onset_frame;
              });

    // Quantize through f32 so the on-disk round trip is bit-exact.
    for (double& x : vf.rgb.data()) x = static_cast<double>(static_cast<float>(x));
    for (double& x : vf.flow.data()) x = static_cast<double>(static_cast<float>(x));

    corpus.records.push_back(std::move(rec));
    corpus.features.push_back(std::move(vf));
  }
  return corpus;
}

std::vector<int> subsample_indices(int t, int t_train, uint64_t seed) {
  if (t < 1) throw ConfigError("subsample: T must be >= 1");
  if (t_train < 1) throw ConfigError("subsample: T_train must be >= 1");
  Rng rng(seed);
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(t_train));
  if (t <= t_train) {
    for (int i = 0; i < t; ++i) idx.push_back(i);
    for (int i = t; i < t_train; ++i)
      idx.push_back(static_cast<int>(rng.uniform_int(static_cast<uint64_t>(t))));
  } else {
    std::vector<int> pool(static_cast<size_t>(t));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < t_train; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(t - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      idx.push_back(pool[static_cast<size_t>(i)]);
    }
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace mcwes::dataio
