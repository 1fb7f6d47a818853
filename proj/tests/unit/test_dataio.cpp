#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mcwes/dataio.hpp"
#include "mcwes/errors.hpp"

using namespace mcwes::dataio;
using mcwes::ConfigError;
using mcwes::DataError;
using mcwes::Tensor;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("mcwes_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Snippets whose whole frame span sits inside a ground-truth interval.
std::vector<int> inner_snippets(const VideoRecord& r) {
  std::vector<int> out;
  for (int s = 0; s < r.snippet_count(); ++s) {
    const int lo = s * r.snippet_len + 1, hi = (s + 1) * r.snippet_len;
    for (const Interval& iv : r.ground_truth)
      if (iv.onset_frame <= lo && hi <= iv.offset_frame) {
        out.push_back(s);
        break;
      }
  }
  return out;
}

std::vector<int> background_snippets(const VideoRecord& r) {
  std::vector<int> out;
  for (int s = 0; s < r.snippet_count(); ++s) {
    const int lo = s * r.snippet_len + 1, hi = (s + 1) * r.snippet_len;
    bool touches = false;
    for (const Interval& iv : r.ground_truth)
      if (!(hi < iv.onset_frame - r.snippet_len || lo > iv.offset_frame + r.snippet_len))
        touches = true;
    if (!touches) out.push_back(s);
  }
  return out;
}

struct Welch {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double var() const { return n > 1 ? m2 / (n - 1) : 0.0; }
};

double welch_z(const Welch& a, const Welch& b) {
  return (a.mean - b.mean) / std::sqrt(a.var() / a.n + b.var() / b.n);
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic and round-trips bit-exactly") {
  SynthSpec spec;
  spec.n_videos = 6;
  spec.seed = 42;
  spec.t_min = 60;
  spec.t_max = 80;
  Corpus c1 = synth_corpus(spec);
  Corpus c2 = synth_corpus(spec);
  REQUIRE(c1.records.size() == 6);
  for (size_t i = 0; i < c1.records.size(); ++i) {
    CHECK(c1.records[i].id == c2.records[i].id);
    CHECK(c1.features[i].rgb.data() == c2.features[i].rgb.data());
    CHECK(c1.features[i].flow.data() == c2.features[i].flow.data());
  }

  const fs::path dir = fresh_dir("roundtrip");
  save_corpus(dir.string(), c1);
  Corpus back = load_corpus((dir / "manifest.json").string(), dir.string());
  REQUIRE(back.records.size() == c1.records.size());
  CHECK(back.feature_dim == c1.feature_dim);
  for (size_t i = 0; i < c1.records.size(); ++i) {
    CHECK(back.records[i].id == c1.records[i].id);
    CHECK(back.records[i].subject == c1.records[i].subject);
    CHECK(back.records[i].fps == c1.records[i].fps);
    CHECK(back.records[i].frame_count == c1.records[i].frame_count);
    CHECK(back.records[i].label_mae == c1.records[i].label_mae);
    CHECK(back.records[i].label_me == c1.records[i].label_me);
    CHECK(back.records[i].ground_truth.size() == c1.records[i].ground_truth.size());
    CHECK(back.features[i].rgb.data() == c1.features[i].rgb.data());
    CHECK(back.features[i].flow.data() == c1.features[i].flow.data());
  }

  // Regenerating and re-saving produces byte-identical files.
  const fs::path dir2 = fresh_dir("roundtrip2");
  save_corpus(dir2.string(), c2);
  CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));
  CHECK(slurp(dir / (c1.records[0].id + ".rgb.mcwf")) ==
        slurp(dir2 / (c1.records[0].id + ".rgb.mcwf")));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("synthetic intervals respect the duration conventions") {
  SynthSpec spec;
  spec.n_videos = 30;
  spec.seed = 9;
  Corpus c = synth_corpus(spec);
  int me_count = 0, mae_count = 0;
  for (const VideoRecord& r : c.records) {
    CHECK(r.frame_count / r.snippet_len == r.snippet_count());
    int n_mae = 0, n_me = 0;
    for (const Interval& iv : r.ground_truth) {
      const int dur = iv.offset_frame - iv.onset_frame + 1;
      CHECK(iv.onset_frame >= 1);
      CHECK(iv.offset_frame <= r.frame_count);
      if (iv.cls == "mae") {
        // (0.5s, 4.0s] at 30 fps
        CHECK(dur > 15);
        CHECK(dur <= 120);
        ++n_mae;
        ++mae_count;
      } else {
        CHECK(dur <= 15);  // <= 0.5 s
        CHECK(dur >= spec.snippet_len);
        // 1 or 2 snippets touched at fps=30, g=8
        const int first_snip = (iv.onset_frame - 1) / spec.snippet_len;
        const int last_snip = (iv.offset_frame - 1) / spec.snippet_len;
        CHECK(last_snip - first_snip + 1 <= 2);
        ++n_me;
        ++me_count;
      }
    }
    CHECK(r.label_mae == (n_mae > 0));
    CHECK(r.label_me == (n_me > 0));
  }
  // The mixture weights make both classes appear somewhere in 30 videos.
  CHECK(me_count > 0);
  CHECK(mae_count > 0);
}

TEST_CASE("synth rejects a snippet length longer than any micro-expression") {
  SynthSpec spec;
  spec.fps = 30.0;
  spec.snippet_len = 16;  // 0.5 s at 30 fps is 15 frames
  CHECK_THROWS_AS(synth_corpus(spec), ConfigError);
  spec.snippet_len = 8;
  spec.effect_size = -1.0;
  CHECK_THROWS_AS(synth_corpus(spec), ConfigError);
  spec.effect_size = 1.0;
  spec.t_min = 5;
  CHECK_THROWS_AS(synth_corpus(spec), ConfigError);
}

TEST_CASE("effect_size=0 leaves foreground statistically indistinguishable") {
  // Snippet means within one video share that video's random base offset, so
  // the two-sample test is blocked by video: one fg-minus-bg difference per
  // video, then a one-sample z-test across videos.
  SynthSpec spec;
  spec.n_videos = 100;
  spec.seed = 1234;
  spec.effect_size = 0.0;
  spec.t_min = 60;
  spec.t_max = 90;
  Corpus c = synth_corpus(spec);
  Welch diffs;
  int fg_total = 0, bg_total = 0;
  for (size_t i = 0; i < c.records.size(); ++i) {
    const VideoRecord& r = c.records[i];
    const Tensor& x = c.features[i].rgb;
    auto row_mean = [&](int s) {
      double acc = 0.0;
      for (int k = 0; k < x.dim(1); ++k) acc += x.at(s, k);
      return acc / x.dim(1);
    };
    const std::vector<int> fg = inner_snippets(r);
    const std::vector<int> bg = background_snippets(r);
    if (fg.empty() || bg.empty()) continue;
    double fg_mean = 0.0, bg_mean = 0.0;
    for (int s : fg) fg_mean += row_mean(s);
    for (int s : bg) bg_mean += row_mean(s);
    diffs.add(fg_mean / fg.size() - bg_mean / bg.size());
    fg_total += static_cast<int>(fg.size());
    bg_total += static_cast<int>(bg.size());
  }
  REQUIRE(fg_total > 100);
  REQUIRE(bg_total > 1000);
  REQUIRE(diffs.n > 50);
  const double z = diffs.mean / std::sqrt(diffs.var() / diffs.n);
  CHECK(std::fabs(z) < 2.576);  // alpha = 0.01
}

TEST_CASE("effect_size=2 separates foreground from background energy") {
  SynthSpec spec;
  spec.n_videos = 40;
  spec.seed = 7;
  spec.effect_size = 2.0;
  spec.t_min = 60;
  spec.t_max = 90;
  Corpus c = synth_corpus(spec);
  Welch fg, bg;
  for (size_t i = 0; i < c.records.size(); ++i) {
    const VideoRecord& r = c.records[i];
    const Tensor& x = c.features[i].rgb;
    auto row_sqnorm = [&](int s) {
      double acc = 0.0;
      for (int k = 0; k < x.dim(1); ++k) acc += x.at(s, k) * x.at(s, k);
      return acc;
    };
    for (int s : inner_snippets(r)) fg.add(row_sqnorm(s));
    for (int s : background_snippets(r)) bg.add(row_sqnorm(s));
  }
  // Shifted rows carry ~effect^2 extra squared norm along the unit direction.
  CHECK(welch_z(fg, bg) > 3.0);
  CHECK(fg.mean - bg.mean > 2.0);
}

TEST_CASE("manifest validation rejects inconsistent records") {
  const fs::path dir = fresh_dir("manifest");
  const std::string mpath = (dir / "manifest.json").string();

  VideoRecord r;
  r.id = "v1";
  r.subject = "s1";
  r.fps = 30.0;
  r.frame_count = 80;
  r.snippet_len = 8;
  r.label_mae = false;  // inconsistent: mae interval below
  r.label_me = false;
  r.ground_truth.push_back({10, 40, "mae"});
  save_manifest(mpath, {r});
  CHECK_THROWS_WITH_AS(load_manifest(mpath), doctest::Contains("v1"), DataError);

  r.label_mae = true;
  r.ground_truth[0].offset_frame = 100;  // beyond frame_count
  save_manifest(mpath, {r});
  CHECK_THROWS_AS(load_manifest(mpath), DataError);

  r.ground_truth[0].offset_frame = 40;
  r.ground_truth[0].cls = "smile";
  save_manifest(mpath, {r});
  CHECK_THROWS_AS(load_manifest(mpath), DataError);

  r.ground_truth[0].cls = "mae";
  save_manifest(mpath, {r});
  auto recs = load_manifest(mpath);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].snippet_count() == 10);

  // Duplicate ids are rejected.
  save_manifest(mpath, {r, r});
  CHECK_THROWS_AS(load_manifest(mpath), DataError);

  std::ofstream(mpath) << "{ not json";
  CHECK_THROWS_AS(load_manifest(mpath), DataError);
  fs::remove_all(dir);
}

TEST_CASE("load_corpus rejects missing or mismatched feature files atomically") {
  SynthSpec spec;
  spec.n_videos = 3;
  spec.seed = 5;
  spec.t_min = 40;
  spec.t_max = 50;
  Corpus c = synth_corpus(spec);
  const fs::path dir = fresh_dir("corpus");
  save_corpus(dir.string(), c);
  const std::string mpath = (dir / "manifest.json").string();

  // Baseline loads.
  CHECK(load_corpus(mpath, dir.string()).records.size() == 3);

  // Missing flow file.
  const fs::path flow1 = dir / (c.records[1].id + ".flow.mcwf");
  const fs::path hidden = dir / "hidden.bin";
  fs::rename(flow1, hidden);
  CHECK_THROWS_WITH_AS(load_corpus(mpath, dir.string()),
                       doctest::Contains(c.records[1].id.c_str()), DataError);
  fs::rename(hidden, flow1);

  // Wrong T in one modality.
  Tensor short_feats = Tensor::zeros({c.records[1].snippet_count() - 1, c.feature_dim});
  save_features(flow1.string(), short_feats);
  CHECK_THROWS_WITH_AS(load_corpus(mpath, dir.string()),
                       doctest::Contains(c.records[1].id.c_str()), DataError);
  save_features(flow1.string(), c.features[1].flow);

  // Wrong D in one modality.
  save_features(flow1.string(), Tensor::zeros({c.records[1].snippet_count(), 8}));
  CHECK_THROWS_AS(load_corpus(mpath, dir.string()), DataError);
  save_features(flow1.string(), c.features[1].flow);
  CHECK(load_corpus(mpath, dir.string()).records.size() == 3);

  // Corrupt header.
  std::ofstream(flow1, std::ios::binary) << "MCWQ";
  CHECK_THROWS_AS(load_corpus(mpath, dir.string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("subsample_indices honors the three regimes") {
  // T == T_train: identity
  auto id = subsample_indices(250, 250, 99);
  REQUIRE(id.size() == 250);
  for (int i = 0; i < 250; ++i) CHECK(id[static_cast<size_t>(i)] == i);

  // T > T_train: strictly increasing sample without replacement
  auto down = subsample_indices(300, 250, 99);
  REQUIRE(down.size() == 250);
  for (size_t i = 1; i < down.size(); ++i) CHECK(down[i] > down[i - 1]);
  CHECK(down.front() >= 0);
  CHECK(down.back() < 300);

  // T < T_train: repeat-padded, non-decreasing, covers every original index
  auto up = subsample_indices(40, 60, 99);
  REQUIRE(up.size() == 60);
  std::set<int> distinct(up.begin(), up.end());
  CHECK(distinct.size() == 40);
  for (size_t i = 1; i < up.size(); ++i) CHECK(up[i] >= up[i - 1]);

  // Deterministic per seed, different across seeds.
  CHECK(subsample_indices(300, 250, 99) == down);
  CHECK(subsample_indices(300, 250, 100) != down);

  CHECK_THROWS_AS(subsample_indices(0, 10, 1), ConfigError);
  CHECK_THROWS_AS(subsample_indices(10, 0, 1), ConfigError);
}
