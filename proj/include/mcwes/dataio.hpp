#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcwes/tensor.hpp"

namespace mcwes::dataio {

/// One annotated expression interval; frames are 1-indexed inclusive.
struct Interval {
  int onset_frame = 0;
  int offset_frame = 0;
  std::string cls;  // "mae" or "me"
};

struct VideoRecord {
  std::string id;
  std::string subject;
  double fps = 0.0;
  int frame_count = 0;  // L
  int snippet_len = 0;  // g
  bool label_mae = false;
  bool label_me = false;
  std::vector<Interval> ground_truth;

  int snippet_count() const { return frame_count / snippet_len; }  // T = floor(L/g)
};

/// Both modalities of one video, each T x D with identical T.
struct VideoFeatures {
  Tensor rgb;
  Tensor flow;
};

struct Corpus {
  std::vector<VideoRecord> records;
  std::vector<VideoFeatures> features;  // parallel to records
  int feature_dim = 0;
};

// --- manifest + feature files ------------------------------------------------

/// Parses a JSON manifest (array of video records) and validates per-record
/// invariants. Throws DataError naming the offending video.
std::vector<VideoRecord> load_manifest(const std::string& path);

void save_manifest(const std::string& path, const std::vector<VideoRecord>& records);

/// Reads one feature file (magic "MCWF"). Throws DataError on malformed input.
Tensor load_features(const std::string& path);

void save_features(const std::string& path, const Tensor& features);

/// Loads manifest plus both modality files per video from feature_dir
/// (<id>.rgb.mcwf / <id>.flow.mcwf). All-or-nothing: any violation rejects the
/// whole corpus with DataError.
Corpus load_corpus(const std::string& manifest_path, const std::string& feature_dir);

/// Writes manifest.json and all feature files into dir (created if missing).
void save_corpus(const std::string& dir, const Corpus& corpus);

// --- synthetic corpora -------------------------------------------------------

struct SynthSpec {
  int n_videos = 40;
  uint64_t seed = 0;
  int feature_dim = 64;
  double fps = 30.0;
  int snippet_len = 8;  // g
  int t_min = 100;
  int t_max = 140;
  double effect_size = 2.0;
  int n_subjects = 0;  // 0 -> max(1, n_videos / 8)
};

/// Builds a corpus of unit-variance background features with planted
/// macro-expression (0.5s..4s] and micro-expression (<=0.5s) intervals, both
/// modalities sharing the planted signal direction with independent noise.
/// Deterministic per seed; values are quantized through f32 so a save/load
/// round trip is bit-exact. Throws ConfigError when the parameters cannot
/// host a micro-expression (g longer than 0.5s of frames) or are otherwise
/// out of range.
Corpus synth_corpus(const SynthSpec& spec);

// --- training-time subsampling ----------------------------------------------

/// Snippet indices used for one training view of a video: identity when
/// T == t_train; repeat-padded with uniform draws when T < t_train; a sorted
/// without-replacement sample when T > t_train. Always ascending.
std::vector<int> subsample_indices(int t, int t_train, uint64_t seed);

}  // namespace mcwes::dataio
