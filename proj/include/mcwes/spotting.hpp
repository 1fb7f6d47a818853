#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcwes/tensor.hpp"

namespace mcwes::spotting {

/// Candidate expression interval; frames are 1-indexed, inclusive, and always
/// aligned to snippet boundaries.
struct Proposal {
  std::string video_id;
  int onset_frame = 0;
  int offset_frame = 0;
  std::string cls;           // "mae" or "me", assigned from duration
  double confidence = 0.0;   // contrast score of the surviving class column
  double score_mae = 0.0;    // both per-class scores are kept for inspection
  double score_me = 0.0;

  int frame_length() const { return offset_frame - onset_frame + 1; }
};

struct SpotConfig {
  // Multi-top sweep: snippet budgets m in {m_start, ..., m_start + 14}.
  int m_start = 8;
  // Score phi = inner - outer + prob_weight * p_class.
  double prob_weight = 0.15;
  // Outer window width as a fraction of the proposal's snippet length.
  double outer_frac = 0.25;
  double nms_iou = 0.01;
  double confidence_floor = 0.1;
  // Multi-threshold baseline sweep (selected via method).
  double thr_low = 0.1;
  double thr_high = 0.9;
  int thr_count = 15;
  // "multitop" (default) or "multithreshold".
  std::string method = "multitop";
  // Optional variant: run suppression within each class instead of pooled.
  bool classwise_nms = false;
};

inline constexpr int kMultiTopCount = 15;

/// Validates ranges (m_start >= 1, 0 < outer_frac, thresholds ordered, known
/// method). Throws ConfigError.
void check_spot_config(const SpotConfig& cfg);

/// True at the indices of the max(1, T/m) largest attention values
/// (ties: lower index).
std::vector<char> select_multitop(const std::vector<double>& a, int m);

/// One mask per threshold (a > threshold, strict), thresholds evenly spaced
/// across [low, high]; a single threshold degenerates to low.
std::vector<std::vector<char>> select_multithreshold(const std::vector<double>& a,
                                                     double low, double high,
                                                     int count);

/// Maximal runs of true values as 0-indexed inclusive snippet intervals.
std::vector<std::pair<int, int>> group_consecutive(const std::vector<char>& mask);

/// Contrast scores for one snippet interval (0-indexed, inclusive) for both
/// expression classes: mean suppressed logit inside, minus the mean over the
/// flanking windows of ceil(outer_frac * length) snippets on each side
/// (clamped to the video, never overlapping the interval, empty -> 0), plus
/// prob_weight times the video-level class probability.
std::pair<double, double> score_interval(int t_first, int t_last,
                                         const Tensor& s_hat, const Tensor& p,
                                         const SpotConfig& cfg);

/// Greedy suppression: repeatedly keep the best-scoring proposal and drop the
/// rest whose temporal IoU with it exceeds the threshold. Deterministic order:
/// confidence desc, then onset, offset, class.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

/// Full per-video pass: sweep selections, group, dedupe intervals, score both
/// classes, filter, suppress, then label each survivor by duration
/// (<= 0.5 s -> me).
std::vector<Proposal> spot_video(const std::string& video_id, const Tensor& a,
                                 const Tensor& s_hat, const Tensor& p,
                                 int snippet_len, double fps,
                                 const SpotConfig& cfg);

/// Proposal persistence: JSON array sorted by (video_id, onset_frame).
void save_proposals(const std::string& path, std::vector<Proposal> proposals);
std::vector<Proposal> load_proposals(const std::string& path);

}  // namespace mcwes::spotting
