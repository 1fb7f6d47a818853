#pragma once

#include <string>
#include <vector>

#include "mcwes/dataio.hpp"
#include "mcwes/spotting.hpp"

namespace mcwes::metrics {

/// 1-indexed inclusive frame interval.
struct FrameInterval {
  int onset = 0;
  int offset = 0;
};

/// Intersection over union in whole frames.
double temporal_iou(const FrameInterval& a, const FrameInterval& b);

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  /// (proposal index, ground-truth index) for every true positive, in the
  /// order proposals were visited.
  std::vector<std::pair<int, int>> matches;
};

/// Greedy one-to-one assignment: proposals visited by descending confidence
/// (ties by onset, then offset); each takes the unmatched ground truth with
/// the highest IoU when that IoU reaches the threshold.
MatchResult match_and_count(const std::vector<spotting::Proposal>& proposals,
                            const std::vector<FrameInterval>& ground_truth,
                            double iou_threshold);

struct EvalReport {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double f1_me_05 = 0.0, f1_me_10 = 0.0, f1_me_p = 0.0;

  struct PerVideo {
    std::string id;
    int tp = 0, fp = 0, fn = 0;
  };
  std::vector<PerVideo> per_video;
};

/// Whole-corpus evaluation at one IoU threshold: overall localization counts
/// (class-agnostic, per video), plus the micro-expression suite where
/// duration-limited proposals are scored against micro ground truths only.
EvalReport evaluate(const std::vector<spotting::Proposal>& proposals,
                    const std::vector<dataio::VideoRecord>& records,
                    double iou_threshold);

void save_report(const std::string& path, const EvalReport& report);
EvalReport load_report(const std::string& path);

/// Fixed-order human-readable table (one metric per line).
std::string format_report(const EvalReport& report);

}  // namespace mcwes::metrics
