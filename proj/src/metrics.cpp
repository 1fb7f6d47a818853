#include "mcwes/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <tuple>

#include "json.hpp"
#include "mcwes/errors.hpp"

namespace mcwes::metrics {

double temporal_iou(const FrameInterval& a, const FrameInterval& b) {
  const int inter = std::min(a.offset, b.offset) - std::max(a.onset, b.onset) + 1;
  if (inter <= 0) return 0.0;
  const int len_a = a.offset - a.onset + 1;
  const int len_b = b.offset - b.onset + 1;
  return static_cast<double>(inter) / (len_a + len_b - inter);
}

MatchResult match_and_count(const std::vector<spotting::Proposal>& proposals,
                            const std::vector<FrameInterval>& ground_truth,
                            double iou_threshold) {
  std::vector<int> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const spotting::Proposal& a = proposals[static_cast<size_t>(x)];
    const spotting::Proposal& b = proposals[static_cast<size_t>(y)];
    return std::tie(b.confidence, a.onset_frame, a.offset_frame) <
           std::tie(a.confidence, b.onset_frame, b.offset_frame);
  });

  MatchResult res;
  std::vector<char> taken(ground_truth.size(), 0);
  for (int pi : order) {
    const spotting::Proposal& prop = proposals[static_cast<size_t>(pi)];
    int best = -1;
    double best_iou = 0.0;
    for (size_t gi = 0; gi < ground_truth.size(); ++gi) {
      if (taken[gi]) continue;
      const double iou =
          temporal_iou({prop.onset_frame, prop.offset_frame}, ground_truth[gi]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      taken[static_cast<size_t>(best)] = 1;
      ++res.tp;
      res.matches.emplace_back(pi, best);
    } else {
      ++res.fp;
    }
  }
  res.fn = static_cast<int>(ground_truth.size()) - res.tp;
  return res;
}

namespace {

struct Counts {
  int tp = 0, fp = 0, fn = 0;
  void add(const MatchResult& m) {
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
};

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_from(const Counts& c) {
  const double p = safe_div(c.tp, c.tp + c.fp);
  const double r = safe_div(c.tp, c.tp + c.fn);
  return safe_div(2.0 * p * r, p + r);
}

}  // namespace

EvalReport evaluate(const std::vector<spotting::Proposal>& proposals,
                    const std::vector<dataio::VideoRecord>& records,
                    double iou_threshold) {
  std::map<std::string, std::vector<spotting::Proposal>> by_video;
  for (const spotting::Proposal& p : proposals) by_video[p.video_id].push_back(p);
  for (const auto& [id, group] : by_video) {
    const bool known = std::any_of(records.begin(), records.end(),
                                   [&](const dataio::VideoRecord& r) { return r.id == id; });
    if (!known) throw DataError("evaluate: proposals reference unknown video " + id);
  }

  EvalReport report;
  Counts overall, me05, me10, mep;
  for (const dataio::VideoRecord& rec : records) {
    std::vector<spotting::Proposal> props;
    if (auto it = by_video.find(rec.id); it != by_video.end()) props = it->second;

    std::vector<FrameInterval> gts, me_gts;
    for (const dataio::Interval& gt : rec.ground_truth) {
      gts.push_back({gt.onset_frame, gt.offset_frame});
      if (gt.cls == "me") me_gts.push_back({gt.onset_frame, gt.offset_frame});
    }

    const MatchResult m = match_and_count(props, gts, iou_threshold);
    overall.add(m);
    report.per_video.push_back({rec.id, m.tp, m.fp, m.fn});

    auto shorter_than = [&](double seconds) {
      std::vector<spotting::Proposal> subset;
      for (const spotting::Proposal& p : props)
        if (p.frame_length() <= seconds * rec.fps) subset.push_back(p);
      return subset;
    };
    me05.add(match_and_count(shorter_than(0.5), me_gts, iou_threshold));
    me10.add(match_and_count(shorter_than(1.0), me_gts, iou_threshold));
    // Micro proposals carved out of the final overall set: same duration rule
    // applied to the already-selected proposals.
    mep.add(match_and_count(shorter_than(0.5), me_gts, iou_threshold));
  }

  report.tp = overall.tp;
  report.fp = overall.fp;
  report.fn = overall.fn;
  report.precision = safe_div(overall.tp, overall.tp + overall.fp);
  report.recall = safe_div(overall.tp, overall.tp + overall.fn);
  report.f1 = safe_div(2.0 * report.precision * report.recall,
                       report.precision + report.recall);
  report.f1_me_05 = f1_from(me05);
  report.f1_me_10 = f1_from(me10);
  report.f1_me_p = f1_from(mep);
  return report;
}

void save_report(const std::string& path, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["f1_me_05"] = report.f1_me_05;
  j["f1_me_10"] = report.f1_me_10;
  j["f1_me_p"] = report.f1_me_p;
  nlohmann::ordered_json vids = nlohmann::ordered_json::array();
  for (const EvalReport::PerVideo& v : report.per_video) {
    nlohmann::ordered_json item;
    item["id"] = v.id;
    item["tp"] = v.tp;
    item["fp"] = v.fp;
    item["fn"] = v.fn;
    vids.push_back(std::move(item));
  }
  j["per_video"] = std::move(vids);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report file " + path);
  out << j.dump(2) << "\n";
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open report file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report file " + path + ": " + e.what());
  }
  EvalReport r;
  try {
    r.tp = j.at("tp").get<int>();
    r.fp = j.at("fp").get<int>();
    r.fn = j.at("fn").get<int>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.f1_me_05 = j.at("f1_me_05").get<double>();
    r.f1_me_10 = j.at("f1_me_10").get<double>();
    r.f1_me_p = j.at("f1_me_p").get<double>();
    for (const nlohmann::json& item : j.at("per_video")) {
      r.per_video.push_back({item.at("id").get<std::string>(), item.at("tp").get<int>(),
                             item.at("fp").get<int>(), item.at("fn").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report file " + path + ": " + e.what());
  }
  return r;
}

std::string format_report(const EvalReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "tp         %d\n"
                "fp         %d\n"
                "fn         %d\n"
                "precision  %.6f\n"
                "recall     %.6f\n"
                "f1         %.6f\n"
                "f1_me_05   %.6f\n"
                "f1_me_10   %.6f\n"
                "f1_me_p    %.6f\n",
                report.tp, report.fp, report.fn, report.precision, report.recall,
                report.f1, report.f1_me_05, report.f1_me_10, report.f1_me_p);
  return buf;
}

}  // namespace mcwes::metrics
