#include "mcwes/spotting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "json.hpp"
#include "mcwes/errors.hpp"
#include "mcwes/metrics.hpp"
#include "mcwes/ops.hpp"

namespace mcwes::spotting {

void check_spot_config(const SpotConfig& cfg) {
  if (cfg.m_start < 1) throw ConfigError("spotting: m_start must be >= 1");
  if (!(cfg.outer_frac > 0.0)) throw ConfigError("spotting: outer_frac must be > 0");
  if (cfg.confidence_floor < 0.0)
    throw ConfigError("spotting: confidence_floor must be >= 0");
  if (cfg.nms_iou < 0.0) throw ConfigError("spotting: nms_iou must be >= 0");
  if (cfg.thr_count < 1) throw ConfigError("spotting: thr_count must be >= 1");
  if (cfg.thr_low >= cfg.thr_high)
    throw ConfigError("spotting: thresholds need thr_low < thr_high");
  if (cfg.method != "multitop" && cfg.method != "multithreshold")
    throw ConfigError("spotting: unknown method '" + cfg.method + "'");
}

std::vector<char> select_multitop(const std::vector<double>& a, int m) {
  if (m < 1) throw ConfigError("spotting: snippet budget m must be >= 1");
  const int t = static_cast<int>(a.size());
  const int km = std::max(1, t / m);
  std::vector<char> mask(a.size(), 0);
  for (int i : ops::topk_indices(a, km)) mask[static_cast<size_t>(i)] = 1;
  return mask;
}

std::vector<std::vector<char>> select_multithreshold(const std::vector<double>& a,
                                                     double low, double high,
                                                     int count) {
  if (count < 1) throw ConfigError("spotting: threshold count must be >= 1");
  if (low >= high) throw ConfigError("spotting: thresholds need low < high");
  std::vector<std::vector<char>> masks;
  for (int i = 0; i < count; ++i) {
    const double thr = count == 1 ? low : low + (high - low) * i / (count - 1);
    std::vector<char> mask(a.size(), 0);
    for (size_t j = 0; j < a.size(); ++j) mask[j] = a[j] > thr ? 1 : 0;
    masks.push_back(std::move(mask));
  }
  return masks;
}

std::vector<std::pair<int, int>> group_consecutive(const std::vector<char>& mask) {
  std::vector<std::pair<int, int>> runs;
  const int t = static_cast<int>(mask.size());
  for (int i = 0; i < t;) {
    if (!mask[static_cast<size_t>(i)]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < t && mask[static_cast<size_t>(j + 1)]) ++j;
    runs.emplace_back(i, j);
    i = j + 1;
  }
  return runs;
}

std::pair<double, double> score_interval(int t_first, int t_last,
                                         const Tensor& s_hat, const Tensor& p,
                                         const SpotConfig& cfg) {
  const int t = s_hat.dim(0);
  if (t_first < 0 || t_last >= t || t_first > t_last)
    throw std::invalid_argument("score_interval: interval out of range");
  const int len = t_last - t_first + 1;
  const int wo = static_cast<int>(std::ceil(cfg.outer_frac * len));

  double scores[2];
  for (int cls = 0; cls < 2; ++cls) {
    double inner = 0.0;
    for (int i = t_first; i <= t_last; ++i) inner += s_hat.at(i, cls);
    inner /= len;

    double outer = 0.0;
    int outer_n = 0;
    for (int i = std::max(0, t_first - wo); i < t_first; ++i, ++outer_n)
      outer += s_hat.at(i, cls);
    for (int i = t_last + 1; i <= std::min(t - 1, t_last + wo); ++i, ++outer_n)
      outer += s_hat.at(i, cls);
    if (outer_n > 0) outer /= outer_n;

    scores[cls] = inner - outer + cfg.prob_weight * p.at(cls);
  }
  return {scores[0], scores[1]};
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
  std::sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    return std::tie(b.confidence, a.onset_frame, a.offset_frame, a.cls) <
           std::tie(a.confidence, b.onset_frame, b.offset_frame, b.cls);
  });
  std::vector<Proposal> kept;
  std::vector<char> alive(proposals.size(), 1);
  for (size_t i = 0; i < proposals.size(); ++i) {
    if (!alive[i]) continue;
    kept.push_back(proposals[i]);
    for (size_t j = i + 1; j < proposals.size(); ++j) {
      if (!alive[j]) continue;
      const double iou = metrics::temporal_iou(
          {proposals[i].onset_frame, proposals[i].offset_frame},
          {proposals[j].onset_frame, proposals[j].offset_frame});
      if (iou > iou_threshold) alive[j] = 0;
    }
  }
  return kept;
}

std::vector<Proposal> spot_video(const std::string& video_id, const Tensor& a,
                                 const Tensor& s_hat, const Tensor& p,
                                 int snippet_len, double fps,
                                 const SpotConfig& cfg) {
  check_spot_config(cfg);
  if (a.rank() != 1 || s_hat.rank() != 2 || s_hat.dim(0) != a.dim(0))
    throw std::invalid_argument("spot_video: attention and logits must share T");
  if (snippet_len < 1 || fps <= 0.0)
    throw std::invalid_argument("spot_video: need snippet_len >= 1 and fps > 0");

  const std::vector<double>& att = a.data();
  std::vector<std::vector<char>> masks;
  if (cfg.method == "multitop") {
    for (int m = cfg.m_start; m < cfg.m_start + kMultiTopCount; ++m)
      masks.push_back(select_multitop(att, m));
  } else {
    masks = select_multithreshold(att, cfg.thr_low, cfg.thr_high, cfg.thr_count);
  }

  std::map<std::pair<int, int>, bool> seen;
  std::vector<Proposal> candidates;
  for (const std::vector<char>& mask : masks) {
    for (auto [t0, t1] : group_consecutive(mask)) {
      if (!seen.emplace(std::pair{t0, t1}, true).second) continue;
      auto [phi_mae, phi_me] = score_interval(t0, t1, s_hat, p, cfg);
      Proposal base;
      base.video_id = video_id;
      base.onset_frame = t0 * snippet_len + 1;
      base.offset_frame = (t1 + 1) * snippet_len;
      base.score_mae = phi_mae;
      base.score_me = phi_me;
      for (int cls = 0; cls < 2; ++cls) {
        const double phi = cls == 0 ? phi_mae : phi_me;
        if (phi < cfg.confidence_floor) continue;
        Proposal prop = base;
        prop.cls = cls == 0 ? "mae" : "me";
        prop.confidence = phi;
        candidates.push_back(std::move(prop));
      }
    }
  }

  std::vector<Proposal> survivors;
  if (cfg.classwise_nms) {
    for (const std::string& cls : {"mae", "me"}) {
      std::vector<Proposal> group;
      for (const Proposal& c : candidates)
        if (c.cls == cls) group.push_back(c);
      for (Proposal& kept : nms(std::move(group), cfg.nms_iou))
        survivors.push_back(std::move(kept));
    }
  } else {
    survivors = nms(std::move(candidates), cfg.nms_iou);
  }

  for (Proposal& prop : survivors)
    prop.cls = prop.frame_length() <= 0.5 * fps ? "me" : "mae";
  std::sort(survivors.begin(), survivors.end(), [](const Proposal& x, const Proposal& y) {
    return std::tie(x.onset_frame, x.offset_frame, x.cls) <
           std::tie(y.onset_frame, y.offset_frame, y.cls);
  });
  return survivors;
}

void save_proposals(const std::string& path, std::vector<Proposal> proposals) {
  std::sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    return std::tie(a.video_id, a.onset_frame, a.offset_frame, a.cls) <
           std::tie(b.video_id, b.onset_frame, b.offset_frame, b.cls);
  });
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const Proposal& p : proposals) {
    nlohmann::ordered_json item;
    item["video_id"] = p.video_id;
    item["onset_frame"] = p.onset_frame;
    item["offset_frame"] = p.offset_frame;
    item["class"] = p.cls;
    item["confidence"] = p.confidence;
    arr.push_back(std::move(item));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write proposals file " + path);
  out << arr.dump(2) << "\n";
}

std::vector<Proposal> load_proposals(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open proposals file " + path);
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("proposals file " + path + ": " + e.what());
  }
  if (!arr.is_array()) throw DataError("proposals file " + path + ": expected an array");
  std::vector<Proposal> out;
  for (const nlohmann::json& item : arr) {
    Proposal p;
    try {
      p.video_id = item.at("video_id").get<std::string>();
      p.onset_frame = item.at("onset_frame").get<int>();
      p.offset_frame = item.at("offset_frame").get<int>();
      p.cls = item.at("class").get<std::string>();
      p.confidence = item.at("confidence").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("proposals file " + path + ": " + e.what());
    }
    if (p.cls != "mae" && p.cls != "me")
      throw DataError("proposals file " + path + ": bad class '" + p.cls + "'");
    if (p.onset_frame < 1 || p.offset_frame < p.onset_frame)
      throw DataError("proposals file " + path + ": bad interval for " + p.video_id);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mcwes::spotting
