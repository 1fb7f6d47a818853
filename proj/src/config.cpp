#include "mcwes/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "mcwes/errors.hpp"

namespace mcwes {

namespace {

using nlohmann::json;

double want_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return v.get<double>();
}

int want_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config: '" + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace

void check_config(const RunConfig& cfg) {
  if (cfg.attention_hidden < 1) throw ConfigError("config: attention_hidden must be >= 1");
  if (cfg.pooling.h.size() != 3) throw ConfigError("config: pooling_h needs 3 entries");
  for (int h : cfg.pooling.h)
    if (h < 1) throw ConfigError("config: pooling_h entries must be >= 1");
  if (cfg.mask.eta < 1) throw ConfigError("config: mask_eta must be >= 1");
  if (!(0.0 < cfg.mask.omega_l && cfg.mask.omega_l < cfg.mask.omega_u))
    throw ConfigError("config: need 0 < mask_omega_l < mask_omega_u");
  if (cfg.weights.lambda1 < 0 || cfg.weights.lambda2 < 0 || cfg.weights.lambda3 < 0 ||
      cfg.weights.lambda4 < 0)
    throw ConfigError("config: loss weights must be >= 0");
  if (cfg.learning_rate < 0) throw ConfigError("config: learning_rate must be >= 0");
  if (cfg.iterations < 0) throw ConfigError("config: iterations must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (cfg.pair_count < 0) throw ConfigError("config: pair_count must be >= 0");
  if (cfg.pair_count % 2 != 0)
    throw ConfigError("config: pair_count must be even (videos are paired)");
  if (cfg.pair_count > cfg.batch_size)
    throw ConfigError("config: pair_count cannot exceed batch_size");
  if (cfg.t_train < 1) throw ConfigError("config: t_train must be >= 1");
  if (cfg.t_train <= cfg.mask.eta)
    throw ConfigError("config: t_train must exceed mask_eta");
  if (cfg.snippet_len < 0) throw ConfigError("config: snippet_len must be >= 0");
  if (cfg.fps < 0) throw ConfigError("config: fps must be >= 0");
  if (!(cfg.k_eval > 0.0 && cfg.k_eval <= 1.0))
    throw ConfigError("config: k_eval must lie in (0, 1]");
  spotting::check_spot_config(cfg.spot);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file " + path + ": expected an object");

  RunConfig cfg;
  const std::set<std::string> known = {
      "attention_hidden", "pooling_h", "mask_eta", "mask_omega_l", "mask_omega_u",
      "lambda1", "lambda2", "lambda3", "lambda4", "learning_rate", "iterations",
      "batch_size", "pair_count", "t_train", "seed", "snippet_len", "fps",
      "spot_m_start", "spot_prob_weight", "spot_outer_frac", "spot_nms_iou",
      "spot_confidence_floor", "spot_thr_low", "spot_thr_high", "spot_thr_count",
      "spot_method", "spot_classwise_nms", "k_eval"};
  for (const auto& [key, value] : doc.items())
    if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");

  auto num = [&](const char* key, double& slot) {
    if (doc.contains(key)) slot = want_number(doc[key], key);
  };
  auto integer = [&](const char* key, int& slot) {
    if (doc.contains(key)) slot = want_int(doc[key], key);
  };

  integer("attention_hidden", cfg.attention_hidden);
  if (doc.contains("pooling_h")) {
    const json& arr = doc["pooling_h"];
    if (!arr.is_array()) throw ConfigError("config: 'pooling_h' must be an array");
    cfg.pooling.h.clear();
    for (const json& v : arr) cfg.pooling.h.push_back(want_int(v, "pooling_h"));
  }
  integer("mask_eta", cfg.mask.eta);
  num("mask_omega_l", cfg.mask.omega_l);
  num("mask_omega_u", cfg.mask.omega_u);
  num("lambda1", cfg.weights.lambda1);
  num("lambda2", cfg.weights.lambda2);
  num("lambda3", cfg.weights.lambda3);
  num("lambda4", cfg.weights.lambda4);
  num("learning_rate", cfg.learning_rate);
  integer("iterations", cfg.iterations);
  integer("batch_size", cfg.batch_size);
  integer("pair_count", cfg.pair_count);
  integer("t_train", cfg.t_train);
  if (doc.contains("seed")) {
    if (doc["seed"].is_number_unsigned()) {
      cfg.seed = doc["seed"].get<uint64_t>();
    } else if (doc["seed"].is_number_integer() && doc["seed"].get<int64_t>() >= 0) {
      cfg.seed = static_cast<uint64_t>(doc["seed"].get<int64_t>());
    } else {
      throw ConfigError("config: 'seed' must be a non-negative integer");
    }
  }
  integer("snippet_len", cfg.snippet_len);
  num("fps", cfg.fps);
  integer("spot_m_start", cfg.spot.m_start);
  num("spot_prob_weight", cfg.spot.prob_weight);
  num("spot_outer_frac", cfg.spot.outer_frac);
  num("spot_nms_iou", cfg.spot.nms_iou);
  num("spot_confidence_floor", cfg.spot.confidence_floor);
  num("spot_thr_low", cfg.spot.thr_low);
  num("spot_thr_high", cfg.spot.thr_high);
  integer("spot_thr_count", cfg.spot.thr_count);
  if (doc.contains("spot_method")) {
    if (!doc["spot_method"].is_string())
      throw ConfigError("config: 'spot_method' must be a string");
    cfg.spot.method = doc["spot_method"].get<std::string>();
  }
  if (doc.contains("spot_classwise_nms")) {
    if (!doc["spot_classwise_nms"].is_boolean())
      throw ConfigError("config: 'spot_classwise_nms' must be a boolean");
    cfg.spot.classwise_nms = doc["spot_classwise_nms"].get<bool>();
  }
  num("k_eval", cfg.k_eval);

  check_config(cfg);
  return cfg;
}

void apply_env_seed(RunConfig& cfg) {
  const char* env = std::getenv("MCWES_SEED");
  if (!env) return;
  const std::string text(env);
  // Digits only: strtoull alone would accept "-3" by wrapping it.
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("MCWES_SEED must be an unsigned integer, got '" + text + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno == ERANGE || *end != '\0')
    throw ConfigError("MCWES_SEED out of range: '" + text + "'");
  cfg.seed = static_cast<uint64_t>(v);
}

}  // namespace mcwes
