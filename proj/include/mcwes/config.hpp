#pragma once

#include <cstdint>
#include <string>

#include "mcwes/losses.hpp"
#include "mcwes/spotting.hpp"

namespace mcwes {

/// Every tunable of the training / spotting / evaluation pipeline with its
/// default. Loaded from a flat JSON object; unknown keys are rejected.
struct RunConfig {
  int attention_hidden = 128;

  PoolingSpec pooling;
  DurationMaskSpec mask;
  LossWeights weights;

  double learning_rate = 0.0005;
  int iterations = 1000;
  int batch_size = 10;
  // Videos drawn per iteration for the pairwise term (0 disables it).
  int pair_count = 6;
  int t_train = 250;
  uint64_t seed = 0;

  // Data conventions; 0 means "take from the manifest". When set they must
  // agree with every video record.
  int snippet_len = 0;
  double fps = 0.0;

  spotting::SpotConfig spot;
  double k_eval = 0.5;
};

/// Parses a JSON config file over the defaults. Throws ConfigError on unknown
/// keys, wrong types or out-of-range values; throws DataError when the file
/// cannot be read.
RunConfig load_config(const std::string& path);

/// Range-checks every field (also called by load_config).
void check_config(const RunConfig& cfg);

/// Replaces cfg.seed from the MCWES_SEED environment variable when set.
/// Throws ConfigError if the variable is set but not a plain unsigned integer.
void apply_env_seed(RunConfig& cfg);

}  // namespace mcwes
