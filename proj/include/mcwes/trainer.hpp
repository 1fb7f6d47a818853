#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mcwes/config.hpp"
#include "mcwes/dataio.hpp"
#include "mcwes/metrics.hpp"
#include "mcwes/pipeline.hpp"
#include "mcwes/spotting.hpp"

namespace mcwes::trainer {

struct TrainResult {
  ModelParams params;
  std::vector<std::string> warnings;
};

/// Runs the full weakly-supervised optimization over the corpus. When trace is
/// non-null, one CSV line per iteration is written with every loss component.
/// Deterministic for a given (corpus, config): identical traces and parameters
/// across runs.
TrainResult train(const dataio::Corpus& corpus, const RunConfig& cfg,
                  std::ostream* trace);

/// Checkpoint round trip for a whole model. Loading rebuilds the parameter
/// shapes from the stored tensors (feature dim and attention width are
/// inferred), so no sidecar metadata is needed.
void save_model(const std::string& path, const ModelParams& params);
ModelParams load_model(const std::string& path);

/// Evaluation-mode forward over each full video followed by proposal
/// generation; fps / snippet length are taken per record.
std::vector<spotting::Proposal> spot_corpus(const dataio::Corpus& corpus,
                                            const ModelParams& params,
                                            const RunConfig& cfg);

struct LosoFold {
  std::string subject;
  metrics::EvalReport report;
};

struct LosoResult {
  std::vector<LosoFold> folds;
  metrics::EvalReport pooled;
};

/// Leave-one-subject-out: trains one fold per distinct subject (seed mixed
/// with the subject id), spots the held-out videos, and pools the counts for
/// the final report. Artifacts (checkpoint, proposals, trace, fold report) are
/// written into out_dir per fold. Throws ConfigError when the corpus has fewer
/// than two subjects.
LosoResult loso(const dataio::Corpus& corpus, const RunConfig& cfg,
                const std::string& out_dir);

}  // namespace mcwes::trainer
