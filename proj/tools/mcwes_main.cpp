// Command-line driver: synthetic corpora, training, spotting, evaluation and
// leave-one-subject-out runs. Exit codes: 0 success, 2 configuration error,
// 3 data error, 1 anything else.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mcwes/config.hpp"
#include "mcwes/dataio.hpp"
#include "mcwes/errors.hpp"
#include "mcwes/metrics.hpp"
#include "mcwes/spotting.hpp"
#include "mcwes/trainer.hpp"

namespace {

mcwes::dataio::Corpus load_data_dir(const std::string& dir) {
  return mcwes::dataio::load_corpus(dir + "/manifest.json", dir);
}

mcwes::RunConfig load_run_config(const std::string& path) {
  mcwes::RunConfig cfg = path.empty() ? mcwes::RunConfig{} : mcwes::load_config(path);
  mcwes::apply_env_seed(cfg);
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised macro-/micro-expression spotting pipeline"};
  app.require_subcommand(1);

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
  std::string synth_out;
  mcwes::dataio::SynthSpec spec;
  synth->add_option("--out", synth_out, "Output corpus directory")->required();
  synth->add_option("--videos", spec.n_videos, "Number of videos");
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--d", spec.feature_dim, "Feature dimension per modality");
  synth->add_option("--fps", spec.fps, "Frame rate");
  synth->add_option("--g", spec.snippet_len, "Frames per snippet");
  synth->add_option("--effect", spec.effect_size, "Planted signal strength");
  synth->add_option("--subjects", spec.n_subjects, "Distinct subjects (0 = derive)");

  // --- train ---
  auto* train = app.add_subcommand("train", "Train a model from video-level labels");
  std::string train_data, train_config, train_ckpt, train_trace;
  train->add_option("--data", train_data, "Corpus directory")->required();
  train->add_option("--config", train_config, "JSON run configuration")->required();
  train->add_option("--out", train_ckpt, "Checkpoint output path")->required();
  train->add_option("--trace", train_trace, "Loss-trace CSV output path")->required();

  // --- spot ---
  auto* spot = app.add_subcommand("spot", "Generate interval proposals from a checkpoint");
  std::string spot_ckpt, spot_data, spot_out, spot_config;
  spot->add_option("--ckpt", spot_ckpt, "Model checkpoint")->required();
  spot->add_option("--data", spot_data, "Corpus directory")->required();
  spot->add_option("--out", spot_out, "Proposals JSON output path")->required();
  spot->add_option("--config", spot_config, "JSON run configuration (defaults if omitted)");

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "Score proposals against a manifest");
  std::string eval_props, eval_manifest, eval_out;
  double k_eval = 0.5;
  eval->add_option("--proposals", eval_props, "Proposals JSON")->required();
  eval->add_option("--manifest", eval_manifest, "Ground-truth manifest JSON")->required();
  eval->add_option("--k-eval", k_eval, "IoU threshold for a match");
  eval->add_option("--out", eval_out, "Also write the report JSON here");

  // --- loso ---
  auto* loso = app.add_subcommand("loso", "Leave-one-subject-out train + evaluate");
  std::string loso_data, loso_config, loso_out;
  loso->add_option("--data", loso_data, "Corpus directory")->required();
  loso->add_option("--config", loso_config, "JSON run configuration")->required();
  loso->add_option("--out", loso_out, "Output directory for fold artifacts")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a configuration error
  }

  try {
    if (synth->parsed()) {
      const mcwes::dataio::Corpus corpus = mcwes::dataio::synth_corpus(spec);
      mcwes::dataio::save_corpus(synth_out, corpus);
      std::cout << "wrote " << corpus.records.size() << " videos (D=" << spec.feature_dim
                << ") to " << synth_out << "\n";
    } else if (train->parsed()) {
      const mcwes::RunConfig cfg = load_run_config(train_config);
      const mcwes::dataio::Corpus corpus = load_data_dir(train_data);
      std::ofstream trace(train_trace, std::ios::binary);
      if (!trace) throw mcwes::DataError("cannot write trace file " + train_trace);
      const mcwes::trainer::TrainResult result = mcwes::trainer::train(corpus, cfg, &trace);
      print_warnings(result.warnings);
      mcwes::trainer::save_model(train_ckpt, result.params);
      std::cout << "trained " << cfg.iterations << " iterations on "
                << corpus.records.size() << " videos; checkpoint " << train_ckpt << "\n";
    } else if (spot->parsed()) {
      const mcwes::RunConfig cfg = load_run_config(spot_config);
      const mcwes::ModelParams params = mcwes::trainer::load_model(spot_ckpt);
      const mcwes::dataio::Corpus corpus = load_data_dir(spot_data);
      const std::vector<mcwes::spotting::Proposal> props =
          mcwes::trainer::spot_corpus(corpus, params, cfg);
      mcwes::spotting::save_proposals(spot_out, props);
      std::cout << "wrote " << props.size() << " proposals to " << spot_out << "\n";
    } else if (eval->parsed()) {
      if (k_eval <= 0.0 || k_eval > 1.0)
        throw mcwes::ConfigError("--k-eval must lie in (0, 1]");
      const std::vector<mcwes::spotting::Proposal> props =
          mcwes::spotting::load_proposals(eval_props);
      const std::vector<mcwes::dataio::VideoRecord> records =
          mcwes::dataio::load_manifest(eval_manifest);
      const mcwes::metrics::EvalReport report = mcwes::metrics::evaluate(props, records, k_eval);
      if (!eval_out.empty()) mcwes::metrics::save_report(eval_out, report);
      std::cout << mcwes::metrics::format_report(report);
    } else if (loso->parsed()) {
      const mcwes::RunConfig cfg = load_run_config(loso_config);
      const mcwes::dataio::Corpus corpus = load_data_dir(loso_data);
      const mcwes::trainer::LosoResult result = mcwes::trainer::loso(corpus, cfg, loso_out);
      std::cout << result.folds.size() << " folds; pooled results:\n"
                << mcwes::metrics::format_report(result.pooled);
    }
  } catch (const mcwes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mcwes::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
