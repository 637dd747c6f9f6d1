// volnorm: phantom-verifiable MRI normalization and radiogenomic
// classification pipeline.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "volnorm/cli.hpp"

using namespace volnorm;

int main(int argc, char** argv) {
  CLI::App app{"volnorm - MRI slice normalization and classification toolkit"};
  app.require_subcommand(1);

  std::string config_path;

  // phantom
  cli::PhantomOptions phantom;
  auto* cmd_phantom =
      app.add_subcommand("phantom", "generate a synthetic labelled corpus");
  cmd_phantom->add_option("--out", phantom.out_dir, "corpus directory")
      ->required();
  cmd_phantom->add_option("--count", phantom.count, "number of subjects");
  cmd_phantom->add_option("--seed", phantom.seed, "corpus seed");
  cmd_phantom->add_option("--rows", phantom.rows, "in-plane rows");
  cmd_phantom->add_option("--cols", phantom.cols, "in-plane cols");
  cmd_phantom->add_option("--min-slices", phantom.min_slices, "");
  cmd_phantom->add_option("--max-slices", phantom.max_slices, "");
  cmd_phantom->add_option("--blobs", phantom.n_blobs, "blobs per phantom");

  // train-isgen
  cli::TrainIsgenOptions train_isgen;
  auto* cmd_train = app.add_subcommand(
      "train-isgen", "train the slice generator for one modality");
  cmd_train->add_option("--corpus", train_isgen.corpus_dir, "corpus directory")
      ->required();
  cmd_train->add_option("--modality", train_isgen.modality,
                        "FLAIR, T1wCE or T2w");
  cmd_train->add_option("--model", train_isgen.out_model, "checkpoint path")
      ->required();
  cmd_train->add_option("--log", train_isgen.out_log, "training log path");
  cmd_train->add_option("--config", config_path,
                        "key = value training configuration");
  cmd_train->add_option("--image-size", train_isgen.image_size, "model grid");
  cmd_train->add_option("--train-triplets", train_isgen.train_triplets, "");
  cmd_train->add_option("--val-triplets", train_isgen.val_triplets, "");

  // normalize
  cli::NormalizeOptions normalize;
  auto* cmd_normalize = app.add_subcommand(
      "normalize", "normalize a corpus to target^3 coronal volumes");
  cmd_normalize->add_option("--in", normalize.in_dir, "corpus directory")
      ->required();
  cmd_normalize->add_option("--out", normalize.out_dir,
                            "cache directory (default: $VOLNORM_CACHE_DIR)");
  cmd_normalize->add_option("--models", normalize.models_dir,
                            "directory holding isgen_<MOD>.ckpt");
  cmd_normalize->add_option("--target", normalize.target, "cube edge");
  cmd_normalize->add_option("--imputer", normalize.imputer,
                            "isgen (default) or copy");

  // radiomics
  cli::RadiomicsOptions radiomics;
  auto* cmd_radiomics = app.add_subcommand(
      "radiomics", "extract the 39-feature table from a corpus");
  cmd_radiomics->add_option("--in", radiomics.in_dir, "corpus or cache dir")
      ->required();
  cmd_radiomics->add_option("--out", radiomics.out_file, "features .tsv")
      ->required();

  // select
  cli::SelectOptions select;
  auto* cmd_select = app.add_subcommand(
      "select", "tumor-centered slice windows for a normalized corpus");
  cmd_select->add_option("--in", select.in_dir, "normalized cache dir")
      ->required();
  cmd_select->add_option("--out", select.out_file, "windows .tsv")->required();
  cmd_select->add_option("--window", select.window, "slices per window");

  // train-rf
  cli::TrainRfOptions train_rf;
  auto* cmd_rf = app.add_subcommand(
      "train-rf", "grid-search a random forest over a feature table");
  cmd_rf->add_option("--features", train_rf.features_file, "features .tsv")
      ->required();
  cmd_rf->add_option("--out", train_rf.out_dir, "output directory")
      ->required();
  cmd_rf->add_option("--grid", train_rf.grid_config,
                     "grid configuration (default: the fine-tuning grid)");
  cmd_rf->add_option("--k", train_rf.k, "cross-validation folds");
  cmd_rf->add_option("--seed", train_rf.seed, "cross-validation seed");
  cmd_rf->add_option("--workers", train_rf.workers, "parallel evaluations");

  // evaluate
  cli::EvaluateOptions evaluate;
  auto* cmd_eval = app.add_subcommand(
      "evaluate", "k-fold evaluation of a saved forest configuration");
  cmd_eval->add_option("--features", evaluate.features_file, "features .tsv")
      ->required();
  cmd_eval->add_option("--rf-config", evaluate.rf_config, "rf_config.txt")
      ->required();
  cmd_eval->add_option("--out", evaluate.out_report, "report .tsv")
      ->required();
  cmd_eval->add_option("--name", evaluate.model_name, "model name");
  cmd_eval->add_option("--k", evaluate.k, "folds when absent from config");
  cmd_eval->add_option("--seed", evaluate.seed, "seed when absent from config");

  // anova
  cli::AnovaOptions anova;
  auto* cmd_anova = app.add_subcommand(
      "anova", "two-way ANOVA comparing two evaluation reports");
  cmd_anova->add_option("--a", anova.report_a, "first report")->required();
  cmd_anova->add_option("--b", anova.report_b, "second report")->required();
  cmd_anova->add_option("--out", anova.out_file, "anova .tsv")->required();
  cmd_anova->add_option("--alpha", anova.alpha, "significance level");

  // impute
  cli::ImputeOptions impute;
  auto* cmd_impute = app.add_subcommand(
      "impute", "synthesize the slice between two single-slice volumes");
  cmd_impute->add_flag("--single", "impute one intermediate slice");
  cmd_impute->add_option("A", impute.left, "left slice (.nii)")->required();
  cmd_impute->add_option("B", impute.right, "right slice (.nii)")->required();
  cmd_impute->add_option("--model", impute.model, "generator checkpoint")
      ->required();
  cmd_impute->add_option("--out", impute.out, "output slice (.nii)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(cmd_phantom)) {
      const int n = cli::run_phantom(phantom);
      std::cout << "wrote " << n << " subjects to " << phantom.out_dir.string()
                << "\n";
    } else if (app.got_subcommand(cmd_train)) {
      if (!config_path.empty()) {
        cli::Config::load(config_path).apply(train_isgen.train);
      }
      const int epochs = cli::run_train_isgen(train_isgen);
      std::cout << "trained " << epochs << " epochs; checkpoint at "
                << train_isgen.out_model.string() << "\n";
    } else if (app.got_subcommand(cmd_normalize)) {
      const auto summary = cli::run_normalize(normalize);
      std::cout << "normalized " << summary.computed << " items, reused "
                << summary.reused << " cached\n";
    } else if (app.got_subcommand(cmd_radiomics)) {
      const int rows = cli::run_radiomics(radiomics);
      std::cout << "extracted features for " << rows << " subjects\n";
    } else if (app.got_subcommand(cmd_select)) {
      const int rows = cli::run_select(select);
      std::cout << "selected windows for " << rows << " subjects\n";
    } else if (app.got_subcommand(cmd_rf)) {
      const int points = cli::run_train_rf(train_rf);
      std::cout << "searched " << points << " grid points; best config in "
                << (train_rf.out_dir / "rf_config.txt").string() << "\n";
    } else if (app.got_subcommand(cmd_eval)) {
      const int folds = cli::run_evaluate(evaluate);
      std::cout << "evaluated " << folds << " folds into "
                << evaluate.out_report.string() << "\n";
    } else if (app.got_subcommand(cmd_anova)) {
      cli::run_anova(anova);
      std::cout << "wrote " << anova.out_file.string() << "\n";
    } else if (app.got_subcommand(cmd_impute)) {
      cli::run_impute_single(impute);
      std::cout << "wrote " << impute.out.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
