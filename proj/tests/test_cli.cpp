#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "volnorm/cli.hpp"
#include "volnorm/errors.hpp"
#include "volnorm/isgen.hpp"
#include "volnorm/nifti.hpp"
#include "volnorm/volcache.hpp"

using namespace volnorm;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "volnorm_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) lines += c == '\n';
  return lines;
}

cli::PhantomOptions small_corpus_options(const fs::path& dir, int count = 6) {
  cli::PhantomOptions options;
  options.out_dir = dir;
  options.count = count;
  options.seed = 11;
  options.rows = 32;
  options.cols = 32;
  options.min_slices = 12;
  options.max_slices = 18;
  return options;
}

void train_tiny_models(const fs::path& corpus, const fs::path& models) {
  for (const char* modality : {"FLAIR", "T1wCE", "T2w"}) {
    cli::TrainIsgenOptions options;
    options.corpus_dir = corpus;
    options.modality = modality;
    options.out_model = models / ("isgen_" + std::string(modality) + ".ckpt");
    options.image_size = 32;
    options.train_triplets = 8;
    options.val_triplets = 2;
    options.train.off_epochs = 1;
    options.train.on_epochs = 1;
    options.train.cycles = 1;
    options.train.d_max = 2;
    options.train.seed = 5;
    cli::run_train_isgen(options);
  }
}

}  // namespace

TEST_CASE("config parses keys, comments and types") {
  const auto config = cli::Config::from_string(
      "# pipeline defaults\n"
      "lambda = 0.03\n"
      "target=128\n"
      "imputer = isgen  # trailing comment\n"
      "flag = true\n");
  CHECK(config.get_double("lambda", 0.0) == 0.03);
  CHECK(config.get_int("target", 0) == 128);
  CHECK(config.get_string("imputer", "") == "isgen");
  CHECK(config.get_bool("flag", false));
  CHECK(config.get_int("missing", 7) == 7);
  CHECK_THROWS_AS(cli::Config::from_string("not a pair\n"), InvalidConfig);
}

TEST_CASE("config overlays training hyperparameters") {
  isgen::TrainConfig train;
  cli::Config::from_string("lambda = 0.1\ncycles = 3\nd_max = 2\nseed = 9\n")
      .apply(train);
  CHECK(train.lambda == 0.1f);
  CHECK(train.cycles == 3);
  CHECK(train.d_max == 2);
  CHECK(train.seed == 9);
  CHECK(train.off_epochs == 5);  // untouched default
}

TEST_CASE("phantom corpus layout, balance and determinism") {
  const fs::path dir_a = fresh_dir("corpus_a");
  const fs::path dir_b = fresh_dir("corpus_b");
  CHECK(cli::run_phantom(small_corpus_options(dir_a)) == 6);
  CHECK(cli::run_phantom(small_corpus_options(dir_b)) == 6);

  int label_total = 0;
  for (int i = 0; i < 6; ++i) {
    const fs::path subject = dir_a / ("subject_00" + std::to_string(i));
    for (const char* file :
         {"FLAIR.nii", "T1wCE.nii", "T2w.nii", "mask.nii", "label.txt"}) {
      CHECK(fs::exists(subject / file));
    }
    label_total += std::stoi(slurp(subject / "label.txt"));
  }
  CHECK(label_total == 3);  // alternating labels: balanced for even N

  // Same seed, same corpus, byte for byte.
  for (const char* file : {"subject_002/FLAIR.nii", "subject_005/mask.nii",
                           "corpus_manifest.tsv"}) {
    CHECK(cli::fnv1a_hash_file(dir_a / file) ==
          cli::fnv1a_hash_file(dir_b / file));
  }

  // Different seed, different voxels.
  auto options_c = small_corpus_options(fresh_dir("corpus_c"));
  options_c.seed = 12;
  cli::run_phantom(options_c);
  CHECK(cli::fnv1a_hash_file(dir_a / "subject_000/FLAIR.nii") !=
        cli::fnv1a_hash_file(options_c.out_dir / "subject_000/FLAIR.nii"));
}

TEST_CASE("train-isgen writes a loadable checkpoint and a full log") {
  const fs::path corpus = fresh_dir("train_corpus");
  cli::run_phantom(small_corpus_options(corpus));

  cli::TrainIsgenOptions options;
  options.corpus_dir = corpus;
  options.modality = "FLAIR";
  options.out_model = fresh_dir("train_models") / "isgen_FLAIR.ckpt";
  options.out_log = options.out_model.parent_path() / "log.txt";
  options.image_size = 32;
  options.train_triplets = 8;
  options.val_triplets = 2;
  options.train.off_epochs = 1;
  options.train.on_epochs = 1;
  options.train.cycles = 1;
  options.train.seed = 3;
  options.train.d_max = 2;
  CHECK(cli::run_train_isgen(options) == 2);

  isgen::IsGenModel model = isgen::load_model(options.out_model);
  CHECK(model.generator.config().image_size == 32);

  // Header + one line per epoch + best-epoch footer.
  const std::string log = slurp(options.out_log);
  CHECK(count_lines(log) == 2 + 2);

  cli::TrainIsgenOptions missing = options;
  missing.corpus_dir = fresh_dir("no_corpus_here");
  CHECK_THROWS_AS(cli::run_train_isgen(missing), IoError);
}

TEST_CASE("normalize produces target cubes, reuses its cache, heals corruption") {
  const fs::path corpus = fresh_dir("norm_corpus");
  cli::run_phantom(small_corpus_options(corpus, 4));
  const fs::path models = fresh_dir("norm_models");
  train_tiny_models(corpus, models);

  cli::NormalizeOptions options;
  options.in_dir = corpus;
  options.out_dir = fresh_dir("norm_cache");
  options.models_dir = models;
  options.target = 64;

  const auto first = cli::run_normalize(options);
  CHECK(first.computed == 16);  // 4 subjects x (3 modalities + mask)
  CHECK(first.reused == 0);
  for (const char* item : {"FLAIR.vc", "T1wCE.vc", "T2w.vc", "mask.vc"}) {
    const Volume3D vol = load_volcache(options.out_dir / "subject_000" / item);
    CHECK(vol.slices() == 64);
    CHECK(vol.rows() == 64);
    CHECK(vol.cols() == 64);
  }

  // Unchanged inputs: everything is served from the cache.
  const auto second = cli::run_normalize(options);
  CHECK(second.computed == 0);
  CHECK(second.reused == 16);

  // Downstream outputs are identical when served from the cache.
  cli::RadiomicsOptions radiomics;
  radiomics.in_dir = options.out_dir;
  radiomics.out_file = options.out_dir / "features.tsv";
  cli::run_radiomics(radiomics);
  const std::string features_before = slurp(radiomics.out_file);

  // Corrupt one cached volume: only that item is re-derived.
  const fs::path victim = options.out_dir / "subject_001" / "T2w.vc";
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(64);
    f.put('\x7f');
  }
  const auto third = cli::run_normalize(options);
  CHECK(third.computed == 1);
  CHECK(third.reused == 15);
  const Volume3D healed = load_volcache(victim);
  CHECK(healed.slices() == 64);

  cli::run_radiomics(radiomics);
  CHECK(slurp(radiomics.out_file) == features_before);
}

TEST_CASE("normalize with the copy imputer needs no models") {
  const fs::path corpus = fresh_dir("copy_corpus");
  cli::run_phantom(small_corpus_options(corpus, 2));
  cli::NormalizeOptions options;
  options.in_dir = corpus;
  options.out_dir = fresh_dir("copy_cache");
  options.imputer = "copy";
  options.target = 32;
  const auto summary = cli::run_normalize(options);
  CHECK(summary.computed == 8);
  const Volume3D vol = load_volcache(options.out_dir / "subject_000/FLAIR.vc");
  CHECK(vol.slices() == 32);
}

TEST_CASE("normalize without models fails clearly for the isgen imputer") {
  const fs::path corpus = fresh_dir("nomodel_corpus");
  cli::run_phantom(small_corpus_options(corpus, 1));
  cli::NormalizeOptions options;
  options.in_dir = corpus;
  options.out_dir = fresh_dir("nomodel_cache");
  options.models_dir = fresh_dir("nomodel_models");  // empty
  CHECK_THROWS_AS(cli::run_normalize(options), ModelMissing);
}

TEST_CASE("radiomics feature tables load back through the registry") {
  const fs::path corpus = fresh_dir("feat_corpus");
  cli::run_phantom(small_corpus_options(corpus));
  cli::RadiomicsOptions options;
  options.in_dir = corpus;
  options.out_file = corpus / "features.tsv";
  CHECK(cli::run_radiomics(options) == 6);

  const cli::FeatureTable table = cli::load_feature_table(options.out_file);
  CHECK(table.subjects.size() == 6);
  CHECK(table.data.n() == 6);
  CHECK(table.data.d() == 39);
  CHECK(table.subjects[0] == "subject_000");

  CHECK_THROWS_AS(cli::load_feature_table(corpus / "corpus_manifest.tsv"),
                  IoError);
}

TEST_CASE("select emits in-bound windows for every subject") {
  const fs::path corpus = fresh_dir("select_corpus");
  cli::run_phantom(small_corpus_options(corpus, 3));
  cli::NormalizeOptions normalize;
  normalize.in_dir = corpus;
  normalize.out_dir = fresh_dir("select_cache");
  normalize.imputer = "copy";
  normalize.target = 48;
  cli::run_normalize(normalize);

  cli::SelectOptions options;
  options.in_dir = normalize.out_dir;
  options.out_file = normalize.out_dir / "windows.tsv";
  options.window = 24;
  CHECK(cli::run_select(options) == 3);
  std::istringstream in(slurp(options.out_file));
  std::string line;
  std::getline(in, line);  // header
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string subject;
    int center, start, end;
    fields >> subject >> center >> start >> end;
    CHECK(end - start == 24);
    CHECK(start >= 0);
    CHECK(end <= 48);
    CHECK(center >= start);
    CHECK(center < end);
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("train-rf and evaluate are reproducible bit for bit") {
  const fs::path corpus = fresh_dir("rf_corpus");
  auto corpus_options = small_corpus_options(corpus, 12);
  cli::run_phantom(corpus_options);
  cli::RadiomicsOptions radiomics;
  radiomics.in_dir = corpus;
  radiomics.out_file = corpus / "features.tsv";
  cli::run_radiomics(radiomics);

  const fs::path rf_dir = fresh_dir("rf_out");
  cli::TrainRfOptions rf;
  rf.features_file = radiomics.out_file;
  rf.out_dir = rf_dir;
  rf.grid_config = rf_dir / "grid.cfg";
  cli::atomic_write_text(rf.grid_config,
                         "n_estimators = 5,10\n"
                         "criterion = gini\n"
                         "max_depth = 3,none\n"
                         "max_leaf_nodes = none\n"
                         "class_weight = none\n"
                         "min_samples_split = 2\n");
  rf.k = 3;
  rf.seed = 21;
  CHECK(cli::run_train_rf(rf) == 4);
  CHECK(count_lines(slurp(rf_dir / "grid_table.tsv")) == 1 + 4);

  cli::EvaluateOptions evaluate;
  evaluate.features_file = radiomics.out_file;
  evaluate.rf_config = rf_dir / "rf_config.txt";
  evaluate.out_report = rf_dir / "report_1.tsv";
  evaluate.model_name = "enhanced";
  cli::run_evaluate(evaluate);
  evaluate.out_report = rf_dir / "report_2.tsv";
  cli::run_evaluate(evaluate);
  CHECK(slurp(rf_dir / "report_1.tsv") == slurp(rf_dir / "report_2.tsv"));
}

TEST_CASE("anova consumes two evaluation reports") {
  const fs::path dir = fresh_dir("anova");
  // Hand-built 5-fold reports: model x metric with 5 replications gives
  // the (1, 48) design of the model factor.
  std::ostringstream a, b;
  a << "# model\ta\n";
  b << "# model\tb\n";
  for (int f = 1; f <= 5; ++f) {
    const double base_a = 0.60 + 0.01 * f;
    const double base_b = 0.50 + 0.012 * f;
    a << f << "\t5\t2\t2\t5\t" << base_a << '\t' << base_a + 0.02 << '\t'
      << base_a - 0.02 << '\t' << base_a + 0.01 << '\t' << base_a - 0.01
      << '\t' << base_a + 0.03 << '\n';
    b << f << "\t4\t3\t3\t4\t" << base_b << '\t' << base_b + 0.02 << '\t'
      << base_b - 0.02 << '\t' << base_b + 0.01 << '\t' << base_b - 0.01
      << '\t' << base_b + 0.03 << '\n';
  }
  cli::atomic_write_text(dir / "a.tsv", a.str());
  cli::atomic_write_text(dir / "b.tsv", b.str());

  cli::AnovaOptions options;
  options.report_a = dir / "a.tsv";
  options.report_b = dir / "b.tsv";
  options.out_file = dir / "anova.tsv";
  cli::run_anova(options);
  const std::string out = slurp(options.out_file);
  CHECK(out.find("model\t") != std::string::npos);
  CHECK(out.find("metric\t") != std::string::npos);
  CHECK(out.find("interaction\t") != std::string::npos);
  // model factor df = 1, error df = 2*6*(5-1) = 48
  std::istringstream lines(out);
  std::string line;
  std::getline(lines, line);  // header
  std::getline(lines, line);  // model row
  const auto fields = [&]() {
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, '\t')) f.push_back(field);
    return f;
  }();
  REQUIRE(fields.size() == 8);
  CHECK(fields[0] == "model");
  CHECK(fields[2] == "1");
  CHECK(fields[7] == "yes");  // the two models differ strongly by design
}

TEST_CASE("impute --single synthesizes a middle slice") {
  const fs::path corpus = fresh_dir("impute_corpus");
  cli::run_phantom(small_corpus_options(corpus, 2));
  const fs::path models = fresh_dir("impute_models");
  train_tiny_models(corpus, models);

  // Write two single-slice volumes from a corpus scan.
  const Volume3D vol = read_nifti(corpus / "subject_000/FLAIR.nii");
  const fs::path dir = fresh_dir("impute_io");
  for (int i : {0, 2}) {
    Volume3D one(1, vol.rows(), vol.cols(), vol.orientation(), vol.spacing(),
                 vol.modality());
    one.set_slice(0, vol.slice(i));
    write_nifti(one, dir / ("slice_" + std::to_string(i) + ".nii"));
  }
  cli::ImputeOptions options;
  options.left = dir / "slice_0.nii";
  options.right = dir / "slice_2.nii";
  options.model = models / "isgen_FLAIR.ckpt";
  options.out = dir / "middle.nii";
  CHECK(cli::run_impute_single(options) == 1);

  const Volume3D middle = read_nifti(options.out);
  CHECK(middle.slices() == 1);
  CHECK(middle.rows() == vol.rows());
  CHECK(middle.cols() == vol.cols());
  CHECK(middle.values().minCoeff() >= 0.0f);
}

#ifdef VOLNORM_CLI_PATH
TEST_CASE("the binary maps errors to a nonzero exit code") {
  const fs::path dir = fresh_dir("binary");
  const std::string binary = VOLNORM_CLI_PATH;
  const int ok = std::system(
      (binary + " phantom --out " + (dir / "c").string() +
       " --count 2 --min-slices 12 --max-slices 14 --rows 16 --cols 16 "
       "> /dev/null 2>&1")
          .c_str());
  CHECK(ok == 0);
  const int bad = std::system(
      (binary + " radiomics --in " + (dir / "nope").string() + " --out " +
       (dir / "f.tsv").string() + " > /dev/null 2>&1")
          .c_str());
  CHECK(bad != 0);
}
#endif
