#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "volnorm/isgen.hpp"
#include "volnorm/mlkit.hpp"

namespace volnorm::cli {

namespace fs = std::filesystem;

/// Plain-text key = value configuration ('#' starts a comment). Central
/// defaults follow the pipeline: lambda 0.03, target 128, window 64, k 5.
class Config {
 public:
  static Config load(const fs::path& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value);

  /// Overlays isgen training keys (lambda, off_epochs, on_epochs, cycles,
  /// warmup_epochs, d_max, lr, seed).
  void apply(isgen::TrainConfig& train) const;

 private:
  std::map<std::string, std::string> values_;
};

// --- support ----------------------------------------------------------------

std::uint64_t fnv1a_hash_file(const fs::path& path);
void atomic_write_text(const fs::path& path, const std::string& text);

/// Feature table: one row per subject with the 39 registry columns.
struct FeatureTable {
  std::vector<std::string> subjects;
  ml::Dataset data;
};
FeatureTable load_feature_table(const fs::path& path);

// --- commands ---------------------------------------------------------------
// Each returns the number of subjects (or rows) processed and throws a
// volnorm error on failure; the CLI binary maps exceptions to exit code 1.

struct PhantomOptions {
  fs::path out_dir;
  int count = 10;
  std::uint64_t seed = 1;
  int rows = 64;
  int cols = 64;
  int min_slices = 20;
  int max_slices = 44;
  int n_blobs = 5;
};
/// Generates a labelled corpus: per subject three modality scans sharing
/// one blob geometry, the tumor mask, and a binary label. Labels alternate
/// (balanced within one), and label-1 subjects carry a 1.6x larger tumor,
/// which is the synthetic link between shape and label.
int run_phantom(const PhantomOptions& options);

struct TrainIsgenOptions {
  fs::path corpus_dir;
  std::string modality = "FLAIR";
  fs::path out_model;
  fs::path out_log;
  int image_size = 64;
  int train_triplets = 200;
  int val_triplets = 40;
  isgen::TrainConfig train;
};
int run_train_isgen(const TrainIsgenOptions& options);

struct NormalizeOptions {
  fs::path in_dir;
  fs::path out_dir;  ///< empty: use $VOLNORM_CACHE_DIR
  fs::path models_dir;
  int target = 128;
  std::string imputer = "isgen";  ///< or "copy"
};
struct NormalizeSummary {
  int computed = 0;
  int reused = 0;  ///< cache hits skipped via mtime+hash check
};
NormalizeSummary run_normalize(const NormalizeOptions& options);

struct RadiomicsOptions {
  fs::path in_dir;   ///< raw corpus or normalized cache
  fs::path out_file;
};
int run_radiomics(const RadiomicsOptions& options);

struct SelectOptions {
  fs::path in_dir;  ///< normalized cache
  fs::path out_file;
  int window = 64;
};
int run_select(const SelectOptions& options);

struct TrainRfOptions {
  fs::path features_file;
  fs::path out_dir;
  fs::path grid_config;  ///< empty: the full fine-tuning grid
  int k = 5;
  std::uint64_t seed = 0;
  int workers = 0;
};
int run_train_rf(const TrainRfOptions& options);

struct EvaluateOptions {
  fs::path features_file;
  fs::path rf_config;
  fs::path out_report;
  std::string model_name = "model";
  int k = 5;
  std::uint64_t seed = 0;
};
int run_evaluate(const EvaluateOptions& options);

struct AnovaOptions {
  fs::path report_a;
  fs::path report_b;
  fs::path out_file;
  double alpha = 0.05;
};
int run_anova(const AnovaOptions& options);

struct ImputeOptions {
  fs::path left;   ///< single-slice NIfTI
  fs::path right;
  fs::path model;
  fs::path out;
};
int run_impute_single(const ImputeOptions& options);

// Config <-> forest configuration (used by train-rf and evaluate).
ml::ForestConfig forest_config_from(const Config& config);
std::string forest_config_to_text(const ml::ForestConfig& config, int k,
                                  std::uint64_t seed);
std::vector<ml::ForestConfig> grid_from_config(const Config& config,
                                               std::uint64_t seed);

}  // namespace volnorm::cli
