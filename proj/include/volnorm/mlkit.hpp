#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "volnorm/rng.hpp"

namespace volnorm::ml {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Samples by rows, binary labels in {0, 1}.
struct Dataset {
  FeatureMatrix x;
  std::vector<int> y;

  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(x.cols()); }
  void validate() const;
};

enum class Criterion { Gini, Entropy };

struct ForestConfig {
  int n_estimators = 50;
  Criterion criterion = Criterion::Gini;
  int max_depth = 0;       ///< 0 = unlimited
  int max_leaf_nodes = 0;  ///< 0 = unlimited; > 0 switches to best-first growth
  bool balanced_class_weight = false;  ///< weight_c = n / (2 n_c)
  int min_samples_split = 2;
  bool bootstrap = true;
  /// Features examined per split: -1 = floor(sqrt(d)) (the forest default),
  /// 0 = all features (what standalone fit_tree uses).
  int features_per_split = -1;
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;
};

/// CART node; leaves have feature == -1. Split routing is
/// x[feature] <= threshold -> left.
struct TreeNode {
  int feature = -1;
  float threshold = 0.0f;
  int left = -1;
  int right = -1;
  float prob = 0.0f;  ///< class-1 probability (weighted class fraction)
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

/// Greedy best-split CART on impurity decrease with midpoint thresholds.
/// Standalone fits search every feature unless the config overrides
/// features_per_split.
Tree fit_tree(const Dataset& data, const ForestConfig& config);

struct TreePrediction {
  int label = 0;
  double probability = 0.0;  ///< probability of the predicted label
};
TreePrediction predict_tree(const Tree& tree, const float* x);

/// Leaf class-1 probability reached by x (what forests average).
double tree_class1_probability(const Tree& tree, const float* x);

struct Forest {
  std::vector<Tree> trees;
};

/// n_estimators trees on bootstrap resamples with per-split random feature
/// subsets; per-tree seeds derive deterministically from the forest seed,
/// so results are independent of worker scheduling.
Forest fit_forest(const Dataset& data, const ForestConfig& config);

/// Mean of the member trees' class-1 probabilities.
double predict_proba(const Forest& forest, const float* x);

// --- evaluation -------------------------------------------------------------

/// A metric whose denominator may be empty; undefined values are excluded
/// from averages.
struct MetricValue {
  double value = 0.0;
  bool defined = false;
};

struct Confusion {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
};

struct BinaryMetrics {
  MetricValue accuracy, sensitivity, specificity, ppv, npv;
};
BinaryMetrics binary_metrics(const Confusion& c);

/// Probability that a random positive outscores a random negative, ties
/// counted 1/2 (rank / Mann-Whitney formulation). Throws OneClassOnly.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct FoldResult {
  Confusion confusion;
  BinaryMetrics metrics;
  MetricValue auroc;  ///< undefined when the fold has one class only
};

struct EvalReport {
  std::vector<FoldResult> folds;
  BinaryMetrics mean;      ///< averages over folds with defined values
  MetricValue mean_auroc;

  std::string to_table(const std::string& model_name) const;
  static EvalReport from_table(const std::string& text);
};

/// Deterministic shuffled split into k near-equal folds (the first n % k
/// folds take the extra sample).
std::vector<std::vector<int>> kfold_partition(int n, int k, std::uint64_t seed);

/// k-fold cross validation of a forest configuration. Throws KTooLarge.
EvalReport kfold_cv(const Dataset& data, const ForestConfig& config, int k = 5,
                    std::uint64_t seed = 0);

// --- grid search ------------------------------------------------------------

struct GridPointResult {
  ForestConfig config;
  double cv_accuracy = 0.0;
};

struct GridSearchResult {
  ForestConfig best;
  double best_accuracy = 0.0;
  std::vector<GridPointResult> table;  ///< one row per grid point, grid order
};

/// Evaluates every configuration by k-fold CV mean accuracy; ties keep the
/// earliest grid entry. Grid points are evaluated concurrently; results
/// are deterministic regardless of scheduling.
GridSearchResult grid_search(const Dataset& data,
                             const std::vector<ForestConfig>& grid, int k = 5,
                             std::uint64_t seed = 0, int workers = 0);

/// The full factorial over the fine-tuning value lists:
/// n_estimators {50,150,200,250,300}, criterion {gini,entropy},
/// max_depth {10..50 by 5}, max_leaf_nodes {5,10,15,20,30,none},
/// class_weight {balanced,none}, min_samples_split {2,4,6,8}.
std::vector<ForestConfig> default_grid(std::uint64_t seed = 0);

// --- two-way ANOVA ----------------------------------------------------------

struct AnovaFactor {
  std::string source;
  double ss = 0.0;
  int df = 0;
  double ms = 0.0;
  double f = 0.0;
  double p = 1.0;
  double f_crit = 0.0;
  bool defined = false;  ///< false when the within-group variance is zero
};

struct AnovaResult {
  AnovaFactor factor_a;      ///< e.g. model selection
  AnovaFactor factor_b;      ///< e.g. metric
  AnovaFactor interaction;
  double ss_error = 0.0;
  int df_error = 0;
  double ms_error = 0.0;
};

/// Two-factor ANOVA with replication on cells[i][j][rep]; the design must
/// be balanced with r >= 2. Throws UnbalancedDesign.
AnovaResult anova_two_way(
    const std::vector<std::vector<std::vector<double>>>& cells,
    double alpha = 0.05);

// --- impact extrapolation ----------------------------------------------------

struct ImpactReport {
  long correctly_recommended = 0;  ///< round(population * prevalence * sensitivity)
  long correctly_discouraged = 0;  ///< round(population * (1-prevalence) * specificity)
};
ImpactReport impact_extrapolation(double population, double prevalence,
                                  double sensitivity, double specificity);

/// Prevalence each reported count implies under the rounding model; the two
/// rarely agree, which is exactly what gets surfaced.
struct ImpliedPrevalence {
  double from_recommended = 0.0;
  double from_discouraged = 0.0;
  double gap() const { return from_recommended - from_discouraged; }
};
ImpliedPrevalence implied_prevalence(double population, double sensitivity,
                                     double specificity,
                                     long reported_recommended,
                                     long reported_discouraged);

}  // namespace volnorm::ml
