#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "volnorm/errors.hpp"
#include "volnorm/mlkit.hpp"
#include "volnorm/rng.hpp"
#include "volnorm/stats.hpp"

using namespace volnorm;
using namespace volnorm::ml;

namespace {

Dataset two_blobs(int n, Rng& rng, double separation = 4.0, double sigma = 0.5) {
  Dataset data;
  data.x.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    data.y.push_back(label);
    const double cx = label == 0 ? -separation / 2 : separation / 2;
    data.x(i, 0) = static_cast<float>(cx + sigma * rng.normal());
    data.x(i, 1) = static_cast<float>(sigma * rng.normal());
  }
  return data;
}

Dataset xor_data() {
  Dataset data;
  data.x.resize(40, 2);
  for (int i = 0; i < 40; ++i) {
    const int a = (i / 2) % 2, b = i % 2;
    data.x(i, 0) = static_cast<float>(a);
    data.x(i, 1) = static_cast<float>(b);
    data.y.push_back(a ^ b);
  }
  return data;
}

double training_accuracy(const Tree& tree, const Dataset& data) {
  int correct = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (predict_tree(tree, data.x.row(i).data()).label ==
        data.y[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / data.n();
}

// O(n^2) pairwise AUROC oracle.
double oracle_auroc(const std::vector<double>& scores,
                    const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

// Independent ANOVA oracle via explicit deviations from means.
struct OracleAnova {
  double ss_a, ss_b, ss_ab, ss_error;
};
OracleAnova oracle_anova(
    const std::vector<std::vector<std::vector<double>>>& cells) {
  const std::size_t a = cells.size(), b = cells[0].size(),
                    r = cells[0][0].size();
  double grand = 0.0;
  for (const auto& row : cells)
    for (const auto& cell : row)
      for (double v : cell) grand += v;
  grand /= static_cast<double>(a * b * r);

  std::vector<double> mean_a(a, 0.0), mean_b(b, 0.0);
  std::vector<std::vector<double>> mean_cell(a, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      for (double v : cells[i][j]) {
        mean_a[i] += v;
        mean_b[j] += v;
        mean_cell[i][j] += v;
      }
      mean_cell[i][j] /= static_cast<double>(r);
    }
  for (auto& m : mean_a) m /= static_cast<double>(b * r);
  for (auto& m : mean_b) m /= static_cast<double>(a * r);

  OracleAnova out{0, 0, 0, 0};
  for (std::size_t i = 0; i < a; ++i) {
    out.ss_a += static_cast<double>(b * r) * (mean_a[i] - grand) * (mean_a[i] - grand);
  }
  for (std::size_t j = 0; j < b; ++j) {
    out.ss_b += static_cast<double>(a * r) * (mean_b[j] - grand) * (mean_b[j] - grand);
  }
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const double dev = mean_cell[i][j] - mean_a[i] - mean_b[j] + grand;
      out.ss_ab += static_cast<double>(r) * dev * dev;
      for (double v : cells[i][j]) {
        out.ss_error += (v - mean_cell[i][j]) * (v - mean_cell[i][j]);
      }
    }
  return out;
}

}  // namespace

TEST_CASE("single-class data yields a single confident leaf") {
  Dataset data;
  data.x.resize(6, 2);
  data.x.setRandom();
  data.y.assign(6, 1);
  Tree tree = fit_tree(data, {});
  CHECK(tree.nodes.size() == 1);
  auto pred = predict_tree(tree, data.x.row(0).data());
  CHECK(pred.label == 1);
  CHECK(pred.probability == 1.0);

  data.y.assign(6, 0);
  Tree tree0 = fit_tree(data, {});
  auto pred0 = predict_tree(tree0, data.x.row(0).data());
  CHECK(pred0.label == 0);
  CHECK(pred0.probability == 1.0);
}

TEST_CASE("1D threshold concept is learned with one split") {
  Rng rng(1);
  Dataset data;
  const int n = 60;
  data.x.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double v = rng.uniform(-1.0, 1.0);
    data.x(i, 0) = static_cast<float>(v);
    data.y.push_back(v < 0 ? 0 : 1);
  }
  Tree tree = fit_tree(data, {});
  CHECK(tree.nodes.size() == 3);  // root plus two leaves
  CHECK(training_accuracy(tree, data) == 1.0);

  // Exhaustive-split oracle: the best midpoint threshold separates the
  // closest pair straddling zero.
  std::vector<float> values;
  for (int i = 0; i < n; ++i) values.push_back(data.x(i, 0));
  std::sort(values.begin(), values.end());
  float best_threshold = 0.0f;
  int best_errors = n + 1;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    if (values[i] == values[i + 1]) continue;
    const float threshold = 0.5f * (values[i] + values[i + 1]);
    int errors = 0;
    for (int j = 0; j < n; ++j) {
      const int predicted = data.x(j, 0) <= threshold ? 0 : 1;
      errors += predicted != data.y[static_cast<std::size_t>(j)];
    }
    if (errors < best_errors) {
      best_errors = errors;
      best_threshold = threshold;
    }
  }
  CHECK(best_errors == 0);
  CHECK(tree.nodes[0].threshold == doctest::Approx(best_threshold));
}

TEST_CASE("depth-1 trees cannot express XOR") {
  Dataset data = xor_data();
  ForestConfig cfg;
  cfg.max_depth = 1;
  Tree stump = fit_tree(data, cfg);
  CHECK(training_accuracy(stump, data) <= 0.75);

  ForestConfig deep;
  Tree full = fit_tree(data, deep);
  CHECK(training_accuracy(full, data) == 1.0);
}

TEST_CASE("max_leaf_nodes caps best-first growth") {
  Rng rng(2);
  Dataset data = two_blobs(80, rng, 2.0, 1.5);
  ForestConfig cfg;
  cfg.max_leaf_nodes = 4;
  Tree tree = fit_tree(data, cfg);
  int leaves = 0;
  for (const auto& node : tree.nodes) leaves += node.feature < 0;
  CHECK(leaves <= 4);
  CHECK(leaves >= 2);
}

TEST_CASE("balanced class weights shift leaf probabilities") {
  // 9:1 imbalance, single leaf: weighted fraction becomes 1/2.
  Dataset data;
  data.x.resize(10, 1);
  data.x.setZero();
  data.y.assign(10, 0);
  data.y[0] = 1;
  ForestConfig cfg;
  cfg.balanced_class_weight = true;
  cfg.max_depth = 1;
  Tree tree = fit_tree(data, cfg);
  // All feature values equal, so the tree cannot split.
  REQUIRE(tree.nodes.size() == 1);
  CHECK(tree.nodes[0].prob == doctest::Approx(0.5));
}

TEST_CASE("unlimited tree memorizes any consistent dataset") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Dataset data;
    const int n = 50;
    data.x.resize(n, 3);
    std::set<std::tuple<float, float, float>> seen;
    for (int i = 0; i < n; ++i) {
      float a, b, c;
      do {
        a = rng.uniform_float();
        b = rng.uniform_float();
        c = rng.uniform_float();
      } while (!seen.insert({a, b, c}).second);
      data.x(i, 0) = a;
      data.x(i, 1) = b;
      data.x(i, 2) = c;
      data.y.push_back(rng.uniform_int(0, 1));
    }
    Tree tree = fit_tree(data, {});
    CHECK(training_accuracy(tree, data) == 1.0);
  }
}

TEST_CASE("a one-tree forest without bootstrap equals a single tree") {
  Rng rng(4);
  Dataset data = two_blobs(60, rng, 2.5, 1.0);
  ForestConfig cfg;
  cfg.n_estimators = 1;
  cfg.bootstrap = false;
  cfg.features_per_split = 0;  // search all features, as fit_tree does
  cfg.seed = 9;
  Forest forest = fit_forest(data, cfg);
  Tree tree = fit_tree(data, cfg);
  REQUIRE(forest.trees.size() == 1);
  REQUIRE(forest.trees[0].nodes.size() == tree.nodes.size());
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    CHECK(forest.trees[0].nodes[i].feature == tree.nodes[i].feature);
    CHECK(forest.trees[0].nodes[i].threshold == tree.nodes[i].threshold);
    CHECK(forest.trees[0].nodes[i].prob == tree.nodes[i].prob);
  }
}

TEST_CASE("forest predictions are deterministic in the seed") {
  Rng rng(5);
  Dataset data = two_blobs(100, rng);
  ForestConfig cfg;
  cfg.n_estimators = 20;
  cfg.seed = 123;
  Forest a = fit_forest(data, cfg);
  Forest b = fit_forest(data, cfg);
  for (int i = 0; i < data.n(); ++i) {
    CHECK(predict_proba(a, data.x.row(i).data()) ==
          predict_proba(b, data.x.row(i).data()));
  }
}

TEST_CASE("separable blobs reach 0.95 cross-validation accuracy") {
  Rng rng(6);
  Dataset data = two_blobs(200, rng);
  ForestConfig cfg;
  cfg.n_estimators = 50;
  cfg.seed = 7;
  EvalReport report = kfold_cv(data, cfg, 5, 11);
  CHECK(report.mean.accuracy.defined);
  CHECK(report.mean.accuracy.value >= 0.95);
}

TEST_CASE("kfold_partition splits 23 samples into 5,5,5,4,4") {
  auto folds = kfold_partition(23, 5, 3);
  REQUIRE(folds.size() == 5);
  CHECK(folds[0].size() == 5);
  CHECK(folds[1].size() == 5);
  CHECK(folds[2].size() == 5);
  CHECK(folds[3].size() == 4);
  CHECK(folds[4].size() == 4);
  std::set<int> all;
  for (const auto& fold : folds)
    for (int i : fold) CHECK(all.insert(i).second);
  CHECK(all.size() == 23);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 22);

  CHECK_THROWS_AS(kfold_partition(4, 5, 0), KTooLarge);
}

TEST_CASE("report means equal hand averages of the folds") {
  Rng rng(7);
  Dataset data = two_blobs(60, rng, 1.0, 1.0);
  ForestConfig cfg;
  cfg.n_estimators = 10;
  EvalReport report = kfold_cv(data, cfg, 5, 2);
  double total = 0.0;
  int count = 0;
  for (const auto& fold : report.folds) {
    REQUIRE(fold.metrics.accuracy.defined);
    total += fold.metrics.accuracy.value;
    ++count;
  }
  CHECK(report.mean.accuracy.value == doctest::Approx(total / count));
}

TEST_CASE("binary metrics hand case") {
  BinaryMetrics m = binary_metrics({7, 3, 2, 8});
  CHECK(m.accuracy.value == doctest::Approx(0.75));
  CHECK(m.sensitivity.value == doctest::Approx(7.0 / 9.0));
  CHECK(m.specificity.value == doctest::Approx(8.0 / 11.0));
  CHECK(m.ppv.value == doctest::Approx(0.7));
  CHECK(m.npv.value == doctest::Approx(0.8));

  BinaryMetrics perfect = binary_metrics({5, 0, 0, 5});
  CHECK(perfect.accuracy.value == 1.0);
  CHECK(perfect.sensitivity.value == 1.0);
  CHECK(perfect.specificity.value == 1.0);
  CHECK(perfect.ppv.value == 1.0);
  CHECK(perfect.npv.value == 1.0);

  BinaryMetrics degenerate = binary_metrics({0, 3, 0, 8});
  CHECK_FALSE(degenerate.sensitivity.defined);
  CHECK(degenerate.specificity.defined);
}

TEST_CASE("complementary rate identities hold on random confusions") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Confusion c{rng.uniform_int(1, 40), rng.uniform_int(1, 40),
                rng.uniform_int(1, 40), rng.uniform_int(1, 40)};
    BinaryMetrics m = binary_metrics(c);
    const double fnr = static_cast<double>(c.fn) / (c.tp + c.fn);
    const double fpr = static_cast<double>(c.fp) / (c.tn + c.fp);
    CHECK(m.sensitivity.value + fnr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.specificity.value + fpr == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("auroc basics") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), OneClassOnly);
}

TEST_CASE("auroc matches the pairwise oracle on random instances") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    int pos = 0;
    for (int i = 0; i < 20; ++i) {
      scores.push_back(rng.uniform_int(0, 9) / 10.0);  // force some ties
      labels.push_back(rng.uniform_int(0, 1));
      pos += labels.back();
    }
    if (pos == 0 || pos == 20) continue;
    CHECK(auroc(scores, labels) ==
          doctest::Approx(oracle_auroc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(10);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) {
    scores.push_back(rng.uniform(0.0, 1.0));
    labels.push_back(rng.uniform_int(0, 1));
  }
  labels[0] = 0;
  labels[1] = 1;
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) - 0.5);
  CHECK(auroc(scores, labels) ==
        doctest::Approx(auroc(transformed, labels)).epsilon(1e-12));
}

TEST_CASE("grid search with a single point returns it") {
  Rng rng(11);
  Dataset data = two_blobs(40, rng);
  ForestConfig cfg;
  cfg.n_estimators = 5;
  GridSearchResult result = grid_search(data, {cfg}, 4, 3);
  CHECK(result.table.size() == 1);
  CHECK(result.best.n_estimators == 5);
  CHECK(result.best_accuracy == result.table[0].cv_accuracy);
}

TEST_CASE("grid search winner dominates its own table") {
  Rng rng(12);
  Dataset data = two_blobs(60, rng, 1.5, 1.0);
  std::vector<ForestConfig> grid;
  for (int ne : {3, 10}) {
    for (int depth : {1, 0}) {
      ForestConfig cfg;
      cfg.n_estimators = ne;
      cfg.max_depth = depth;
      cfg.seed = 5;
      grid.push_back(cfg);
    }
  }
  GridSearchResult result = grid_search(data, grid, 4, 9);
  for (const auto& row : result.table) {
    CHECK(result.best_accuracy >= row.cv_accuracy);
  }
  // Re-evaluating the winner reproduces its table entry.
  EvalReport again = kfold_cv(data, result.best, 4, 9);
  CHECK(again.mean.accuracy.value == doctest::Approx(result.best_accuracy));
}

TEST_CASE("depth-1 grid entries lose to unrestricted depth on a depth-2 concept") {
  Rng rng(13);
  Dataset data;
  const int n = 120;
  data.x.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = static_cast<float>(rng.uniform(-1.0, 1.0));
    data.x(i, 1) = static_cast<float>(rng.uniform(-1.0, 1.0));
    data.y.push_back((data.x(i, 0) > 0.0f) != (data.x(i, 1) > 0.0f) ? 1 : 0);
  }
  ForestConfig stump;
  stump.max_depth = 1;
  stump.n_estimators = 20;
  stump.seed = 4;
  ForestConfig deep = stump;
  deep.max_depth = 0;
  GridSearchResult result = grid_search(data, {stump, deep}, 5, 17);
  CHECK(result.best.max_depth == 0);
  CHECK(result.table[1].cv_accuracy > result.table[0].cv_accuracy);
}

TEST_CASE("grid search rejects an empty grid") {
  Rng rng(14);
  Dataset data = two_blobs(20, rng);
  CHECK_THROWS_AS(grid_search(data, {}, 5, 0), EmptyGrid);
}

TEST_CASE("the fine-tuning grid has the full factorial size") {
  auto grid = default_grid(0);
  CHECK(grid.size() == 5u * 2u * 9u * 6u * 2u * 4u);
  CHECK(grid[0].n_estimators == 50);
  CHECK(grid[0].criterion == Criterion::Gini);
  CHECK(grid[0].min_samples_split == 2);
}

TEST_CASE("eval report serializes and parses losslessly") {
  Rng rng(15);
  Dataset data = two_blobs(50, rng, 1.0, 1.2);
  ForestConfig cfg;
  cfg.n_estimators = 8;
  EvalReport report = kfold_cv(data, cfg, 5, 21);
  const std::string table = report.to_table("demo");
  EvalReport parsed = EvalReport::from_table(table);
  REQUIRE(parsed.folds.size() == report.folds.size());
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    CHECK(parsed.folds[f].confusion.tp == report.folds[f].confusion.tp);
    CHECK(parsed.folds[f].metrics.accuracy.value ==
          report.folds[f].metrics.accuracy.value);
    CHECK(parsed.folds[f].auroc.defined == report.folds[f].auroc.defined);
    if (report.folds[f].auroc.defined) {
      CHECK(parsed.folds[f].auroc.value == report.folds[f].auroc.value);
    }
  }
  CHECK(parsed.mean.accuracy.value == report.mean.accuracy.value);
}

TEST_CASE("two-way anova matches the deviation-form oracle") {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t a = static_cast<std::size_t>(rng.uniform_int(2, 4));
    const std::size_t b = static_cast<std::size_t>(rng.uniform_int(2, 6));
    const std::size_t r = static_cast<std::size_t>(rng.uniform_int(2, 5));
    std::vector<std::vector<std::vector<double>>> cells(
        a, std::vector<std::vector<double>>(b));
    for (auto& row : cells)
      for (auto& cell : row)
        for (std::size_t k = 0; k < r; ++k) {
          cell.push_back(rng.uniform(0.0, 2.0));
        }
    AnovaResult result = anova_two_way(cells);
    OracleAnova oracle = oracle_anova(cells);
    CHECK(result.factor_a.ss == doctest::Approx(oracle.ss_a).epsilon(1e-6));
    CHECK(result.factor_b.ss == doctest::Approx(oracle.ss_b).epsilon(1e-6));
    CHECK(result.interaction.ss ==
          doctest::Approx(oracle.ss_ab).epsilon(1e-6));
    CHECK(result.ss_error == doctest::Approx(oracle.ss_error).epsilon(1e-6));
    // F ratios against the oracle's own ratio.
    const double ms_error =
        oracle.ss_error / static_cast<double>(a * b * (r - 1));
    const double f_a = (oracle.ss_a / (a - 1)) / ms_error;
    CHECK(result.factor_a.f == doctest::Approx(f_a).epsilon(1e-6));
  }
}

TEST_CASE("anova flags a zero within-group variance") {
  std::vector<std::vector<std::vector<double>>> cells(
      2, std::vector<std::vector<double>>(3, std::vector<double>(5, 1.0)));
  AnovaResult result = anova_two_way(cells);
  CHECK_FALSE(result.factor_a.defined);
  CHECK_FALSE(result.factor_b.defined);
}

TEST_CASE("anova rejects unbalanced designs") {
  std::vector<std::vector<std::vector<double>>> cells(
      2, std::vector<std::vector<double>>(2, std::vector<double>(3, 1.0)));
  cells[1][1].pop_back();
  CHECK_THROWS_AS(anova_two_way(cells), UnbalancedDesign);
  std::vector<std::vector<std::vector<double>>> single_rep(
      2, std::vector<std::vector<double>>(2, std::vector<double>(1, 1.0)));
  CHECK_THROWS_AS(anova_two_way(single_rep), UnbalancedDesign);
}

TEST_CASE("anova p-values use the F distribution") {
  // 2 x 6 design with 5 replications: model factor df (1, 48); the F crit
  // column of such a table is 4.042652129 at alpha 0.05.
  Rng rng(17);
  std::vector<std::vector<std::vector<double>>> cells(
      2, std::vector<std::vector<double>>(6));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (int k = 0; k < 5; ++k) {
        cells[i][j].push_back(0.1 * static_cast<double>(i) + rng.uniform(0.0, 1.0));
      }
  AnovaResult result = anova_two_way(cells, 0.05);
  CHECK(result.factor_a.df == 1);
  CHECK(result.df_error == 48);
  CHECK(result.factor_a.f_crit == doctest::Approx(4.042652129).epsilon(1e-7));
  CHECK(result.factor_a.p ==
        doctest::Approx(volnorm::stats::f_sf(result.factor_a.f, 1, 48)).epsilon(1e-12));
}

TEST_CASE("impact extrapolation hand cases") {
  ImpactReport r = impact_extrapolation(100, 0.4, 1.0, 1.0);
  CHECK(r.correctly_recommended == 40);
  CHECK(r.correctly_discouraged == 60);

  ImpactReport zero = impact_extrapolation(100, 0.4, 0.0, 0.0);
  CHECK(zero.correctly_recommended == 0);
  CHECK(zero.correctly_discouraged == 0);

  CHECK_THROWS_AS(impact_extrapolation(100, 1.4, 0.5, 0.5), InvalidRates);
}

TEST_CASE("implied prevalences reproduce the reported counts within one") {
  // Enhanced-model operating point with the global population estimate.
  const double population = 147889.0;
  const double sens = 0.783236383;
  const double spec = 0.533116883;
  const long reported_recommended = 46141;
  const long reported_discouraged = 47029;
  ImpliedPrevalence implied = implied_prevalence(
      population, sens, spec, reported_recommended, reported_discouraged);

  ImpactReport from_rec = impact_extrapolation(population,
                                               implied.from_recommended, sens, spec);
  CHECK(std::llabs(from_rec.correctly_recommended - reported_recommended) <= 1);
  ImpactReport from_dis = impact_extrapolation(
      population, implied.from_discouraged, sens, spec);
  CHECK(std::llabs(from_dis.correctly_discouraged - reported_discouraged) <= 1);

  // The two counts imply different prevalences: the published pair is not
  // consistent with any single split of the population.
  CHECK(std::fabs(implied.gap()) > 1e-3);
}
