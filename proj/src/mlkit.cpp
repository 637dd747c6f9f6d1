#include "volnorm/mlkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>
#include <thread>

#include "volnorm/errors.hpp"
#include "volnorm/stats.hpp"

namespace volnorm::ml {

void Dataset::validate() const {
  if (x.rows() == 0 || x.cols() == 0) throw EmptyData("dataset is empty");
  if (static_cast<int>(y.size()) != n()) {
    throw InconsistentDims("label count does not match sample count");
  }
  for (int label : y) {
    if (label != 0 && label != 1) {
      throw InconsistentDims("labels must be binary 0/1");
    }
  }
}

void ForestConfig::validate() const {
  if (n_estimators < 1) throw InvalidConfig("n_estimators must be >= 1");
  if (min_samples_split < 2) {
    throw InvalidConfig("min_samples_split must be >= 2");
  }
  if (max_depth < 0) throw InvalidConfig("max_depth must be >= 1 when set");
  if (max_leaf_nodes != 0 && max_leaf_nodes < 2) {
    throw InvalidConfig("max_leaf_nodes must be >= 2 when set");
  }
  if (features_per_split < -1) {
    throw InvalidConfig("features_per_split must be -1, 0 or positive");
  }
}

std::string ForestConfig::describe() const {
  std::ostringstream out;
  out << "n_estimators=" << n_estimators
      << " criterion=" << (criterion == Criterion::Gini ? "gini" : "entropy")
      << " max_depth=" << (max_depth > 0 ? std::to_string(max_depth) : "none")
      << " max_leaf_nodes="
      << (max_leaf_nodes > 0 ? std::to_string(max_leaf_nodes) : "none")
      << " class_weight=" << (balanced_class_weight ? "balanced" : "none")
      << " min_samples_split=" << min_samples_split;
  return out.str();
}

namespace {

// Exact per-feature value binning: one bin per distinct training value, so
// bin-wise split scans reproduce exhaustive midpoint CART splits.
struct FeatureBins {
  std::vector<float> bin_value;  // ascending distinct values
  std::vector<int> sample_bin;   // n entries
};

std::vector<FeatureBins> bin_dataset(const Dataset& data) {
  const int n = data.n(), d = data.d();
  std::vector<FeatureBins> bins(static_cast<std::size_t>(d));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int j = 0; j < d; ++j) {
    auto& fb = bins[static_cast<std::size_t>(j)];
    fb.sample_bin.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return data.x(a, j) < data.x(b, j);
    });
    float last = 0.0f;
    for (int k = 0; k < n; ++k) {
      const float v = data.x(order[static_cast<std::size_t>(k)], j);
      if (fb.bin_value.empty() || v != last) {
        fb.bin_value.push_back(v);
        last = v;
      }
      fb.sample_bin[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
          static_cast<int>(fb.bin_value.size()) - 1;
    }
  }
  return bins;
}

double impurity(Criterion criterion, double w0, double w1) {
  const double w = w0 + w1;
  if (w <= 0.0) return 0.0;
  const double p0 = w0 / w, p1 = w1 / w;
  if (criterion == Criterion::Gini) {
    return 1.0 - p0 * p0 - p1 * p1;
  }
  double h = 0.0;
  if (p0 > 0.0) h -= p0 * std::log2(p0);
  if (p1 > 0.0) h -= p1 * std::log2(p1);
  return h;
}

// decrease starts below zero so an impure node accepts even a zero-gain
// split (a greedy tree cannot memorize XOR-like concepts otherwise); a
// later candidate must beat the incumbent by more than rounding noise.
struct SplitChoice {
  int feature = -1;
  float threshold = 0.0f;
  double decrease = -1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const std::vector<FeatureBins>& bins,
              const ForestConfig& cfg, int mtry, const double* class_weight,
              Rng rng)
      : data_(data),
        bins_(bins),
        cfg_(cfg),
        mtry_(mtry),
        class_weight_(class_weight),
        rng_(std::move(rng)) {
    int max_bins = 0;
    for (const auto& fb : bins) {
      max_bins = std::max(max_bins, static_cast<int>(fb.bin_value.size()));
    }
    w0_.resize(static_cast<std::size_t>(max_bins));
    w1_.resize(static_cast<std::size_t>(max_bins));
    feature_order_.resize(static_cast<std::size_t>(data.d()));
    std::iota(feature_order_.begin(), feature_order_.end(), 0);
  }

  Tree build(std::vector<int> idx) {
    Tree tree;
    if (cfg_.max_leaf_nodes > 0) {
      grow_best_first(tree, std::move(idx));
    } else {
      grow_depth_first(tree, std::move(idx), 0);
    }
    return tree;
  }

 private:
  struct NodeStats {
    double w0 = 0.0, w1 = 0.0;
  };

  NodeStats node_stats(const std::vector<int>& idx) const {
    NodeStats s;
    for (int i : idx) {
      if (data_.y[static_cast<std::size_t>(i)] == 0) {
        s.w0 += class_weight_[0];
      } else {
        s.w1 += class_weight_[1];
      }
    }
    return s;
  }

  float leaf_prob(const NodeStats& s) const {
    const double w = s.w0 + s.w1;
    return w > 0.0 ? static_cast<float>(s.w1 / w) : 0.0f;
  }

  bool splittable(const NodeStats& s, std::size_t n_samples, int depth) const {
    if (s.w0 <= 0.0 || s.w1 <= 0.0) return false;  // pure
    if (static_cast<int>(n_samples) < cfg_.min_samples_split) return false;
    if (cfg_.max_depth > 0 && depth >= cfg_.max_depth) return false;
    return true;
  }

  // Feature subset for one node: the first mtry entries of a partial
  // Fisher-Yates pass, or natural order when every feature is searched.
  std::vector<int> sample_features() {
    if (mtry_ >= data_.d()) return feature_order_;
    std::vector<int> pool = feature_order_;
    std::vector<int> chosen(static_cast<std::size_t>(mtry_));
    for (int k = 0; k < mtry_; ++k) {
      const int pick = rng_.uniform_int(k, data_.d() - 1);
      std::swap(pool[static_cast<std::size_t>(k)],
                pool[static_cast<std::size_t>(pick)]);
      chosen[static_cast<std::size_t>(k)] = pool[static_cast<std::size_t>(k)];
    }
    return chosen;
  }

  SplitChoice best_split(const std::vector<int>& idx, const NodeStats& stats) {
    SplitChoice best;
    const double w_total = stats.w0 + stats.w1;
    const double parent_imp = impurity(cfg_.criterion, stats.w0, stats.w1);
    for (int feature : sample_features()) {
      const auto& fb = bins_[static_cast<std::size_t>(feature)];
      const int nbins = static_cast<int>(fb.bin_value.size());
      if (nbins < 2) continue;
      std::fill(w0_.begin(), w0_.begin() + nbins, 0.0);
      std::fill(w1_.begin(), w1_.begin() + nbins, 0.0);
      for (int i : idx) {
        const int b = fb.sample_bin[static_cast<std::size_t>(i)];
        if (data_.y[static_cast<std::size_t>(i)] == 0) {
          w0_[static_cast<std::size_t>(b)] += class_weight_[0];
        } else {
          w1_[static_cast<std::size_t>(b)] += class_weight_[1];
        }
      }
      double left0 = 0.0, left1 = 0.0;
      float last_value = 0.0f;
      bool have_left = false;
      for (int b = 0; b < nbins; ++b) {
        const double b0 = w0_[static_cast<std::size_t>(b)];
        const double b1 = w1_[static_cast<std::size_t>(b)];
        if (b0 + b1 <= 0.0) continue;
        if (have_left) {
          const double right0 = stats.w0 - left0;
          const double right1 = stats.w1 - left1;
          const double wl = left0 + left1, wr = right0 + right1;
          const double decrease =
              parent_imp - (wl * impurity(cfg_.criterion, left0, left1) +
                            wr * impurity(cfg_.criterion, right0, right1)) /
                               w_total;
          if (decrease > best.decrease + 1e-12) {
            best.feature = feature;
            best.threshold =
                0.5f * (last_value + fb.bin_value[static_cast<std::size_t>(b)]);
            best.decrease = decrease;
          }
        }
        left0 += b0;
        left1 += b1;
        last_value = fb.bin_value[static_cast<std::size_t>(b)];
        have_left = true;
      }
    }
    return best;
  }

  std::pair<std::vector<int>, std::vector<int>> partition(
      const std::vector<int>& idx, const SplitChoice& split) const {
    std::vector<int> left, right;
    left.reserve(idx.size());
    right.reserve(idx.size());
    for (int i : idx) {
      if (data_.x(i, split.feature) <= split.threshold) {
        left.push_back(i);
      } else {
        right.push_back(i);
      }
    }
    return {std::move(left), std::move(right)};
  }

  int grow_depth_first(Tree& tree, std::vector<int> idx, int depth) {
    const NodeStats stats = node_stats(idx);
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(node_id)].prob = leaf_prob(stats);
    if (!splittable(stats, idx.size(), depth)) return node_id;
    const SplitChoice split = best_split(idx, stats);
    if (split.feature < 0) return node_id;
    auto [left_idx, right_idx] = partition(idx, split);
    if (left_idx.empty() || right_idx.empty()) return node_id;
    idx.clear();
    idx.shrink_to_fit();
    const int left = grow_depth_first(tree, std::move(left_idx), depth + 1);
    const int right = grow_depth_first(tree, std::move(right_idx), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return node_id;
  }

  // Best-first growth for max_leaf_nodes: repeatedly split the candidate
  // leaf with the largest impurity decrease.
  void grow_best_first(Tree& tree, std::vector<int> root_idx) {
    struct Candidate {
      int node_id;
      int depth;
      std::vector<int> idx;
      SplitChoice split;
      long sequence;  // tie break: earlier candidate first
    };
    const auto worse = [](const Candidate& a, const Candidate& b) {
      if (a.split.decrease != b.split.decrease) {
        return a.split.decrease < b.split.decrease;
      }
      return a.sequence > b.sequence;
    };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)>
        queue(worse);
    long sequence = 0;

    const auto make_candidate = [&](int node_id, std::vector<int> idx,
                                    int depth) {
      const NodeStats stats = node_stats(idx);
      tree.nodes[static_cast<std::size_t>(node_id)].prob = leaf_prob(stats);
      if (!splittable(stats, idx.size(), depth)) return;
      const SplitChoice split = best_split(idx, stats);
      if (split.feature < 0) return;
      queue.push({node_id, depth, std::move(idx), split, sequence++});
    };

    tree.nodes.push_back({});
    make_candidate(0, std::move(root_idx), 0);
    int leaves = 1;
    while (!queue.empty() && leaves < cfg_.max_leaf_nodes) {
      Candidate cand = std::move(const_cast<Candidate&>(queue.top()));
      queue.pop();
      auto [left_idx, right_idx] = partition(cand.idx, cand.split);
      if (left_idx.empty() || right_idx.empty()) continue;
      const int left_id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      const int right_id = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      auto& node = tree.nodes[static_cast<std::size_t>(cand.node_id)];
      node.feature = cand.split.feature;
      node.threshold = cand.split.threshold;
      node.left = left_id;
      node.right = right_id;
      ++leaves;
      make_candidate(left_id, std::move(left_idx), cand.depth + 1);
      make_candidate(right_id, std::move(right_idx), cand.depth + 1);
    }
  }

  const Dataset& data_;
  const std::vector<FeatureBins>& bins_;
  const ForestConfig& cfg_;
  int mtry_;
  const double* class_weight_;
  Rng rng_;
  std::vector<double> w0_, w1_;
  std::vector<int> feature_order_;
};

void resolve_class_weight(const Dataset& data, const ForestConfig& cfg,
                          double* out) {
  out[0] = out[1] = 1.0;
  if (!cfg.balanced_class_weight) return;
  long n1 = 0;
  for (int label : data.y) n1 += label;
  const long n0 = data.n() - n1;
  if (n0 > 0) out[0] = static_cast<double>(data.n()) / (2.0 * n0);
  if (n1 > 0) out[1] = static_cast<double>(data.n()) / (2.0 * n1);
}

int resolve_mtry(const ForestConfig& cfg, int d, bool standalone) {
  if (cfg.features_per_split > 0) return std::min(cfg.features_per_split, d);
  if (cfg.features_per_split == 0) return d;
  if (standalone) return d;
  return std::max(1, static_cast<int>(std::floor(std::sqrt(d))));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Tree fit_tree(const Dataset& data, const ForestConfig& config) {
  data.validate();
  config.validate();
  const auto bins = bin_dataset(data);
  double class_weight[2];
  resolve_class_weight(data, config, class_weight);
  TreeBuilder builder(data, bins, config,
                      resolve_mtry(config, data.d(), /*standalone=*/true),
                      class_weight, Rng(derive_seed(config.seed, 0)));
  std::vector<int> idx(static_cast<std::size_t>(data.n()));
  std::iota(idx.begin(), idx.end(), 0);
  return builder.build(std::move(idx));
}

double tree_class1_probability(const Tree& tree, const float* x) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& n = tree.nodes[static_cast<std::size_t>(node)];
    node = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[static_cast<std::size_t>(node)].prob;
}

TreePrediction predict_tree(const Tree& tree, const float* x) {
  const double p1 = tree_class1_probability(tree, x);
  const int label = p1 >= 0.5 ? 1 : 0;
  return {label, label == 1 ? p1 : 1.0 - p1};
}

Forest fit_forest(const Dataset& data, const ForestConfig& config) {
  data.validate();
  config.validate();
  const auto bins = bin_dataset(data);
  double class_weight[2];
  resolve_class_weight(data, config, class_weight);
  const int mtry = resolve_mtry(config, data.d(), /*standalone=*/false);

  Forest forest;
  forest.trees.resize(static_cast<std::size_t>(config.n_estimators));
  for (int t = 0; t < config.n_estimators; ++t) {
    Rng tree_rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> idx(static_cast<std::size_t>(data.n()));
    if (config.bootstrap) {
      for (auto& i : idx) i = tree_rng.uniform_int(0, data.n() - 1);
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    TreeBuilder builder(data, bins, config, mtry, class_weight,
                        std::move(tree_rng));
    forest.trees[static_cast<std::size_t>(t)] = builder.build(std::move(idx));
  }
  return forest;
}

double predict_proba(const Forest& forest, const float* x) {
  double total = 0.0;
  for (const auto& tree : forest.trees) {
    total += tree_class1_probability(tree, x);
  }
  return total / static_cast<double>(forest.trees.size());
}

BinaryMetrics binary_metrics(const Confusion& c) {
  const auto ratio = [](long num, long den) -> MetricValue {
    if (den == 0) return {0.0, false};
    return {static_cast<double>(num) / static_cast<double>(den), true};
  };
  BinaryMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.npv = ratio(c.tn, c.tn + c.fn);
  return m;
}

double auroc(const std::vector<double>& scores,
             const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw LengthMismatch("auroc: score/label counts differ");
  }
  const std::size_t n = scores.size();
  long n_pos = 0;
  for (int label : labels) n_pos += label;
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw OneClassOnly("auroc needs both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average ranks over tie groups, then the Mann-Whitney statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<std::vector<int>> kfold_partition(int n, int k,
                                              std::uint64_t seed) {
  if (k < 2) throw InvalidConfig("k must be >= 2");
  if (k > n) throw KTooLarge("k exceeds the sample count");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    folds[static_cast<std::size_t>(f)].assign(order.begin() + pos,
                                              order.begin() + pos + size);
    pos += size;
  }
  return folds;
}

namespace {

void accumulate_mean(const std::vector<FoldResult>& folds, EvalReport& report) {
  const auto mean_of = [&](auto getter) -> MetricValue {
    double total = 0.0;
    int count = 0;
    for (const auto& fold : folds) {
      const MetricValue v = getter(fold);
      if (v.defined) {
        total += v.value;
        ++count;
      }
    }
    if (count == 0) return {0.0, false};
    return {total / count, true};
  };
  report.mean.accuracy =
      mean_of([](const FoldResult& f) { return f.metrics.accuracy; });
  report.mean.sensitivity =
      mean_of([](const FoldResult& f) { return f.metrics.sensitivity; });
  report.mean.specificity =
      mean_of([](const FoldResult& f) { return f.metrics.specificity; });
  report.mean.ppv = mean_of([](const FoldResult& f) { return f.metrics.ppv; });
  report.mean.npv = mean_of([](const FoldResult& f) { return f.metrics.npv; });
  report.mean_auroc = mean_of([](const FoldResult& f) { return f.auroc; });
}

}  // namespace

EvalReport kfold_cv(const Dataset& data, const ForestConfig& config, int k,
                    std::uint64_t seed) {
  data.validate();
  const auto folds = kfold_partition(data.n(), k, seed);
  EvalReport report;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& test_idx = folds[f];
    std::vector<char> in_test(static_cast<std::size_t>(data.n()), 0);
    for (int i : test_idx) in_test[static_cast<std::size_t>(i)] = 1;

    Dataset train;
    train.x.resize(data.n() - static_cast<int>(test_idx.size()), data.d());
    int row = 0;
    for (int i = 0; i < data.n(); ++i) {
      if (in_test[static_cast<std::size_t>(i)]) continue;
      train.x.row(row) = data.x.row(i);
      train.y.push_back(data.y[static_cast<std::size_t>(i)]);
      ++row;
    }
    ForestConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, 1000 + f);
    const Forest forest = fit_forest(train, fold_config);

    FoldResult result;
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i : test_idx) {
      const double p = predict_proba(forest, data.x.row(i).data());
      const int predicted = p >= 0.5 ? 1 : 0;
      const int actual = data.y[static_cast<std::size_t>(i)];
      scores.push_back(p);
      labels.push_back(actual);
      if (actual == 1) {
        (predicted == 1 ? result.confusion.tp : result.confusion.fn)++;
      } else {
        (predicted == 1 ? result.confusion.fp : result.confusion.tn)++;
      }
    }
    result.metrics = binary_metrics(result.confusion);
    bool has_both = false;
    {
      long pos = 0;
      for (int label : labels) pos += label;
      has_both = pos > 0 && pos < static_cast<long>(labels.size());
    }
    if (has_both) {
      result.auroc = {auroc(scores, labels), true};
    }
    report.folds.push_back(std::move(result));
  }
  accumulate_mean(report.folds, report);
  return report;
}

namespace {

std::string metric_to_string(const MetricValue& v) {
  if (!v.defined) return "na";
  std::ostringstream out;
  out.precision(17);
  out << v.value;
  return out.str();
}

MetricValue metric_from_string(const std::string& s) {
  if (s == "na") return {0.0, false};
  return {std::stod(s), true};
}

}  // namespace

std::string EvalReport::to_table(const std::string& model_name) const {
  std::ostringstream out;
  out << "# model\t" << model_name << "\n";
  out << "fold\ttp\tfp\tfn\ttn\taccuracy\tsensitivity\tspecificity\tppv\tnpv"
         "\tauroc\n";
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto& fold = folds[f];
    out << (f + 1) << '\t' << fold.confusion.tp << '\t' << fold.confusion.fp
        << '\t' << fold.confusion.fn << '\t' << fold.confusion.tn << '\t'
        << metric_to_string(fold.metrics.accuracy) << '\t'
        << metric_to_string(fold.metrics.sensitivity) << '\t'
        << metric_to_string(fold.metrics.specificity) << '\t'
        << metric_to_string(fold.metrics.ppv) << '\t'
        << metric_to_string(fold.metrics.npv) << '\t'
        << metric_to_string(fold.auroc) << '\n';
  }
  out << "mean\t-\t-\t-\t-\t" << metric_to_string(mean.accuracy) << '\t'
      << metric_to_string(mean.sensitivity) << '\t'
      << metric_to_string(mean.specificity) << '\t'
      << metric_to_string(mean.ppv) << '\t' << metric_to_string(mean.npv)
      << '\t' << metric_to_string(mean_auroc) << '\n';
  return out.str();
}

EvalReport EvalReport::from_table(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::vector<std::string> fields;
    std::string field;
    while (std::getline(row, field, '\t')) fields.push_back(field);
    if (fields.empty() || fields[0] == "fold" || fields[0] == "mean") continue;
    if (fields.size() != 11) {
      throw IoError("malformed EvalReport row: " + line);
    }
    FoldResult fold;
    fold.confusion.tp = std::stol(fields[1]);
    fold.confusion.fp = std::stol(fields[2]);
    fold.confusion.fn = std::stol(fields[3]);
    fold.confusion.tn = std::stol(fields[4]);
    fold.metrics.accuracy = metric_from_string(fields[5]);
    fold.metrics.sensitivity = metric_from_string(fields[6]);
    fold.metrics.specificity = metric_from_string(fields[7]);
    fold.metrics.ppv = metric_from_string(fields[8]);
    fold.metrics.npv = metric_from_string(fields[9]);
    fold.auroc = metric_from_string(fields[10]);
    report.folds.push_back(fold);
  }
  if (report.folds.empty()) {
    throw IoError("EvalReport table has no fold rows");
  }
  accumulate_mean(report.folds, report);
  return report;
}

GridSearchResult grid_search(const Dataset& data,
                             const std::vector<ForestConfig>& grid, int k,
                             std::uint64_t seed, int workers) {
  if (grid.empty()) throw EmptyGrid("grid search needs at least one config");
  data.validate();
  std::vector<GridPointResult> table(grid.size());
  std::atomic<std::size_t> next{0};
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
  }
  workers = std::max(1, std::min<int>(workers, static_cast<int>(grid.size())));

  const auto run = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) break;
      const EvalReport report = kfold_cv(data, grid[i], k, seed);
      table[i] = {grid[i], report.mean.accuracy.value};
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();

  std::size_t best = 0;
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i].cv_accuracy > table[best].cv_accuracy) best = i;
  }
  return {table[best].config, table[best].cv_accuracy, std::move(table)};
}

std::vector<ForestConfig> default_grid(std::uint64_t seed) {
  const int n_estimators[] = {50, 150, 200, 250, 300};
  const Criterion criteria[] = {Criterion::Gini, Criterion::Entropy};
  const int max_depths[] = {10, 15, 20, 25, 30, 35, 40, 45, 50};
  const int max_leaves[] = {5, 10, 15, 20, 30, 0};
  const bool class_weights[] = {true, false};
  const int min_splits[] = {2, 4, 6, 8};

  std::vector<ForestConfig> grid;
  for (int ne : n_estimators)
    for (Criterion crit : criteria)
      for (int depth : max_depths)
        for (int leaves : max_leaves)
          for (bool balanced : class_weights)
            for (int ms : min_splits) {
              ForestConfig cfg;
              cfg.n_estimators = ne;
              cfg.criterion = crit;
              cfg.max_depth = depth;
              cfg.max_leaf_nodes = leaves;
              cfg.balanced_class_weight = balanced;
              cfg.min_samples_split = ms;
              cfg.seed = seed;
              grid.push_back(cfg);
            }
  return grid;
}

AnovaResult anova_two_way(
    const std::vector<std::vector<std::vector<double>>>& cells, double alpha) {
  const std::size_t a = cells.size();
  if (a < 2) throw UnbalancedDesign("factor A needs at least 2 levels");
  const std::size_t b = cells[0].size();
  if (b < 2) throw UnbalancedDesign("factor B needs at least 2 levels");
  std::size_t r = cells[0][0].size();
  if (r < 2) throw UnbalancedDesign("need at least 2 replications");
  for (const auto& row : cells) {
    if (row.size() != b) throw UnbalancedDesign("ragged factor B levels");
    for (const auto& cell : row) {
      if (cell.size() != r) {
        throw UnbalancedDesign("unequal replication counts");
      }
    }
  }

  // Sums-of-squares shortcut route.
  const double n_total = static_cast<double>(a * b * r);
  double grand = 0.0, sum_sq = 0.0;
  std::vector<double> row_sum(a, 0.0), col_sum(b, 0.0);
  std::vector<std::vector<double>> cell_sum(a, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (double v : cells[i][j]) {
        grand += v;
        sum_sq += v * v;
        row_sum[i] += v;
        col_sum[j] += v;
        cell_sum[i][j] += v;
      }
  const double cf = grand * grand / n_total;
  const double ss_total = sum_sq - cf;
  double ss_a = -cf, ss_b = -cf, ss_cells = -cf;
  for (std::size_t i = 0; i < a; ++i) {
    ss_a += row_sum[i] * row_sum[i] / (static_cast<double>(b) * r);
  }
  for (std::size_t j = 0; j < b; ++j) {
    ss_b += col_sum[j] * col_sum[j] / (static_cast<double>(a) * r);
  }
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      ss_cells += cell_sum[i][j] * cell_sum[i][j] / static_cast<double>(r);
    }
  const double ss_ab = ss_cells - ss_a - ss_b;
  const double ss_error = ss_total - ss_cells;

  AnovaResult result;
  result.ss_error = ss_error;
  result.df_error = static_cast<int>(a * b * (r - 1));
  result.ms_error = ss_error / result.df_error;

  const auto make_factor = [&](const std::string& name, double ss, int df) {
    AnovaFactor factor;
    factor.source = name;
    factor.ss = ss;
    factor.df = df;
    factor.ms = ss / df;
    if (result.ms_error > 0.0) {
      factor.defined = true;
      factor.f = factor.ms / result.ms_error;
      factor.p = stats::f_sf(factor.f, df, result.df_error);
      factor.f_crit = stats::f_critical(alpha, df, result.df_error);
    }
    return factor;
  };
  result.factor_a =
      make_factor("model", ss_a, static_cast<int>(a) - 1);
  result.factor_b =
      make_factor("metric", ss_b, static_cast<int>(b) - 1);
  result.interaction = make_factor(
      "interaction", ss_ab, (static_cast<int>(a) - 1) * (static_cast<int>(b) - 1));
  return result;
}

ImpactReport impact_extrapolation(double population, double prevalence,
                                  double sensitivity, double specificity) {
  if (!(population >= 0.0)) throw InvalidRates("population must be >= 0");
  for (double rate : {prevalence, sensitivity, specificity}) {
    if (!(rate >= 0.0 && rate <= 1.0)) {
      throw InvalidRates("rates must lie in [0, 1]");
    }
  }
  ImpactReport report;
  report.correctly_recommended =
      std::llround(population * prevalence * sensitivity);
  report.correctly_discouraged =
      std::llround(population * (1.0 - prevalence) * specificity);
  return report;
}

ImpliedPrevalence implied_prevalence(double population, double sensitivity,
                                     double specificity,
                                     long reported_recommended,
                                     long reported_discouraged) {
  if (!(population > 0.0) || !(sensitivity > 0.0) || !(specificity > 0.0)) {
    throw InvalidRates("population, sensitivity and specificity must be > 0");
  }
  ImpliedPrevalence implied;
  implied.from_recommended =
      static_cast<double>(reported_recommended) / (population * sensitivity);
  implied.from_discouraged =
      1.0 - static_cast<double>(reported_discouraged) / (population * specificity);
  return implied;
}

}  // namespace volnorm::ml
