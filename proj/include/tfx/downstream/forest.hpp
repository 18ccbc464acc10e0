#pragma once
// Random Forest classifier over raw padded signed-PL feature vectors.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"
#include "tfx/parallel.hpp"
#include "tfx/rng.hpp"

namespace tfx {

struct ForestConfig {
  int trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_leaf = 1;
  int features_per_split = 4;  // 0 = all features
  bool bootstrap = true;

  void validate() const {
    if (trees < 1) throw ConfigError("forest needs at least one tree");
    if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
    if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (features_per_split < 0) throw ConfigError("features_per_split must be >= 0");
  }

  nlohmann::ordered_json to_json() const {
    return {{"trees", trees},
            {"max_depth", max_depth},
            {"min_samples_leaf", min_samples_leaf},
            {"features_per_split", features_per_split},
            {"bootstrap", bootstrap}};
  }
};

/// Row-major feature table, one row of L values per sample.
struct FeatureTable {
  int width = 0;
  std::vector<double> values;
  std::vector<int> labels;

  std::size_t rows() const { return labels.size(); }
  double at(std::size_t r, int f) const {
    return values[r * static_cast<std::size_t>(width) + static_cast<std::size_t>(f)];
  }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * static_cast<std::size_t>(width), static_cast<std::size_t>(width)};
  }
};

inline FeatureTable feature_table(const std::vector<TrafficMatrix>& samples, int width) {
  FeatureTable t;
  t.width = width;
  t.values.reserve(samples.size() * static_cast<std::size_t>(width));
  for (const auto& s : samples) {
    if (s.length() != width) throw DataError("sample length differs from feature width");
    for (int v : s.values()) t.values.push_back(v);
    t.labels.push_back(s.label());
  }
  return t;
}

inline FeatureTable feature_table(const Corpus& corpus) { return feature_table(corpus.samples, corpus.space.length()); }

inline double gini(std::span<const std::uint32_t> counts) {
  double n = 0.0, sq = 0.0;
  for (auto c : counts) {
    n += c;
    sq += static_cast<double>(c) * c;
  }
  return n > 0.0 ? 1.0 - sq / (n * n) : 0.0;
}

inline double gini(std::initializer_list<std::uint32_t> counts) {
  return gini(std::span<const std::uint32_t>(counts.begin(), counts.size()));
}

/// Smallest id among the maxima.
inline int argmax_class(std::span<const std::uint32_t> counts) {
  int best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i)
    if (counts[i] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::vector<std::uint32_t> counts;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)];
  }
  int predict(std::span<const double> x) const { return argmax_class(leaf_for(x).counts); }
  int depth() const;
  bool operator==(const DecisionTree&) const = default;
};

inline int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
    d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

struct ForestModel {
  ForestConfig config;
  std::uint64_t seed = 0;
  int n_classes = 0;
  int width = 0;
  std::vector<DecisionTree> trees;

  bool operator==(const ForestModel& o) const {
    return seed == o.seed && n_classes == o.n_classes && width == o.width && trees == o.trees;
  }
};

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();  // weighted child impurity
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& data, int n_classes, const ForestConfig& cfg, Rng& rng)
      : data_(data), n_classes_(n_classes), cfg_(cfg), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::vector<std::uint32_t> count(const std::vector<std::size_t>& rows) const {
    std::vector<std::uint32_t> c(static_cast<std::size_t>(n_classes_), 0);
    for (auto r : rows) ++c[static_cast<std::size_t>(data_.labels[r])];
    return c;
  }

  // Best split on one feature: scans midpoints between consecutive distinct
  // sorted values, keeping the first strict improvement.
  void scan_feature(const std::vector<std::size_t>& rows, int f, const std::vector<std::uint32_t>& total,
                    SplitChoice& best) {
    order_.assign(rows.begin(), rows.end());
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      const double va = data_.at(a, f), vb = data_.at(b, f);
      return va < vb || (va == vb && a < b);
    });
    std::vector<std::uint32_t> left(static_cast<std::size_t>(n_classes_), 0);
    std::vector<std::uint32_t> right = total;
    const std::size_t n = order_.size();
    const auto min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto lab = static_cast<std::size_t>(data_.labels[order_[i]]);
      ++left[lab];
      --right[lab];
      const double v = data_.at(order_[i], f);
      const double next = data_.at(order_[i + 1], f);
      if (v == next) continue;
      const std::size_t nl = i + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double imp = (static_cast<double>(nl) * gini(left) + static_cast<double>(nr) * gini(right)) /
                         static_cast<double>(n);
      if (imp < best.impurity) {
        best.feature = f;
        best.threshold = v + (next - v) / 2.0;
        best.impurity = imp;
      }
    }
  }

  int grow(const std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({});
    auto counts = count(rows);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    const bool depth_cap = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
    const bool too_small = rows.size() < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf);
    SplitChoice best;
    if (!pure && !depth_cap && !too_small) {
      // Random feature order; the first `features_per_split` are examined,
      // and the search continues through the rest only while no valid
      // split has been found.
      std::vector<int> features(static_cast<std::size_t>(data_.width));
      std::iota(features.begin(), features.end(), 0);
      rng_.shuffle(features);
      const int k = cfg_.features_per_split == 0 ? data_.width : std::min(cfg_.features_per_split, data_.width);
      for (int i = 0; i < data_.width; ++i) {
        if (i >= k && best.feature >= 0) break;
        scan_feature(rows, features[static_cast<std::size_t>(i)], counts, best);
      }
    }
    if (best.feature < 0) {
      tree_.nodes[static_cast<std::size_t>(id)].counts = std::move(counts);
      return id;
    }
    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) (data_.at(r, best.feature) <= best.threshold ? lrows : rrows).push_back(r);
    const int l = grow(lrows, depth + 1);
    const int r = grow(rrows, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    node.counts = std::move(counts);
    return id;
  }

  const FeatureTable& data_;
  int n_classes_;
  const ForestConfig& cfg_;
  Rng& rng_;
  DecisionTree tree_;
  std::vector<std::size_t> order_;
};

}  // namespace detail

/// Tree t uses the stream derive_seed(seed, t) for its bootstrap draw and
/// feature choices, so the forest does not depend on the thread count.
inline ForestModel forest_fit(const FeatureTable& data, int n_classes, const ForestConfig& cfg, std::uint64_t seed,
                              unsigned threads = 1) {
  cfg.validate();
  if (data.rows() == 0) throw DataError("forest training set is empty");
  std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
  for (int l : data.labels) {
    if (l < 0 || l >= n_classes) throw DataError("training label outside label space");
    seen[static_cast<std::size_t>(l)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) throw DataError("forest training needs at least 2 classes");
  ForestModel m;
  m.config = cfg;
  m.seed = seed;
  m.n_classes = n_classes;
  m.width = data.width;
  m.trees.resize(static_cast<std::size_t>(cfg.trees));
  parallel_for(m.trees.size(), threads, [&](std::size_t t) {
    Rng rng(derive_seed(seed, 0xf0e5, t));
    std::vector<std::size_t> rows(data.rows());
    if (cfg.bootstrap)
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(data.rows()));
    else
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::sort(rows.begin(), rows.end());
    detail::TreeBuilder b(data, n_classes, cfg, rng);
    m.trees[t] = b.build(std::move(rows));
  });
  return m;
}

inline ForestModel forest_fit(const Corpus& train, const ForestConfig& cfg, std::uint64_t seed,
                              unsigned threads = 1) {
  return forest_fit(feature_table(train), train.space.size(), cfg, seed, threads);
}

/// Majority of per-tree votes; ties go to the smaller class id.
inline int forest_predict_one(const ForestModel& m, std::span<const double> x) {
  std::vector<std::uint32_t> votes(static_cast<std::size_t>(m.n_classes), 0);
  for (const auto& t : m.trees) ++votes[static_cast<std::size_t>(t.predict(x))];
  return argmax_class(votes);
}

inline std::vector<int> forest_predict(const ForestModel& m, const FeatureTable& data, unsigned threads = 1) {
  if (data.width != m.width) throw DataError("feature width differs from the trained forest");
  std::vector<int> out(data.rows());
  parallel_for(data.rows(), threads, [&](std::size_t i) { out[i] = forest_predict_one(m, data.row(i)); });
  return out;
}

inline std::vector<int> forest_predict(const ForestModel& m, const Corpus& corpus, unsigned threads = 1) {
  return forest_predict(m, feature_table(corpus), threads);
}

}  // namespace tfx
