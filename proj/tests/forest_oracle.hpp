#pragma once
// Brute-force tree builder used as an oracle for the forest: every feature
// and every midpoint threshold is tried at every node.

#include <algorithm>
#include <limits>
#include <memory>
#include <set>
#include <vector>

namespace tfx::testkit {

struct OracleTree {
  int feature = -1;
  double threshold = 0.0;
  int label = 0;
  double split_impurity = 0.0;
  std::unique_ptr<OracleTree> left, right;

  int predict(const std::vector<double>& x) const {
    if (feature < 0) return label;
    return (x[static_cast<std::size_t>(feature)] <= threshold ? left : right)->predict(x);
  }
};

inline double oracle_gini(const std::vector<int>& labels, const std::vector<std::size_t>& rows, int n_classes) {
  if (rows.empty()) return 0.0;
  std::vector<double> c(static_cast<std::size_t>(n_classes), 0.0);
  for (auto r : rows) c[static_cast<std::size_t>(labels[r])] += 1.0;
  double g = 1.0;
  for (double x : c) g -= (x / static_cast<double>(rows.size())) * (x / static_cast<double>(rows.size()));
  return g;
}

inline std::unique_ptr<OracleTree> oracle_build(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                                const std::vector<std::size_t>& rows, int n_classes) {
  auto node = std::make_unique<OracleTree>();
  std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
  for (auto r : rows) ++votes[static_cast<std::size_t>(y[r])];
  node->label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  if (std::count_if(votes.begin(), votes.end(), [](int v) { return v > 0; }) <= 1) return node;

  double best = std::numeric_limits<double>::infinity();
  const auto width = static_cast<int>(x[rows[0]].size());
  for (int f = 0; f < width; ++f) {
    std::set<double> values;
    for (auto r : rows) values.insert(x[r][static_cast<std::size_t>(f)]);
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double t = (*it + *std::next(it)) / 2.0;
      std::vector<std::size_t> l, rr;
      for (auto r : rows) (x[r][static_cast<std::size_t>(f)] <= t ? l : rr).push_back(r);
      const double imp = (static_cast<double>(l.size()) * oracle_gini(y, l, n_classes) +
                          static_cast<double>(rr.size()) * oracle_gini(y, rr, n_classes)) /
                         static_cast<double>(rows.size());
      if (imp < best) {
        best = imp;
        node->feature = f;
        node->threshold = t;
      }
    }
  }
  if (node->feature < 0) return node;
  node->split_impurity = best;
  std::vector<std::size_t> l, rr;
  for (auto r : rows) (x[r][static_cast<std::size_t>(node->feature)] <= node->threshold ? l : rr).push_back(r);
  node->left = oracle_build(x, y, l, n_classes);
  node->right = oracle_build(x, y, rr, n_classes);
  return node;
}

}  // namespace tfx::testkit
