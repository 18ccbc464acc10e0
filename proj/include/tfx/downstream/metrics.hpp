#pragma once
// Classification metrics.

#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"

namespace tfx {

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct F1Report {
  std::vector<ClassScore> classes;
  double macro_f1 = 0.0;
  double accuracy = 0.0;

  nlohmann::ordered_json to_json(const LabelSpace* space = nullptr) const {
    nlohmann::ordered_json j;
    j["macro_f1"] = macro_f1;
    j["accuracy"] = accuracy;
    auto& per = j["per_class"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      nlohmann::ordered_json row;
      row["label"] = c;
      if (space) row["name"] = space->names()[c];
      row["precision"] = classes[c].precision;
      row["recall"] = classes[c].recall;
      row["f1"] = classes[c].f1;
      row["support"] = classes[c].support;
      per.push_back(row);
    }
    return j;
  }
};

/// Per-class precision, recall and F1 with every zero denominator scored 0,
/// averaged without weights over all n_classes.
inline F1Report f1_report(const std::vector<int>& truth, const std::vector<int>& predicted, int n_classes) {
  if (truth.size() != predicted.size()) throw DataError("truth and prediction lengths differ");
  if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
  const auto n = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> tp(n, 0), fp(n, 0), fn(n, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) throw DataError("label outside [0, n_classes)");
    if (t == p) {
      ++tp[static_cast<std::size_t>(t)];
      ++correct;
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  F1Report rep;
  rep.classes.resize(n);
  double sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    auto& s = rep.classes[c];
    s.support = tp[c] + fn[c];
    s.precision = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    s.recall = s.support ? static_cast<double>(tp[c]) / static_cast<double>(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    sum += s.f1;
  }
  rep.macro_f1 = sum / static_cast<double>(n);
  rep.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  return rep;
}

inline double macro_f1(const std::vector<int>& truth, const std::vector<int>& predicted, int n_classes) {
  return f1_report(truth, predicted, n_classes).macro_f1;
}

}  // namespace tfx
