#pragma once
// Downstream utility protocols: train-on-synthetic/test-on-real and the
// low-data augmentation sweep.

#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfx/augmenters.hpp"
#include "tfx/core.hpp"
#include "tfx/downstream/forest.hpp"
#include "tfx/downstream/metrics.hpp"
#include "tfx/fidelity.hpp"
#include "tfx/generators/generator.hpp"

namespace tfx {

inline constexpr double kTrainFraction = 0.8;

/// The fixed real split every protocol variant shares.
struct RealSplit {
  Corpus train;
  Corpus test;
};

inline RealSplit make_real_split(const Corpus& real, std::uint64_t seed) {
  auto [train, test] = split_corpus(real, kTrainFraction, derive_seed(seed, 0x5b11));
  return {std::move(train), std::move(test)};
}

/// Fits a forest on `train` and scores it on `test`.
inline F1Report train_and_score(const Corpus& train, const Corpus& test, const ForestConfig& cfg, std::uint64_t seed,
                                unsigned threads = 1) {
  const auto model = forest_fit(train, cfg, seed, threads);
  const auto table = feature_table(test);
  return f1_report(table.labels, forest_predict(model, table, threads), test.space.size());
}

struct TstrResult {
  F1Report synthetic;
  F1Report baseline;
  std::vector<int> missing_classes;

  double gap() const { return baseline.macro_f1 - synthetic.macro_f1; }

  nlohmann::ordered_json to_json(const LabelSpace& space, const ForestConfig& cfg) const {
    nlohmann::ordered_json j;
    j["protocol"] = "tstr";
    j["forest"] = cfg.to_json();
    j["macro_f1"] = synthetic.macro_f1;
    j["baseline_f1"] = baseline.macro_f1;
    j["gap"] = gap();
    j["missing_classes"] = missing_classes;
    j["synthetic"] = synthetic.to_json(&space);
    j["baseline"] = baseline.to_json(&space);
    return j;
  }
};

/// Forest on synthetic only, scored on real test, next to the same forest
/// trained on real train. Classes absent from `synth` are reported and
/// simply depress the macro score.
inline TstrResult tstr(const Corpus& synth, const RealSplit& split, const ForestConfig& cfg, std::uint64_t seed,
                       unsigned threads = 1) {
  require_same_label_space(synth.space, split.test.space);
  TstrResult r;
  const auto counts = synth.class_counts();
  for (int c : present_classes(split.test))
    if (counts[static_cast<std::size_t>(c)] == 0) r.missing_classes.push_back(c);
  r.synthetic = train_and_score(synth, split.test, cfg, seed, threads);
  r.baseline = train_and_score(split.train, split.test, cfg, seed, threads);
  return r;
}

/// Copy of `c` with labels shuffled across samples.
inline Corpus permute_labels(const Corpus& c, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& s : c.samples) labels.push_back(s.label());
  Rng rng(derive_seed(seed, 0x9e7a));
  rng.shuffle(labels);
  Corpus out = c;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i].set_label(labels[i]);
  return out;
}

/// Per class, round(fraction * count) samples (at least one) in original
/// order; fraction 1 returns the corpus unchanged.
inline Corpus stratified_subset(const Corpus& c, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  if (fraction == 1.0) return c;
  Corpus out{c.space, {}, c.provenance};
  auto groups = c.indices_by_class();
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    auto& idx = groups[k];
    if (idx.empty()) continue;
    Rng rng(derive_seed(seed, k, 0x5ab5));
    rng.shuffle(idx);
    const auto n = std::max<std::size_t>(1, stratified_count(fraction, idx.size()));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(keep.begin(), keep.end());
  for (auto i : keep) out.samples.push_back(c.samples[i]);
  return out;
}

enum class AugmentSource { none, generator, smote, fast_retransmit };

inline const char* to_string(AugmentSource s) {
  switch (s) {
    case AugmentSource::none: return "none";
    case AugmentSource::generator: return "generator";
    case AugmentSource::smote: return "smote";
    case AugmentSource::fast_retransmit: return "fast_retransmit";
  }
  return "?";
}

inline AugmentSource augment_source_from_string(const std::string& s) {
  if (s == "none") return AugmentSource::none;
  if (s == "generator") return AugmentSource::generator;
  if (s == "smote") return AugmentSource::smote;
  if (s == "fast_retransmit" || s == "fast-retransmit") return AugmentSource::fast_retransmit;
  throw ConfigError("unknown augmentation source '" + s + "'");
}

struct AugmentOptions {
  const Generator* generator = nullptr;  // fitted on the full training split
  SamplingOptions sampling;
  AugmenterConfig augmenter;
  ForestConfig forest;
  unsigned threads = 1;
};

struct AugmentResult {
  double fraction = 1.0;
  AugmentSource source = AugmentSource::none;
  std::vector<std::size_t> real_counts;      // subset counts per class
  std::vector<std::size_t> training_counts;  // after balancing
  std::size_t target = 0;                    // majority size of the full training split
  GenerationStats generation;
  F1Report score;
};

/// Training set for one protocol cell. Augmenting sources top every class
/// up to the majority size of the full training split; `none` keeps the
/// subset as is.
inline Corpus augmented_training_set(const RealSplit& split, double fraction, AugmentSource source,
                                     const AugmentOptions& opt, std::uint64_t seed, AugmentResult* info = nullptr) {
  const Corpus subset = stratified_subset(split.train, fraction, derive_seed(seed, 0xa5b5));
  const auto full_counts = split.train.class_counts();
  const std::size_t target = *std::max_element(full_counts.begin(), full_counts.end());
  Corpus mix = subset;
  const auto have = subset.class_counts();
  GenerationStats gstats;
  if (source != AugmentSource::none) {
    if (source == AugmentSource::generator && !opt.generator)
      throw ConfigError("generator augmentation needs a fitted generator");
    AugmenterConfig acfg = opt.augmenter;
    acfg.kind = source == AugmentSource::smote ? AugmenterKind::smote : AugmenterKind::fast_retransmit;
    for (int c : present_classes(split.train)) {
      const auto uc = static_cast<std::size_t>(c);
      if (have[uc] >= target) continue;
      const std::size_t need = target - have[uc];
      const std::uint64_t cseed = derive_seed(seed, 0xa06, uc);
      std::vector<TrafficMatrix> extra;
      if (source == AugmentSource::generator) {
        extra = generate_corpus(*opt.generator, split.train.space, {c}, need, cseed, opt.sampling, opt.threads,
                                &gstats)
                    .samples;
      } else {
        extra = augment_class(acfg, subset.samples_of(c), need, cseed, split.train.space.pl_max(), opt.threads);
      }
      for (auto& m : extra) mix.samples.push_back(std::move(m));
    }
  }
  if (info) {
    info->fraction = fraction;
    info->source = source;
    info->real_counts = have;
    info->training_counts = mix.class_counts();
    info->target = target;
    info->generation = gstats;
  }
  return mix;
}

inline AugmentResult augment_protocol(const RealSplit& split, double fraction, AugmentSource source,
                                      const AugmentOptions& opt, std::uint64_t seed) {
  AugmentResult r;
  const Corpus mix = augmented_training_set(split, fraction, source, opt, seed, &r);
  r.score = train_and_score(mix, split.test, opt.forest, seed, opt.threads);
  return r;
}

struct AugmentSweep {
  F1Report baseline;  // full real training split
  std::vector<AugmentResult> rows;

  nlohmann::ordered_json to_json(const LabelSpace& space, const ForestConfig& cfg) const {
    nlohmann::ordered_json j;
    j["protocol"] = "augment";
    j["forest"] = cfg.to_json();
    j["baseline_f1"] = baseline.macro_f1;
    j["baseline"] = baseline.to_json(&space);
    auto& arr = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json row;
      row["fraction"] = r.fraction;
      row["source"] = to_string(r.source);
      row["macro_f1"] = r.score.macro_f1;
      row["gap"] = baseline.macro_f1 - r.score.macro_f1;
      row["balance_target"] = r.target;
      row["real_counts"] = r.real_counts;
      row["training_counts"] = r.training_counts;
      row["generation"] = {{"repaired", r.generation.repaired}, {"rejected", r.generation.rejected}};
      row["scores"] = r.score.to_json(&space);
      arr.push_back(row);
    }
    return j;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "fraction,source,macro_f1,baseline_f1,gap\n";
    for (const auto& r : rows)
      out << r.fraction << ',' << to_string(r.source) << ',' << r.score.macro_f1 << ',' << baseline.macro_f1 << ','
          << baseline.macro_f1 - r.score.macro_f1 << '\n';
    out << "1," << "baseline," << baseline.macro_f1 << ',' << baseline.macro_f1 << ",0\n";
    return out.str();
  }
};

inline AugmentSweep augment_sweep(const RealSplit& split, const std::vector<double>& fractions,
                                  const std::vector<AugmentSource>& sources, const AugmentOptions& opt,
                                  std::uint64_t seed) {
  AugmentSweep s;
  s.baseline = train_and_score(split.train, split.test, opt.forest, seed, opt.threads);
  for (double f : fractions)
    for (auto src : sources) s.rows.push_back(augment_protocol(split, f, src, opt, seed));
  return s;
}

}  // namespace tfx
