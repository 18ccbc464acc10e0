#pragma once
// Non-generative augmentation baselines: SMOTE-style interpolation between
// same-length neighbours, and a Fast Retransmit transformation that inserts
// a retransmitted copy of one packet.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tfx/core.hpp"
#include "tfx/parallel.hpp"
#include "tfx/rng.hpp"

namespace tfx {

enum class AugmenterKind { smote, fast_retransmit };

inline const char* to_string(AugmenterKind k) { return k == AugmenterKind::smote ? "smote" : "fast_retransmit"; }

struct AugmenterConfig {
  AugmenterKind kind = AugmenterKind::smote;
  int smote_k = 5;
  double fr_p = 1.0;

  void validate() const {
    if (smote_k < 1) throw ConfigError("smote_k must be >= 1");
    if (!(fr_p >= 0.0 && fr_p <= 1.0)) throw ConfigError("fr_p must lie in [0, 1]");
  }
};

/// Positionwise interpolation base + lambda * (neighbor - base), rounded half
/// away from zero, clamped to +-pl_max, with |v| floored at 1 (keeping the
/// base sign) at data positions.
inline TrafficMatrix smote_interpolate(const TrafficMatrix& base, const TrafficMatrix& neighbor, double lambda,
                                       int pl_max) {
  std::vector<int> values(base.values().size(), 0);
  for (int i = 0; i < base.effective_length(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double a = base.values()[ui];
    const double b = neighbor.values()[ui];
    int v = static_cast<int>(std::round(a + lambda * (b - a)));
    v = std::clamp(v, -pl_max, pl_max);
    if (v == 0) v = a < 0 ? -1 : 1;
    values[ui] = v;
  }
  return TrafficMatrix::from_values(std::move(values), base.label(), pl_max);
}

/// Indices of the k nearest same-length samples to `base` (excluding it),
/// by Euclidean distance with ties broken by index.
inline std::vector<std::size_t> smote_neighbors(const std::vector<TrafficMatrix>& samples, std::size_t base, int k) {
  std::vector<std::pair<double, std::size_t>> cand;
  const auto& b = samples[base];
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (j == base || samples[j].effective_length() != b.effective_length()) continue;
    double d2 = 0.0;
    for (std::size_t i = 0; i < b.values().size(); ++i) {
      const double diff = b.values()[i] - samples[j].values()[i];
      d2 += diff * diff;
    }
    cand.emplace_back(d2, j);
  }
  const auto take = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(k));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(cand[i].second);
  return out;
}

/// `count` new samples of one class. Sample i draws from stream (seed, i):
/// a uniform base, a uniform neighbour among its k nearest and lambda ~ U(0,1);
/// a base without same-length neighbours is replicated.
inline std::vector<TrafficMatrix> smote_generate(const std::vector<TrafficMatrix>& class_samples, int k,
                                                 std::size_t count, std::uint64_t seed, int pl_max,
                                                 unsigned threads = 1) {
  if (class_samples.empty()) throw DataError("SMOTE needs at least one sample of the class");
  if (k < 1) throw ConfigError("smote_k must be >= 1");
  std::vector<std::vector<std::size_t>> neighbors(class_samples.size());
  parallel_for(class_samples.size(), threads,
               [&](std::size_t i) { neighbors[i] = smote_neighbors(class_samples, i, k); });
  std::vector<TrafficMatrix> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, 0x5307e, i));
    const auto base = static_cast<std::size_t>(rng.below(class_samples.size()));
    const auto& nb = neighbors[base];
    if (nb.empty()) {
      out[i] = class_samples[base];
      return;
    }
    const auto pick = nb[static_cast<std::size_t>(rng.below(nb.size()))];
    const double lambda = rng.uniform();
    out[i] = smote_interpolate(class_samples[base], class_samples[pick], lambda, pl_max);
  });
  return out;
}

/// Inserts a duplicate of values[position] right after it, truncating to L.
inline TrafficMatrix retransmit_at(const TrafficMatrix& tm, int position, int pl_max) {
  if (position < 0 || position >= tm.effective_length()) throw DataError("retransmit position outside data");
  std::vector<int> values = tm.values();
  values.insert(values.begin() + position + 1, values[static_cast<std::size_t>(position)]);
  values.resize(tm.values().size());
  return TrafficMatrix::from_values(std::move(values), tm.label(), pl_max);
}

/// With probability p, retransmits a uniformly chosen data position;
/// otherwise returns tm unchanged.
inline TrafficMatrix fast_retransmit(const TrafficMatrix& tm, double p, Rng& rng, int pl_max) {
  if (!(rng.uniform() < p)) return tm;
  const auto pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(tm.effective_length())));
  return retransmit_at(tm, pos, pl_max);
}

inline TrafficMatrix fast_retransmit(const TrafficMatrix& tm, double p, std::uint64_t seed, int pl_max) {
  Rng rng(seed);
  return fast_retransmit(tm, p, rng, pl_max);
}

/// `count` transformed samples of one class, each from a uniformly chosen
/// source sample and the stream (seed, i).
inline std::vector<TrafficMatrix> fast_retransmit_generate(const std::vector<TrafficMatrix>& class_samples, double p,
                                                           std::size_t count, std::uint64_t seed, int pl_max,
                                                           unsigned threads = 1) {
  if (class_samples.empty()) throw DataError("Fast Retransmit needs at least one sample of the class");
  std::vector<TrafficMatrix> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, 0xf457, i));
    const auto& src = class_samples[static_cast<std::size_t>(rng.below(class_samples.size()))];
    out[i] = fast_retransmit(src, p, rng, pl_max);
  });
  return out;
}

inline std::vector<TrafficMatrix> augment_class(const AugmenterConfig& cfg, const std::vector<TrafficMatrix>& samples,
                                                std::size_t count, std::uint64_t seed, int pl_max,
                                                unsigned threads = 1) {
  cfg.validate();
  if (cfg.kind == AugmenterKind::smote) return smote_generate(samples, cfg.smote_k, count, seed, pl_max, threads);
  return fast_retransmit_generate(samples, cfg.fr_p, count, seed, pl_max, threads);
}

}  // namespace tfx
