#pragma once
// Shared value types of the traffic workbench: label spaces, packet events,
// biflows, traffic matrices and corpora.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfx/rng.hpp"

namespace tfx {

inline constexpr int kDefaultLength = 10;
inline constexpr int kDefaultPlMax = 1460;

/// Base of every workbench error. The subclasses map onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

/// A generated or imported sample that cannot be turned into a TrafficMatrix.
class RejectedSample : public DataError {
 public:
  using DataError::DataError;
};

enum class Direction : std::uint8_t { upstream, downstream };

enum class Provenance : std::uint8_t { real, synthetic, augmented };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::real: return "real";
    case Provenance::synthetic: return "synthetic";
    case Provenance::augmented: return "augmented";
  }
  return "real";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "real") return Provenance::real;
  if (s == "synthetic") return Provenance::synthetic;
  if (s == "augmented") return Provenance::augmented;
  throw DataError("unknown provenance '" + s + "'");
}

struct ClassLabel {
  int id = 0;
  std::string name;
};

/// Dense label ids plus the sequence geometry every corpus over it shares.
class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::vector<std::string> names, int length = kDefaultLength,
             int pl_max = kDefaultPlMax)
      : names_(std::move(names)), length_(length), pl_max_(pl_max) {
    if (length_ < 1) throw ConfigError("sequence length L must be >= 1");
    if (pl_max_ < 1) throw ConfigError("pl_max must be >= 1");
    std::vector<std::string> sorted = names_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("label names must be unique");
  }

  int size() const { return static_cast<int>(names_.size()); }
  int length() const { return length_; }
  int pl_max() const { return pl_max_; }
  const std::vector<std::string>& names() const { return names_; }
  bool contains(int id) const { return id >= 0 && id < size(); }

  ClassLabel label(int id) const {
    if (!contains(id)) throw DataError("label id " + std::to_string(id) + " outside label space");
    return {id, names_[static_cast<std::size_t>(id)]};
  }

  int id_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw DataError("unknown label '" + name + "'");
    return static_cast<int>(it - names_.begin());
  }

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> names_;
  int length_ = kDefaultLength;
  int pl_max_ = kDefaultPlMax;
};

struct PacketEvent {
  int payload_length = 0;
  Direction direction = Direction::upstream;
  std::uint64_t timestamp_us = 0;

  friend bool operator==(const PacketEvent&, const PacketEvent&) = default;
};

using Ipv4 = std::uint32_t;

/// Direction-independent 5-tuple: the smaller (ip, port) endpoint comes first.
struct CanonicalKey {
  Ipv4 ip_lo = 0;
  Ipv4 ip_hi = 0;
  std::uint16_t port_lo = 0;
  std::uint16_t port_hi = 0;
  std::uint8_t protocol = 0;

  friend auto operator<=>(const CanonicalKey&, const CanonicalKey&) = default;
};

inline CanonicalKey canonical_key(Ipv4 src_ip, Ipv4 dst_ip, std::uint16_t src_port,
                                  std::uint16_t dst_port, std::uint8_t protocol) {
  if (std::pair{src_ip, src_port} <= std::pair{dst_ip, dst_port})
    return {src_ip, dst_ip, src_port, dst_port, protocol};
  return {dst_ip, src_ip, dst_port, src_port, protocol};
}

struct BiflowRecord {
  CanonicalKey key;
  int label = 0;
  std::vector<PacketEvent> packets;
};

/// Fixed-length signed payload-length sequence. Upstream values are positive,
/// downstream negative, and positions at or past effective_length hold 0.
class TrafficMatrix {
 public:
  TrafficMatrix() = default;

  /// Validating constructor over a full-length value array.
  static TrafficMatrix from_values(std::vector<int> values, int label, int pl_max) {
    TrafficMatrix tm;
    tm.values_ = std::move(values);
    tm.label_ = label;
    if (tm.values_.empty()) throw DataError("traffic matrix with zero length");
    auto first_zero = std::find(tm.values_.begin(), tm.values_.end(), 0);
    tm.effective_length_ = static_cast<int>(first_zero - tm.values_.begin());
    if (tm.effective_length_ == 0) throw DataError("traffic matrix without data positions");
    for (std::size_t i = 0; i < tm.values_.size(); ++i) {
      const int v = tm.values_[i];
      if (static_cast<int>(i) >= tm.effective_length_) {
        if (v != 0) throw DataError("data value after padding sentinel");
      } else if (v < -pl_max || v > pl_max) {
        throw DataError("value " + std::to_string(v) + " outside +-pl_max");
      }
    }
    return tm;
  }

  /// Pads `data` with sentinels up to `length`.
  static TrafficMatrix from_data(std::span<const int> data, int length, int label, int pl_max) {
    if (static_cast<int>(data.size()) > length)
      throw DataError("data longer than matrix length");
    std::vector<int> values(static_cast<std::size_t>(length), 0);
    std::copy(data.begin(), data.end(), values.begin());
    return from_values(std::move(values), label, pl_max);
  }

  const std::vector<int>& values() const { return values_; }
  std::span<const int> data() const {
    return std::span<const int>(values_).first(static_cast<std::size_t>(effective_length_));
  }
  int effective_length() const { return effective_length_; }
  int length() const { return static_cast<int>(values_.size()); }
  int label() const { return label_; }
  void set_label(int label) { label_ = label; }

  friend bool operator==(const TrafficMatrix& a, const TrafficMatrix& b) {
    return a.label_ == b.label_ && a.values_ == b.values_;
  }
  friend std::strong_ordering operator<=>(const TrafficMatrix& a, const TrafficMatrix& b) {
    if (auto c = a.label_ <=> b.label_; c != 0) return c;
    return a.values_ <=> b.values_;
  }

 private:
  std::vector<int> values_;
  int effective_length_ = 0;
  int label_ = 0;
};

struct Corpus {
  LabelSpace space;
  std::vector<TrafficMatrix> samples;
  Provenance provenance = Provenance::real;

  /// Sample indices grouped by label id, in corpus order.
  std::vector<std::vector<std::size_t>> indices_by_class() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(space.size()));
    for (std::size_t i = 0; i < samples.size(); ++i)
      out.at(static_cast<std::size_t>(samples[i].label())).push_back(i);
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(space.size()), 0);
    for (const auto& s : samples) ++out.at(static_cast<std::size_t>(s.label()));
    return out;
  }

  std::vector<TrafficMatrix> samples_of(int label) const {
    std::vector<TrafficMatrix> out;
    for (const auto& s : samples)
      if (s.label() == label) out.push_back(s);
    return out;
  }

  /// Throws unless every sample obeys the matrix invariants of this label space.
  void validate() const {
    for (const auto& s : samples) {
      if (!space.contains(s.label())) throw DataError("sample label outside label space");
      if (s.length() != space.length()) throw DataError("sample length differs from L");
      (void)TrafficMatrix::from_values(s.values(), s.label(), space.pl_max());
    }
  }
};

/// Half-up rounding used for stratified counts.
inline std::size_t stratified_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(fraction * static_cast<double>(n) + 0.5 + 1e-9);
}

/// Stratified, seeded split. Per class, round(fraction * count) samples go to
/// the first corpus and the remainder to the second.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                              std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must lie in (0, 1)");
  Corpus train{corpus.space, {}, corpus.provenance};
  Corpus test{corpus.space, {}, corpus.provenance};
  auto groups = corpus.indices_by_class();
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& idx = groups[c];
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw DataError("class '" + corpus.space.names()[c] + "' has fewer than 2 samples");
    Rng rng(derive_seed(seed, c, 0x5917));
    rng.shuffle(idx);
    const std::size_t n_train = stratified_count(train_fraction, idx.size());
    std::vector<std::size_t> head(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> tail(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(head.begin(), head.end());
    std::sort(tail.begin(), tail.end());
    for (auto i : head) train.samples.push_back(corpus.samples[i]);
    for (auto i : tail) test.samples.push_back(corpus.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace tfx
