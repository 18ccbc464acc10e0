#pragma once
// Fidelity metrics between a real and a synthetic corpus: macro-averaged JSD
// over four traffic properties, UniqAlign and Leakage.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"
#include "tfx/parallel.hpp"

namespace tfx {

/// Keys are integer tuples; scalar histograms use 1-tuples.
class CategoricalDistribution {
 public:
  using Key = std::vector<int>;

  CategoricalDistribution() = default;

  static CategoricalDistribution from_counts(const std::map<Key, double>& counts) {
    double total = 0.0;
    for (const auto& [k, c] : counts) {
      if (c < 0.0) throw DataError("negative histogram count");
      total += c;
    }
    if (total <= 0.0) throw DataError("empty histogram");
    CategoricalDistribution d;
    for (const auto& [k, c] : counts)
      if (c > 0.0) d.probs_[k] = c / total;
    return d;
  }

  const std::map<Key, double>& probabilities() const { return probs_; }
  std::size_t support_size() const { return probs_.size(); }
  bool empty() const { return probs_.empty(); }

  double operator()(const Key& k) const {
    const auto it = probs_.find(k);
    return it == probs_.end() ? 0.0 : it->second;
  }

  double total() const {
    double s = 0.0;
    for (const auto& [k, p] : probs_) s += p;
    return s;
  }

 private:
  std::map<Key, double> probs_;
};

namespace detail {

inline double xlog2_ratio(double p, double m) { return p > 0.0 ? p * std::log2(p / m) : 0.0; }

/// JSD of two aligned probability vectors.
inline double jsd_dense(const std::vector<double>& p, const std::vector<double>& q) {
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (m <= 0.0) continue;
    kl_p += xlog2_ratio(p[i], m);
    kl_q += xlog2_ratio(q[i], m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

}  // namespace detail

/// Jensen-Shannon divergence with base-2 logarithms over the union support.
inline double jsd(const CategoricalDistribution& p, const CategoricalDistribution& q) {
  std::vector<double> pv, qv;
  auto ip = p.probabilities().begin();
  auto iq = q.probabilities().begin();
  const auto ep = p.probabilities().end();
  const auto eq = q.probabilities().end();
  while (ip != ep || iq != eq) {
    if (iq == eq || (ip != ep && ip->first < iq->first)) {
      pv.push_back(ip->second);
      qv.push_back(0.0);
      ++ip;
    } else if (ip == ep || iq->first < ip->first) {
      pv.push_back(0.0);
      qv.push_back(iq->second);
      ++iq;
    } else {
      pv.push_back(ip->second);
      qv.push_back(iq->second);
      ++ip;
      ++iq;
    }
  }
  return detail::jsd_dense(pv, qv);
}

namespace detail {

inline bool has_class(const Corpus& c, int label) {
  return std::any_of(c.samples.begin(), c.samples.end(), [&](const TrafficMatrix& s) { return s.label() == label; });
}

inline std::map<CategoricalDistribution::Key, double> ngram_counts(const Corpus& corpus, int label, int n) {
  std::map<CategoricalDistribution::Key, double> counts;
  for (const auto& s : corpus.samples) {
    if (s.label() != label) continue;
    const auto d = s.data();
    for (int i = 0; i + n <= static_cast<int>(d.size()); ++i)
      counts[CategoricalDistribution::Key(d.begin() + i, d.begin() + i + n)] += 1.0;
  }
  return counts;
}

}  // namespace detail

inline CategoricalDistribution num_packets_histogram(const Corpus& corpus, int label) {
  std::map<CategoricalDistribution::Key, double> counts;
  for (const auto& s : corpus.samples)
    if (s.label() == label) counts[{s.effective_length()}] += 1.0;
  if (counts.empty()) throw DataError("class " + std::to_string(label) + " has no samples");
  return CategoricalDistribution::from_counts(counts);
}

/// Sliding-window n-grams over data positions, n in {1, 2}.
inline CategoricalDistribution ngram_histogram(const Corpus& corpus, int label, int n) {
  if (n != 1 && n != 2) throw ConfigError("n-gram order must be 1 or 2");
  if (!detail::has_class(corpus, label)) throw DataError("class " + std::to_string(label) + " has no samples");
  const auto counts = detail::ngram_counts(corpus, label, n);
  if (counts.empty())
    throw DataError("class " + std::to_string(label) + " has no sequence of length >= " + std::to_string(n));
  return CategoricalDistribution::from_counts(counts);
}

/// Row-stochastic first-order transition matrix over a fixed ordered state
/// set; rows without outgoing transitions are uniform.
struct MarkovMatrix {
  std::vector<int> states;
  std::vector<std::vector<double>> rows;

  double at(int from, int to) const {
    const auto i = index_of(from), j = index_of(to);
    if (!i || !j) throw DataError("state outside the matrix");
    return rows[*i][*j];
  }

  std::optional<std::size_t> index_of(int v) const {
    const auto it = std::lower_bound(states.begin(), states.end(), v);
    if (it == states.end() || *it != v) return std::nullopt;
    return static_cast<std::size_t>(it - states.begin());
  }
};

inline std::vector<int> observed_states(const Corpus& corpus, int label) {
  std::set<int> s;
  for (const auto& m : corpus.samples)
    if (m.label() == label)
      for (int v : m.data()) s.insert(v);
  return {s.begin(), s.end()};
}

inline MarkovMatrix markov_matrix(const Corpus& corpus, int label, std::vector<int> states) {
  std::sort(states.begin(), states.end());
  states.erase(std::unique(states.begin(), states.end()), states.end());
  MarkovMatrix m;
  m.states = std::move(states);
  const auto n = m.states.size();
  m.rows.assign(n, std::vector<double>(n, 0.0));
  for (const auto& s : corpus.samples) {
    if (s.label() != label) continue;
    const auto d = s.data();
    for (std::size_t t = 1; t < d.size(); ++t) {
      const auto i = m.index_of(d[t - 1]), j = m.index_of(d[t]);
      if (!i || !j) throw DataError("transition outside the state set");
      m.rows[*i][*j] += 1.0;
    }
  }
  for (auto& row : m.rows) {
    double total = 0.0;
    for (double c : row) total += c;
    if (total > 0.0)
      for (double& c : row) c /= total;
    else
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(n));
  }
  return m;
}

inline MarkovMatrix markov_matrix(const Corpus& corpus, int label) {
  return markov_matrix(corpus, label, observed_states(corpus, label));
}

/// Mean row-wise JSD, each state weighted equally.
inline double jsd_markov(const MarkovMatrix& a, const MarkovMatrix& b) {
  if (a.states != b.states) throw DataError("Markov matrices must share the state set");
  if (a.states.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) sum += detail::jsd_dense(a.rows[i], b.rows[i]);
  return sum / static_cast<double>(a.rows.size());
}

enum class FidelityProperty { num_packets, unigram, bigram, markov };

inline const char* to_string(FidelityProperty p) {
  switch (p) {
    case FidelityProperty::num_packets: return "jsd_num_packets";
    case FidelityProperty::unigram: return "jsd_1gram";
    case FidelityProperty::bigram: return "jsd_2gram";
    case FidelityProperty::markov: return "jsd_markov";
  }
  return "?";
}

inline constexpr FidelityProperty kFidelityProperties[] = {FidelityProperty::num_packets, FidelityProperty::unigram,
                                                           FidelityProperty::bigram, FidelityProperty::markov};

/// Per-class JSD for one property. A class absent from `synth` scores 1.
/// For n-grams, a class without any n-gram on both sides scores 0 and on one
/// side scores 1.
inline double class_jsd(const Corpus& real, const Corpus& synth, int label, FidelityProperty prop) {
  if (!detail::has_class(real, label)) throw DataError("class " + std::to_string(label) + " absent from real corpus");
  if (!detail::has_class(synth, label)) return 1.0;
  switch (prop) {
    case FidelityProperty::num_packets:
      return jsd(num_packets_histogram(real, label), num_packets_histogram(synth, label));
    case FidelityProperty::unigram:
    case FidelityProperty::bigram: {
      const int n = prop == FidelityProperty::unigram ? 1 : 2;
      const auto rc = detail::ngram_counts(real, label, n);
      const auto sc = detail::ngram_counts(synth, label, n);
      if (rc.empty() && sc.empty()) return 0.0;
      if (rc.empty() || sc.empty()) return 1.0;
      return jsd(CategoricalDistribution::from_counts(rc), CategoricalDistribution::from_counts(sc));
    }
    case FidelityProperty::markov: {
      auto states = observed_states(real, label);
      const auto more = observed_states(synth, label);
      states.insert(states.end(), more.begin(), more.end());
      return jsd_markov(markov_matrix(real, label, states), markov_matrix(synth, label, states));
    }
  }
  return 1.0;
}

/// Labels present in the real corpus, ascending.
inline std::vector<int> present_classes(const Corpus& corpus) {
  std::vector<int> out;
  const auto counts = corpus.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0) out.push_back(static_cast<int>(c));
  return out;
}

inline void require_same_label_space(const LabelSpace& a, const LabelSpace& b) {
  if (a == b) return;
  std::ostringstream msg;
  msg << "label space mismatch:";
  if (a.length() != b.length()) msg << " L " << a.length() << " vs " << b.length() << ";";
  if (a.pl_max() != b.pl_max()) msg << " pl_max " << a.pl_max() << " vs " << b.pl_max() << ";";
  const auto n = std::max(a.size(), b.size());
  for (int i = 0; i < n; ++i) {
    const std::string x = i < a.size() ? a.names()[static_cast<std::size_t>(i)] : "<none>";
    const std::string y = i < b.size() ? b.names()[static_cast<std::size_t>(i)] : "<none>";
    if (x != y) msg << " label " << i << " '" << x << "' vs '" << y << "';";
  }
  throw DataError(msg.str());
}

/// Unweighted mean over the classes present in `real`.
inline double macro_jsd(const Corpus& real, const Corpus& synth, FidelityProperty prop) {
  require_same_label_space(real.space, synth.space);
  const auto classes = present_classes(real);
  if (classes.empty()) throw DataError("real corpus is empty");
  double sum = 0.0;
  for (int c : classes) sum += class_jsd(real, synth, c, prop);
  return sum / static_cast<double>(classes.size());
}

namespace detail {

inline std::set<TrafficMatrix> distinct(const Corpus& c) { return {c.samples.begin(), c.samples.end()}; }

}  // namespace detail

inline double uniqueness(const Corpus& c) {
  if (c.samples.empty()) throw DataError("uniqueness of an empty corpus");
  return static_cast<double>(detail::distinct(c).size()) / static_cast<double>(c.samples.size());
}

inline double uniq_align(const Corpus& real, const Corpus& synth) {
  return std::abs(uniqueness(real) - uniqueness(synth));
}

/// Jaccard similarity of the distinct (label, values) sets.
inline double leakage(const Corpus& real, const Corpus& synth) {
  if (real.samples.empty() || synth.samples.empty()) throw DataError("leakage needs non-empty corpora");
  const auto r = detail::distinct(real);
  const auto s = detail::distinct(synth);
  std::size_t inter = 0;
  for (const auto& x : r) inter += s.count(x);
  const std::size_t uni = r.size() + s.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct ClassFidelity {
  int label = 0;
  std::string name;
  std::size_t real_count = 0;
  std::size_t synth_count = 0;
  double jsd[4] = {0, 0, 0, 0};
};

struct FidelityReport {
  std::vector<ClassFidelity> classes;
  double macro[4] = {0, 0, 0, 0};
  double uniq_align = 0.0;
  double leakage = 0.0;
  std::size_t repaired = 0;
  std::size_t rejected = 0;

  double jsd_num_packets() const { return macro[0]; }
  double jsd_1gram() const { return macro[1]; }
  double jsd_2gram() const { return macro[2]; }
  double jsd_markov() const { return macro[3]; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json m;
    for (std::size_t p = 0; p < 4; ++p) m[to_string(kFidelityProperties[p])] = macro[p];
    m["uniq_align"] = uniq_align;
    m["leakage"] = leakage;
    j["macro"] = m;
    j["jsd_log_base"] = 2;
    j["markov_aggregation"] = "row-wise mean";
    auto& per = j["per_class"] = nlohmann::ordered_json::array();
    for (const auto& c : classes) {
      nlohmann::ordered_json row;
      row["label"] = c.label;
      row["name"] = c.name;
      row["real_count"] = c.real_count;
      row["synth_count"] = c.synth_count;
      for (std::size_t p = 0; p < 4; ++p) row[to_string(kFidelityProperties[p])] = c.jsd[p];
      per.push_back(row);
    }
    j["generation"] = {{"repaired", repaired}, {"rejected", rejected}};
    return j;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "class,name,real_count,synth_count,jsd_num_packets,jsd_1gram,jsd_2gram,jsd_markov,uniq_align,leakage\n";
    for (const auto& c : classes) {
      out << c.label << ',' << c.name << ',' << c.real_count << ',' << c.synth_count;
      for (double v : c.jsd) out << ',' << v;
      out << ",,\n";
    }
    out << "macro,,,";
    for (double v : macro) out << ',' << v;
    out << ',' << uniq_align << ',' << leakage << '\n';
    return out.str();
  }
};

inline FidelityReport evaluate_fidelity(const Corpus& real, const Corpus& synth, unsigned threads = 1) {
  require_same_label_space(real.space, synth.space);
  const auto classes = present_classes(real);
  if (classes.empty()) throw DataError("real corpus is empty");
  if (synth.samples.empty()) throw DataError("synthetic corpus is empty");
  FidelityReport rep;
  rep.classes.resize(classes.size());
  const auto rc = real.class_counts();
  const auto sc = synth.class_counts();
  parallel_for(classes.size(), threads, [&](std::size_t i) {
    auto& cf = rep.classes[i];
    cf.label = classes[i];
    cf.name = real.space.names()[static_cast<std::size_t>(cf.label)];
    cf.real_count = rc[static_cast<std::size_t>(cf.label)];
    cf.synth_count = sc[static_cast<std::size_t>(cf.label)];
    for (std::size_t p = 0; p < 4; ++p) cf.jsd[p] = class_jsd(real, synth, cf.label, kFidelityProperties[p]);
  });
  for (std::size_t p = 0; p < 4; ++p) {
    double sum = 0.0;
    for (const auto& cf : rep.classes) sum += cf.jsd[p];
    rep.macro[p] = sum / static_cast<double>(rep.classes.size());
  }
  rep.uniq_align = uniq_align(real, synth);
  rep.leakage = leakage(real, synth);
  return rep;
}

}  // namespace tfx
