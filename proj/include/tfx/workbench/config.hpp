#pragma once
// Experiment configuration: plain-text `key = value` lines grouped under
// `[section]` headers. Comments start with '#' or ';'.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tfx/augmenters.hpp"
#include "tfx/core.hpp"
#include "tfx/downstream/forest.hpp"
#include "tfx/downstream/protocols.hpp"
#include "tfx/generators/generator.hpp"
#include "tfx/ingestion.hpp"

namespace tfx {

/// Flat map of "section.key" to raw value.
class IniDocument {
 public:
  static IniDocument parse(std::istream& in, const std::string& origin = "config") {
    IniDocument doc;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = detail::trim(strip_comment(line));
      if (t.empty()) continue;
      const auto where = origin + ":" + std::to_string(lineno);
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = std::string(detail::trim(t.substr(1, t.size() - 2)));
        if (section.empty() || section.find('.') != std::string::npos)
          throw ConfigError(where + ": invalid section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
      const auto key = std::string(detail::trim(t.substr(0, eq)));
      if (key.empty()) throw ConfigError(where + ": empty key");
      const auto full = section.empty() ? key : section + "." + key;
      if (doc.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      doc.values_[full] = std::string(detail::trim(t.substr(eq + 1)));
    }
    return doc;
  }

  static IniDocument load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in, path);
  }

  const std::map<std::string, std::string>& values() const { return values_; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

 private:
  static std::string_view strip_comment(std::string_view s) {
    const auto pos = s.find_first_of("#;");
    return pos == std::string_view::npos ? s : s.substr(0, pos);
  }

  std::map<std::string, std::string> values_;
};

namespace detail {

inline std::int64_t config_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

inline double config_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<std::string> config_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    const auto t = std::string(trim(item));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::string format_double(double d) {
  std::ostringstream out;
  out.precision(17);
  out << d;
  return out.str();
}

}  // namespace detail

enum class DownstreamProtocol { tstr, augment, both };

struct ExperimentConfig {
  // [data]
  std::string trace;
  std::string trace_kind;  // csv | pcap; empty = from extension
  std::string label_rule;
  std::string corpus;
  int length = kDefaultLength;
  int pl_max = kDefaultPlMax;
  // [generator]
  GeneratorConfig generator;
  std::size_t count_per_class = 100;
  // [augmenter]
  AugmenterConfig augmenter;
  // [fidelity]
  bool fidelity = true;
  // [downstream]
  DownstreamProtocol protocol = DownstreamProtocol::both;
  std::vector<double> fractions{0.05, 0.1, 0.2};
  std::vector<AugmentSource> sources{AugmentSource::none, AugmentSource::generator, AugmentSource::smote,
                                     AugmentSource::fast_retransmit};
  ForestConfig forest;
  // [run]
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out = "tfx-out";

  void validate() const {
    if (length < 1 || length > 4096) throw ConfigError("L must lie in [1, 4096]");
    if (pl_max < 1 || pl_max > 65535) throw ConfigError("pl_max must lie in [1, 65535]");
    if (generator.markov.order < 1) throw ConfigError("markov order must be >= 1");
    if (!(generator.markov.alpha > 0.0)) throw ConfigError("markov alpha must be > 0");
    if (!(generator.sampling.temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (generator.sampling.top_k < 0) throw ConfigError("top_k must be >= 0");
    if (count_per_class < 1) throw ConfigError("count_per_class must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    augmenter.validate();
    forest.validate();
    for (double f : fractions)
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
  }

  /// Canonical text of every setting that can influence output bytes.
  /// Thread count and output location are deliberately left out.
  std::string canonical_text() const {
    std::ostringstream o;
    const auto& lm = generator.lm;
    o << "[data]\ntrace = " << trace << "\ntrace_kind = " << trace_kind << "\nlabel_rule = " << label_rule
      << "\ncorpus = " << corpus << "\nL = " << length << "\npl_max = " << pl_max << "\n";
    o << "[generator]\nkind = " << to_string(generator.kind) << "\nmarkov_order = " << generator.markov.order
      << "\nmarkov_alpha = " << detail::format_double(generator.markov.alpha) << "\nlm_embed_dim = " << lm.embed_dim
      << "\nlm_window = " << lm.window << "\nlm_hidden = " << lm.hidden
      << "\nlm_learning_rate = " << detail::format_double(lm.learning_rate) << "\nlm_epochs = " << lm.epochs
      << "\nlm_batch_size = " << lm.batch_size << "\nlm_max_parameters = " << lm.max_parameters
      << "\ntemperature = " << detail::format_double(generator.sampling.temperature)
      << "\ntop_k = " << generator.sampling.top_k << "\ncount_per_class = " << count_per_class << "\n";
    o << "[augmenter]\nsmote_k = " << augmenter.smote_k << "\nfr_p = " << detail::format_double(augmenter.fr_p)
      << "\n";
    o << "[fidelity]\nenabled = " << (fidelity ? "true" : "false") << "\n";
    o << "[downstream]\nprotocol = "
      << (protocol == DownstreamProtocol::tstr ? "tstr" : protocol == DownstreamProtocol::augment ? "augment" : "both")
      << "\nfractions = ";
    for (std::size_t i = 0; i < fractions.size(); ++i) o << (i ? "," : "") << detail::format_double(fractions[i]);
    o << "\nsources = ";
    for (std::size_t i = 0; i < sources.size(); ++i) o << (i ? "," : "") << to_string(sources[i]);
    o << "\ntrees = " << forest.trees << "\nmax_depth = " << forest.max_depth
      << "\nmin_samples_leaf = " << forest.min_samples_leaf << "\nfeatures_per_split = " << forest.features_per_split
      << "\nbootstrap = " << (forest.bootstrap ? "true" : "false") << "\n";
    o << "[run]\nseed = " << seed << "\n";
    return o.str();
  }
};

/// Applies every recognized key; unknown keys are an error so typos do not
/// pass silently.
inline void apply_config(ExperimentConfig& cfg, const IniDocument& doc) {
  using namespace detail;
  for (const auto& [key, v] : doc.values()) {
    auto& lm = cfg.generator.lm;
    if (key == "data.trace") cfg.trace = v;
    else if (key == "data.trace_kind") {
      if (v != "csv" && v != "pcap" && !v.empty()) throw ConfigError("data.trace_kind must be csv or pcap");
      cfg.trace_kind = v;
    } else if (key == "data.label_rule") cfg.label_rule = v;
    else if (key == "data.corpus") cfg.corpus = v;
    else if (key == "data.L") cfg.length = static_cast<int>(config_int(key, v));
    else if (key == "data.pl_max") cfg.pl_max = static_cast<int>(config_int(key, v));
    else if (key == "generator.kind") cfg.generator.kind = generator_kind_from_string(v);
    else if (key == "generator.markov_order") cfg.generator.markov.order = static_cast<int>(config_int(key, v));
    else if (key == "generator.markov_alpha") cfg.generator.markov.alpha = config_double(key, v);
    else if (key == "generator.lm_embed_dim") lm.embed_dim = static_cast<int>(config_int(key, v));
    else if (key == "generator.lm_window") lm.window = static_cast<int>(config_int(key, v));
    else if (key == "generator.lm_hidden") lm.hidden = static_cast<int>(config_int(key, v));
    else if (key == "generator.lm_learning_rate") lm.learning_rate = config_double(key, v);
    else if (key == "generator.lm_epochs") lm.epochs = static_cast<int>(config_int(key, v));
    else if (key == "generator.lm_batch_size") lm.batch_size = static_cast<int>(config_int(key, v));
    else if (key == "generator.lm_max_parameters")
      lm.max_parameters = static_cast<std::size_t>(config_int(key, v));
    else if (key == "generator.temperature") cfg.generator.sampling.temperature = config_double(key, v);
    else if (key == "generator.top_k") cfg.generator.sampling.top_k = static_cast<int>(config_int(key, v));
    else if (key == "generator.count_per_class") {
      const auto n = config_int(key, v);
      if (n < 1) throw ConfigError("count_per_class must be >= 1");
      cfg.count_per_class = static_cast<std::size_t>(n);
    } else if (key == "augmenter.smote_k") cfg.augmenter.smote_k = static_cast<int>(config_int(key, v));
    else if (key == "augmenter.fr_p") cfg.augmenter.fr_p = config_double(key, v);
    else if (key == "fidelity.enabled") cfg.fidelity = config_bool(key, v);
    else if (key == "downstream.protocol") {
      if (v == "tstr") cfg.protocol = DownstreamProtocol::tstr;
      else if (v == "augment") cfg.protocol = DownstreamProtocol::augment;
      else if (v == "both") cfg.protocol = DownstreamProtocol::both;
      else throw ConfigError("downstream.protocol must be tstr, augment or both");
    } else if (key == "downstream.fractions") {
      cfg.fractions.clear();
      for (const auto& f : config_list(v)) cfg.fractions.push_back(config_double(key, f));
    } else if (key == "downstream.sources") {
      cfg.sources.clear();
      for (const auto& s : config_list(v)) cfg.sources.push_back(augment_source_from_string(s));
    } else if (key == "downstream.trees") cfg.forest.trees = static_cast<int>(config_int(key, v));
    else if (key == "downstream.max_depth") cfg.forest.max_depth = static_cast<int>(config_int(key, v));
    else if (key == "downstream.min_samples_leaf") cfg.forest.min_samples_leaf = static_cast<int>(config_int(key, v));
    else if (key == "downstream.features_per_split")
      cfg.forest.features_per_split = static_cast<int>(config_int(key, v));
    else if (key == "downstream.bootstrap") cfg.forest.bootstrap = config_bool(key, v);
    else if (key == "run.seed") {
      const auto s = config_int(key, v);
      if (s < 0) throw ConfigError("run.seed must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "run.threads") {
      const auto t = config_int(key, v);
      if (t < 1 || t > 1024) throw ConfigError("run.threads must lie in [1, 1024]");
      cfg.threads = static_cast<unsigned>(t);
    } else if (key == "run.out") cfg.out = v;
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.validate();
}

inline ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg;
  apply_config(cfg, IniDocument::load(path));
  return cfg;
}

}  // namespace tfx
