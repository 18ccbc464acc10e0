#pragma once
// Pipeline stages behind the CLI verbs. Each command writes its artifacts,
// a JSON report and a manifest into the output directory. Wall-clock
// measurements go to profile.json only when profiling is requested, so
// default outputs are byte-reproducible.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfx/core.hpp"
#include "tfx/corpus_io.hpp"
#include "tfx/downstream/protocols.hpp"
#include "tfx/fidelity.hpp"
#include "tfx/gasf.hpp"
#include "tfx/generators/generator.hpp"
#include "tfx/ingestion.hpp"
#include "tfx/representation.hpp"
#include "tfx/workbench/config.hpp"
#include "tfx/workbench/manifest.hpp"
#include "tfx/workbench/profile.hpp"
#include "tfx/workbench/toy.hpp"

namespace tfx {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

struct RunContext {
  ExperimentConfig cfg;
  fs::path out;
  bool profile = false;
  std::ostream* log = nullptr;
  fs::path display_root;  // paths in reports are written relative to this when set

  std::string display(const fs::path& p) const {
    if (display_root.empty()) return p.generic_string();
    return fs::relative(p, display_root).generic_string();
  }

  void note(const std::string& msg) const {
    if (log) *log << msg << '\n';
  }

  Manifest manifest(const std::string& command) const {
    Manifest m;
    m.command = command;
    m.config_hash = sha256_hex(cfg.canonical_text());
    m.seed = cfg.seed;
    return m;
  }

  void add_input(Manifest& m, const fs::path& p) const { m.inputs.emplace_back(display(p), sha256_file(p)); }

  RunContext sub(const fs::path& dir) const {
    RunContext c = *this;
    c.out = out / dir;
    return c;
  }
};

namespace detail {

inline void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write " + path.string());
  o << text;
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json class_count_json(const Corpus& c) {
  Json j = Json::object();
  const auto counts = c.class_counts();
  for (std::size_t i = 0; i < counts.size(); ++i) j[c.space.names()[i]] = counts[i];
  return j;
}

inline CorpusFile load_corpus_checked(const fs::path& p) {
  auto f = load_corpus(p.string());
  if (f.corpus.samples.empty()) throw DataError(p.string() + " holds no samples");
  return f;
}

inline TraceKind trace_kind_for(const std::string& kind, const fs::path& path) {
  if (kind == "csv") return TraceKind::csv;
  if (kind == "pcap") return TraceKind::pcap_lite;
  if (!kind.empty()) throw ConfigError("trace kind must be csv or pcap");
  const auto ext = path.extension().string();
  return ext == ".pcap" || ext == ".cap" ? TraceKind::pcap_lite : TraceKind::csv;
}

/// Median latency of batch-1 generation (sampling plus decoding) over
/// `runs` samples drawn round-robin across classes.
inline double generation_latency_ms(const Generator& gen, const SamplingOptions& opt, std::uint64_t seed,
                                    std::size_t runs = 200) {
  const int n = gen.vocab().n_classes();
  return median_latency_ms(runs, [&](std::size_t i) {
    const auto seq = gen.sample_at(static_cast<int>(i % static_cast<std::size_t>(n)), i, seed, opt);
    (void)decode_tokens(seq, gen.vocab());
  });
}

}  // namespace detail

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  fs::path trace;
  std::string kind;
  std::string label_rule;
  bool emit_tokens = false;
  bool emit_gasf = false;
};

inline Corpus cmd_ingest(const RunContext& ctx, IngestArgs a) {
  const auto& cfg = ctx.cfg;
  if (a.trace.empty()) a.trace = cfg.trace;
  if (a.trace.empty()) throw ConfigError("ingest needs a trace (--trace or data.trace)");
  if (a.kind.empty()) a.kind = cfg.trace_kind;
  if (a.label_rule.empty()) a.label_rule = cfg.label_rule;
  detail::prepare_dir(ctx.out);

  TraceSource src;
  src.kind = detail::trace_kind_for(a.kind, a.trace);
  src.path = a.trace.string();
  src.label_rule = a.label_rule.empty() ? LabelRule::from_column() : LabelRule::parse(a.label_rule);
  const auto events = parse_trace(src);
  const auto seg = segment_biflows(events.events, src.label_rule);
  IngestReport rep;
  rep.parse = events.stats;
  const Corpus corpus = build_corpus(seg, cfg.length, cfg.pl_max, &rep);
  if (corpus.samples.empty()) throw DataError("trace yields no biflow with payload");
  if (corpus.space.size() < 1) throw DataError("trace yields no labels");

  auto m = ctx.manifest("ingest");
  ctx.add_input(m, a.trace);
  save_corpus((ctx.out / "corpus.jsonl").string(), corpus, Json{{"stage", "ingest"}});
  m.add_output("corpus.jsonl");

  Json r;
  r["trace"] = ctx.display(a.trace);
  r["kind"] = src.kind == TraceKind::csv ? "csv" : "pcap";
  r["label_source"] = a.label_rule.empty() ? "column" : a.label_rule;
  r["events"] = rep.parse.events;
  r["malformed_records"] = rep.parse.malformed;
  r["skipped_non_ipv4"] = rep.parse.skipped_non_ipv4;
  r["skipped_protocol"] = rep.parse.skipped_protocol;
  r["skipped_fragments"] = rep.parse.skipped_fragments;
  r["biflows"] = rep.segment.biflows;
  r["qualifying_packets"] = rep.segment.qualifying_packets;
  r["zero_payload_dropped"] = rep.segment.zero_payload_dropped;
  r["unlabeled_dropped"] = rep.segment.unlabeled_dropped;
  r["label_conflicts"] = rep.segment.label_conflicts;
  r["empty_biflows_dropped"] = rep.segment.empty_biflows_dropped;
  r["samples"] = rep.samples;
  r["dropped_samples"] = rep.dropped_samples;
  r["L"] = cfg.length;
  r["pl_max"] = cfg.pl_max;
  r["classes"] = detail::class_count_json(corpus);

  const Vocabulary vocab(corpus.space);
  if (a.emit_tokens) {
    std::vector<TokenSequence> seqs;
    for (const auto& s : corpus.samples) seqs.push_back(matrix_to_tokens(s, vocab));
    std::ofstream o(ctx.out / "tokens.txt", std::ios::binary);
    write_token_file(o, vocab, seqs);
    m.add_output("tokens.txt");
    r["vocab_size"] = vocab.size();
  }
  if (a.emit_gasf) {
    std::vector<GasfImage> images;
    for (const auto& s : corpus.samples) images.push_back(matrix_to_gasf(s, cfg.pl_max));
    std::ofstream o(ctx.out / "gasf.bin", std::ios::binary);
    write_gasf_file(o, images, cfg.length);
    m.add_output("gasf.bin");
  }
  detail::write_json(ctx.out / "ingest_report.json", r);
  m.add_output("ingest_report.json");
  m.write(ctx.out);
  ctx.note("[ingest] " + std::to_string(rep.segment.biflows) + " biflows -> " + std::to_string(rep.samples) +
           " samples, " + std::to_string(corpus.space.size()) + " classes");
  return corpus;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path corpus;
  std::optional<GeneratorKind> kind;
};

inline Generator cmd_train(const RunContext& ctx, const TrainArgs& a) {
  if (a.corpus.empty()) throw ConfigError("train needs --corpus");
  GeneratorConfig gcfg = ctx.cfg.generator;
  if (a.kind) gcfg.kind = *a.kind;
  const auto file = detail::load_corpus_checked(a.corpus);
  detail::prepare_dir(ctx.out);
  if (gcfg.kind != GeneratorKind::markov) {
    const auto params = lm_parameter_count(Vocabulary(file.corpus.space).size(), gcfg.lm);
    if (params > gcfg.lm.max_parameters)
      throw ConfigError("language model would have " + std::to_string(params) + " parameters, budget is " +
                        std::to_string(gcfg.lm.max_parameters));
  }
  ctx.note(std::string("[train] fitting ") + to_string(gcfg.kind) + " on " +
           std::to_string(file.corpus.samples.size()) + " samples");
  LmFitLog log;
  const auto t0 = std::chrono::steady_clock::now();
  auto gen = fit_generator(file.corpus, gcfg, ctx.cfg.seed, &log);
  const double fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  auto m = ctx.manifest("train");
  ctx.add_input(m, a.corpus);
  gen.save_file((ctx.out / "model.tfxm").string());
  m.add_output("model.tfxm");

  Json r;
  r["generator"] = to_string(gen.kind());
  r["corpus"] = ctx.display(a.corpus);
  r["samples"] = file.corpus.samples.size();
  r["classes"] = detail::class_count_json(file.corpus);
  r["vocab_size"] = gen.vocab().size();
  r["parameter_count"] = gen.parameter_count();
  r["model_bytes"] = fs::file_size(ctx.out / "model.tfxm");
  if (gcfg.kind == GeneratorKind::markov) {
    r["order"] = gcfg.markov.order;
    r["alpha"] = gcfg.markov.alpha;
  } else {
    const auto& hp = gcfg.lm;
    r["hyperparameters"] = {{"embed_dim", hp.embed_dim}, {"window", hp.window},     {"hidden", hp.hidden},
                            {"learning_rate", hp.learning_rate}, {"epochs", hp.epochs}, {"batch_size", hp.batch_size},
                            {"max_parameters", hp.max_parameters}};
    r["ln_vocab"] = std::log(static_cast<double>(gen.vocab().size()));
    r["initial_loss"] = log.initial_loss;
    r["epoch_loss"] = log.epoch_loss;
  }
  detail::write_json(ctx.out / "train_report.json", r);
  m.add_output("train_report.json");

  if (ctx.profile) {
    ResourceProfile p;
    p.epoch_seconds = gcfg.kind == GeneratorKind::markov ? std::vector<double>{fit_seconds} : log.epoch_seconds;
    p.latency_samples = 200;
    p.latency_ms_per_sample = detail::generation_latency_ms(gen, gcfg.sampling, ctx.cfg.seed, p.latency_samples);
    p.peak_rss_mb = peak_rss_mb();
    p.model_size_mb = file_size_mb(ctx.out / "model.tfxm");
    detail::write_json(ctx.out / "profile.json", p.to_json());
    m.add_output("profile.json");
  }
  m.write(ctx.out);
  if (!log.epoch_loss.empty())
    ctx.note("[train] loss " + std::to_string(log.initial_loss) + " -> " + std::to_string(log.epoch_loss.back()));
  return gen;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  fs::path model;
  std::vector<std::string> classes;  // names or numeric ids; empty = all
  std::size_t count = 0;             // 0 = generator.count_per_class
};

inline std::vector<int> resolve_classes(const LabelSpace& space, const std::vector<std::string>& wanted) {
  std::vector<int> ids;
  if (wanted.empty()) {
    for (int c = 0; c < space.size(); ++c) ids.push_back(c);
    return ids;
  }
  for (const auto& w : wanted) {
    const auto& names = space.names();
    const auto it = std::find(names.begin(), names.end(), w);
    int id = -1;
    if (it != names.end()) {
      id = static_cast<int>(it - names.begin());
    } else {
      std::int64_t v = -1;
      try {
        v = detail::config_int("class", w);
      } catch (const ConfigError&) {
        throw ConfigError("unknown class '" + w + "'");
      }
      if (v < 0 || v >= space.size()) throw ConfigError("unknown class id " + w);
      id = static_cast<int>(v);
    }
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  return ids;
}

inline Corpus cmd_generate(const RunContext& ctx, const GenerateArgs& a) {
  if (a.model.empty()) throw ConfigError("generate needs --model");
  const auto gen = Generator::load_file(a.model.string());
  const auto space = gen.label_space();
  const auto classes = resolve_classes(space, a.classes);
  const std::size_t count = a.count ? a.count : ctx.cfg.count_per_class;
  detail::prepare_dir(ctx.out);
  GenerationStats stats;
  const auto& opt = ctx.cfg.generator.sampling;
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = generate_corpus(gen, space, classes, count, ctx.cfg.seed, opt, ctx.cfg.threads, &stats);
  const double gen_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  corpus.validate();

  auto m = ctx.manifest("generate");
  ctx.add_input(m, a.model);
  Json meta;
  meta["stage"] = "generate";
  meta["generator"] = to_string(gen.kind());
  meta["seed"] = ctx.cfg.seed;
  meta["count_per_class"] = count;
  meta["repaired"] = stats.repaired;
  meta["rejected"] = stats.rejected;
  save_corpus((ctx.out / "synthetic.jsonl").string(), corpus, meta);
  m.add_output("synthetic.jsonl");

  Json r;
  r["generator"] = to_string(gen.kind());
  r["model"] = ctx.display(a.model);
  r["count_per_class"] = count;
  Json names = Json::array();
  for (int c : classes) names.push_back(space.names()[static_cast<std::size_t>(c)]);
  r["classes"] = names;
  r["emitted"] = stats.emitted;
  r["repaired"] = stats.repaired;
  r["rejected"] = stats.rejected;
  r["temperature"] = opt.temperature;
  r["top_k"] = opt.top_k;
  detail::write_json(ctx.out / "generate_report.json", r);
  m.add_output("generate_report.json");
  if (ctx.profile) {
    ResourceProfile p;
    p.latency_samples = 200;
    p.latency_ms_per_sample = detail::generation_latency_ms(gen, opt, ctx.cfg.seed, p.latency_samples);
    p.peak_rss_mb = peak_rss_mb();
    p.model_size_mb = file_size_mb(a.model);
    auto j = p.to_json();
    j["batch_generation_seconds"] = gen_seconds;
    detail::write_json(ctx.out / "profile.json", j);
    m.add_output("profile.json");
  }
  m.write(ctx.out);
  ctx.note("[generate] " + std::to_string(stats.emitted) + " samples (" + std::to_string(stats.repaired) +
           " repaired, " + std::to_string(stats.rejected) + " rejected)");
  return corpus;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  fs::path real;
  fs::path synth;
};

inline FidelityReport cmd_evaluate(const RunContext& ctx, const EvaluateArgs& a) {
  if (a.real.empty() || a.synth.empty()) throw ConfigError("evaluate needs --real and --synth");
  const auto real = detail::load_corpus_checked(a.real);
  const auto synth = detail::load_corpus_checked(a.synth);
  detail::prepare_dir(ctx.out);
  auto rep = evaluate_fidelity(real.corpus, synth.corpus, ctx.cfg.threads);
  rep.repaired = synth.meta.value("repaired", std::size_t{0});
  rep.rejected = synth.meta.value("rejected", std::size_t{0});
  auto m = ctx.manifest("evaluate");
  ctx.add_input(m, a.real);
  ctx.add_input(m, a.synth);
  auto j = rep.to_json();
  j["real"] = ctx.display(a.real);
  j["synthetic"] = ctx.display(a.synth);
  detail::write_json(ctx.out / "fidelity.json", j);
  detail::write_text(ctx.out / "fidelity.csv", rep.to_csv());
  m.add_output("fidelity.json");
  m.add_output("fidelity.csv");
  m.write(ctx.out);
  ctx.note("[evaluate] jsd num/1g/2g/markov = " + std::to_string(rep.macro[0]) + "/" + std::to_string(rep.macro[1]) +
           "/" + std::to_string(rep.macro[2]) + "/" + std::to_string(rep.macro[3]) +
           ", uniq_align " + std::to_string(rep.uniq_align) + ", leakage " + std::to_string(rep.leakage));
  return rep;
}

// ---------------------------------------------------------------- downstream

struct DownstreamArgs {
  fs::path real;
  fs::path synth;  // TSTR training set; generated from --model when absent
  fs::path model;
  std::optional<DownstreamProtocol> protocol;
  std::vector<double> fractions;  // empty = config
};

struct DownstreamOutcome {
  std::optional<TstrResult> tstr;
  std::optional<AugmentSweep> sweep;
};

inline DownstreamOutcome cmd_downstream(const RunContext& ctx, const DownstreamArgs& a) {
  const auto& cfg = ctx.cfg;
  if (a.real.empty()) throw ConfigError("downstream needs --real");
  const auto protocol = a.protocol.value_or(cfg.protocol);
  const auto fractions = a.fractions.empty() ? cfg.fractions : a.fractions;
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("fractions must lie in (0, 1]");
  const auto real = detail::load_corpus_checked(a.real);
  const auto split = make_real_split(real.corpus, cfg.seed);
  std::optional<Generator> gen;
  if (!a.model.empty()) {
    gen.emplace(Generator::load_file(a.model.string()));
    if (Vocabulary(real.corpus.space) != gen->vocab() || gen->label_names() != real.corpus.space.names())
      throw DataError("model label space does not match the real corpus");
  }
  detail::prepare_dir(ctx.out);
  auto m = ctx.manifest("downstream");
  ctx.add_input(m, a.real);
  if (!a.synth.empty()) ctx.add_input(m, a.synth);
  if (gen) ctx.add_input(m, a.model);
  DownstreamOutcome outcome;

  if (protocol != DownstreamProtocol::augment) {
    Corpus synth;
    if (!a.synth.empty()) {
      synth = detail::load_corpus_checked(a.synth).corpus;
    } else if (gen) {
      // As many synthetic samples per class as the real training split holds.
      synth = Corpus{real.corpus.space, {}, Provenance::synthetic};
      const auto counts = split.train.class_counts();
      for (int c : present_classes(split.train)) {
        auto part = generate_corpus(*gen, real.corpus.space, {c}, counts[static_cast<std::size_t>(c)],
                                    derive_seed(cfg.seed, 0x7577), cfg.generator.sampling, cfg.threads);
        for (auto& s : part.samples) synth.samples.push_back(std::move(s));
      }
    } else {
      throw ConfigError("tstr needs --synth or --model");
    }
    outcome.tstr = tstr(synth, split, cfg.forest, cfg.seed, cfg.threads);
    auto j = outcome.tstr->to_json(real.corpus.space, cfg.forest);
    j["split"] = {{"train_fraction", kTrainFraction}, {"train", split.train.samples.size()},
                  {"test", split.test.samples.size()}};
    detail::write_json(ctx.out / "downstream_tstr.json", j);
    std::ostringstream csv;
    csv.precision(17);
    csv << "protocol,macro_f1,baseline_f1,gap\n"
        << "tstr," << outcome.tstr->synthetic.macro_f1 << ',' << outcome.tstr->baseline.macro_f1 << ','
        << outcome.tstr->gap() << '\n';
    detail::write_text(ctx.out / "downstream_tstr.csv", csv.str());
    m.add_output("downstream_tstr.json");
    m.add_output("downstream_tstr.csv");
    ctx.note("[downstream] tstr macro F1 " + std::to_string(outcome.tstr->synthetic.macro_f1) + " (baseline " +
             std::to_string(outcome.tstr->baseline.macro_f1) + ")");
  }

  if (protocol != DownstreamProtocol::tstr) {
    std::vector<AugmentSource> sources = cfg.sources;
    if (!gen) {
      const auto before = sources.size();
      std::erase(sources, AugmentSource::generator);
      if (sources.size() != before) ctx.note("[downstream] no --model given; generator source skipped");
    }
    if (sources.empty()) throw ConfigError("augment sweep has no sources");
    AugmentOptions opt;
    opt.generator = gen ? &*gen : nullptr;
    opt.sampling = cfg.generator.sampling;
    opt.augmenter = cfg.augmenter;
    opt.forest = cfg.forest;
    opt.threads = cfg.threads;
    outcome.sweep = augment_sweep(split, fractions, sources, opt, cfg.seed);
    auto j = outcome.sweep->to_json(real.corpus.space, cfg.forest);
    j["augmenter"] = {{"smote_k", cfg.augmenter.smote_k}, {"fr_p", cfg.augmenter.fr_p}};
    detail::write_json(ctx.out / "downstream_augment.json", j);
    detail::write_text(ctx.out / "downstream_augment.csv", outcome.sweep->to_csv());
    m.add_output("downstream_augment.json");
    m.add_output("downstream_augment.csv");
    for (const auto& row : outcome.sweep->rows)
      ctx.note("[downstream] augment fraction " + std::to_string(row.fraction) + " " + to_string(row.source) +
               ": macro F1 " + std::to_string(row.score.macro_f1));
  }
  m.write(ctx.out);
  return outcome;
}

// ---------------------------------------------------------------- quantize

struct QuantizeArgs {
  fs::path model;
  fs::path reference;  // optional corpus for fidelity deltas and extra prompts
};

struct QuantizeOutcome {
  std::uintmax_t float_bytes = 0;
  std::uintmax_t int8_bytes = 0;
  double agreement = 0.0;
  std::optional<FidelityReport> fidelity_float;
  std::optional<FidelityReport> fidelity_int8;

  double size_ratio() const { return static_cast<double>(int8_bytes) / static_cast<double>(float_bytes); }
};

inline QuantizeOutcome cmd_quantize(const RunContext& ctx, const QuantizeArgs& a) {
  if (a.model.empty()) throw ConfigError("quantize needs --model");
  const auto src = Generator::load_file(a.model.string());
  TinyCausalLm<float> reference_model;
  QuantizedLm q;
  if (const auto* lm = std::get_if<TinyCausalLm<float>>(&src.impl())) {
    reference_model = *lm;
    q = quantize_weights_int8(*lm);
  } else if (const auto* ql = std::get_if<QuantizedLm>(&src.impl())) {
    reference_model = dequantize_model(*ql);
    q = quantize_weights_int8(*ql);
  } else {
    throw ModelError("quantize needs a neural model; got " + std::string(to_string(src.kind())));
  }
  const Generator float_gen(reference_model, src.label_names());
  const Generator int8_gen(q, src.label_names());
  detail::prepare_dir(ctx.out);
  auto m = ctx.manifest("quantize");
  ctx.add_input(m, a.model);

  // The float size is measured on a fresh float serialization so that
  // requantizing an int8 input still compares against the float layout.
  std::ostringstream float_bytes;
  float_gen.save(float_bytes);
  int8_gen.save_file((ctx.out / "model_int8.tfxm").string());
  m.add_output("model_int8.tfxm");
  QuantizeOutcome o;
  o.float_bytes = float_bytes.str().size();
  o.int8_bytes = fs::file_size(ctx.out / "model_int8.tfxm");

  const auto space = src.label_space();
  const Vocabulary& vocab = src.vocab();
  std::vector<TokenSequence> prompts;
  for (int c = 0; c < vocab.n_classes(); ++c) prompts.push_back(greedy_decode(reference_model, c));
  std::optional<CorpusFile> ref;
  if (!a.reference.empty()) {
    ref = detail::load_corpus_checked(a.reference);
    require_same_label_space(ref->corpus.space, space);
    ctx.add_input(m, a.reference);
    for (const auto& s : ref->corpus.samples) prompts.push_back(matrix_to_tokens(s, vocab));
  }
  o.agreement = argmax_agreement(reference_model, q, prompts);

  Json r;
  r["model"] = ctx.display(a.model);
  r["scheme"] = "int8 weight-only, symmetric per-tensor scale, float32 biases";
  r["float_bytes"] = o.float_bytes;
  r["int8_bytes"] = o.int8_bytes;
  r["size_ratio"] = o.size_ratio();
  r["argmax_agreement"] = o.agreement;
  r["agreement_prompts"] = prompts.size();
  if (ref) {
    const auto classes = present_classes(ref->corpus);
    const auto& opt = ctx.cfg.generator.sampling;
    const std::size_t n = ctx.cfg.count_per_class;
    const auto fs_corpus = generate_corpus(float_gen, space, classes, n, ctx.cfg.seed, opt, ctx.cfg.threads);
    const auto q_corpus = generate_corpus(int8_gen, space, classes, n, ctx.cfg.seed, opt, ctx.cfg.threads);
    o.fidelity_float = evaluate_fidelity(ref->corpus, fs_corpus, ctx.cfg.threads);
    o.fidelity_int8 = evaluate_fidelity(ref->corpus, q_corpus, ctx.cfg.threads);
    Json d;
    for (std::size_t p = 0; p < 4; ++p)
      d[to_string(kFidelityProperties[p])] = std::abs(o.fidelity_int8->macro[p] - o.fidelity_float->macro[p]);
    d["uniq_align"] = std::abs(o.fidelity_int8->uniq_align - o.fidelity_float->uniq_align);
    d["leakage"] = std::abs(o.fidelity_int8->leakage - o.fidelity_float->leakage);
    r["reference"] = ctx.display(a.reference);
    r["count_per_class"] = n;
    r["fidelity_float"] = o.fidelity_float->to_json()["macro"];
    r["fidelity_int8"] = o.fidelity_int8->to_json()["macro"];
    r["fidelity_delta"] = d;
  }
  detail::write_json(ctx.out / "quantize_report.json", r);
  m.add_output("quantize_report.json");
  m.write(ctx.out);
  ctx.note("[quantize] " + std::to_string(o.float_bytes) + " -> " + std::to_string(o.int8_bytes) +
           " bytes, argmax agreement " + std::to_string(o.agreement));
  return o;
}

// ---------------------------------------------------------------- inspect

inline Json cmd_inspect(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  const std::string head(magic, static_cast<std::size_t>(in.gcount()));
  in.clear();
  in.seekg(0);
  Json j;
  j["path"] = path.generic_string();
  if (head == "TFXM") {
    const auto gen = Generator::load_file(path.string());
    j["type"] = "model";
    j["generator"] = to_string(gen.kind());
    j["vocab"] = {{"pl_max", gen.vocab().pl_max()}, {"N", gen.vocab().n_classes()}, {"L", gen.vocab().length()},
                  {"size", gen.vocab().size()}};
    j["labels"] = gen.label_names();
    j["parameter_count"] = gen.parameter_count();
    j["bytes"] = fs::file_size(path);
    return j;
  }
  if (head == "TFXG") {
    const auto images = read_gasf_file(in);
    j["type"] = "gasf";
    j["images"] = images.size();
    j["L"] = images.empty() ? 0 : images.front().length;
    return j;
  }
  std::string first;
  std::getline(in, first);
  Json h;
  try {
    h = Json::parse(first);
  } catch (const nlohmann::json::exception&) {
    throw DataError(path.string() + " is not a recognized tfx file");
  }
  const auto format = h.value("format", std::string());
  in.clear();
  in.seekg(0);
  if (format == kCorpusFormat) {
    const auto f = read_corpus(in);
    j["type"] = "corpus";
    j["provenance"] = to_string(f.corpus.provenance);
    j["L"] = f.corpus.space.length();
    j["pl_max"] = f.corpus.space.pl_max();
    j["samples"] = f.corpus.samples.size();
    j["classes"] = detail::class_count_json(f.corpus);
    if (!f.corpus.samples.empty()) {
      j["uniqueness"] = uniqueness(f.corpus);
      double mean_len = 0.0;
      for (const auto& s : f.corpus.samples) mean_len += s.effective_length();
      j["mean_effective_length"] = mean_len / static_cast<double>(f.corpus.samples.size());
    }
    j["meta"] = f.meta;
    return j;
  }
  if (format == kTokenFormat) {
    const auto f = read_token_file(in);
    j["type"] = "tokens";
    j["vocab"] = {{"pl_max", f.vocab.pl_max()}, {"N", f.vocab.n_classes()}, {"L", f.vocab.length()},
                  {"size", f.vocab.size()}};
    j["sequences"] = f.sequences.size();
    std::size_t well_formed = 0;
    for (const auto& s : f.sequences) well_formed += is_well_formed(s, f.vocab);
    j["well_formed"] = well_formed;
    j["unparsable_lines"] = f.unparsable_lines;
    return j;
  }
  throw DataError(path.string() + " is not a recognized tfx file");
}

// ---------------------------------------------------------------- demo

struct DemoOutcome {
  FidelityReport markov_fidelity;
  FidelityReport lm_fidelity;
  QuantizeOutcome quantize;
  DownstreamOutcome downstream;
};

/// Whole pipeline on a bundled toy trace: ingest, split, train both
/// generators, quantize, generate, evaluate and run the downstream sweep.
inline DemoOutcome cmd_demo(const RunContext& ctx, std::size_t flows_per_class = 500) {
  detail::prepare_dir(ctx.out);
  RunContext base = ctx;
  base.display_root = ctx.out;
  const auto out = ctx.out;
  const auto& cfg = ctx.cfg;

  {
    const auto events = toy_events(separable_toy(flows_per_class), cfg.seed);
    std::ofstream o(out / "trace.csv", std::ios::binary);
    write_csv(o, events, true);
  }
  IngestArgs ia;
  ia.trace = out / "trace.csv";
  ia.kind = "csv";
  ia.emit_tokens = true;
  ia.emit_gasf = true;
  ia.label_rule.clear();
  RunContext ictx = base.sub("ingest");
  ictx.cfg.label_rule.clear();
  const Corpus corpus = cmd_ingest(ictx, ia);

  const auto split = make_real_split(corpus, cfg.seed);
  detail::prepare_dir(out / "split");
  save_corpus((out / "split" / "train.jsonl").string(), split.train, Json{{"stage", "split"}, {"part", "train"}});
  save_corpus((out / "split" / "test.jsonl").string(), split.test, Json{{"stage", "split"}, {"part", "test"}});
  const auto train_path = out / "split" / "train.jsonl";

  cmd_train(base.sub("train/markov"), {train_path, GeneratorKind::markov});
  cmd_train(base.sub("train/lm"), {train_path, GeneratorKind::tiny_lm});
  DemoOutcome d;
  // Agreement and fidelity deltas are measured on the held-out test part.
  d.quantize = cmd_quantize(base.sub("quantize"), {out / "train/lm/model.tfxm", out / "split" / "test.jsonl"});

  const std::pair<const char*, fs::path> models[] = {{"markov", out / "train/markov/model.tfxm"},
                                                     {"lm", out / "train/lm/model.tfxm"},
                                                     {"lm-int8", out / "quantize/model_int8.tfxm"}};
  for (const auto& [name, model] : models) {
    cmd_generate(base.sub(fs::path("generate") / name), {model, {}, 0});
    const auto rep = cmd_evaluate(base.sub(fs::path("evaluate") / name),
                                  {train_path, out / "generate" / name / "synthetic.jsonl"});
    if (std::string(name) == "markov") d.markov_fidelity = rep;
    if (std::string(name) == "lm") d.lm_fidelity = rep;
  }

  // The downstream split is recomputed from the full corpus with the same
  // seed, so the generator above has only seen the training part.
  RunContext dctx = base.sub("downstream");
  d.downstream = cmd_downstream(dctx, {out / "ingest/corpus.jsonl", {}, out / "train/markov/model.tfxm", {}, {}});

  Json s;
  s["flows_per_class"] = flows_per_class;
  s["samples"] = corpus.samples.size();
  s["fidelity_markov"] = d.markov_fidelity.to_json()["macro"];
  s["fidelity_lm"] = d.lm_fidelity.to_json()["macro"];
  s["quantize"] = {{"size_ratio", d.quantize.size_ratio()}, {"argmax_agreement", d.quantize.agreement}};
  if (d.downstream.tstr)
    s["tstr"] = {{"macro_f1", d.downstream.tstr->synthetic.macro_f1},
                 {"baseline_f1", d.downstream.tstr->baseline.macro_f1}};
  if (d.downstream.sweep) {
    Json rows = Json::array();
    for (const auto& r : d.downstream.sweep->rows)
      rows.push_back({{"fraction", r.fraction}, {"source", to_string(r.source)}, {"macro_f1", r.score.macro_f1}});
    s["augment"] = rows;
  }
  detail::write_json(out / "demo_summary.json", s);
  detail::write_text(out / "config.ini", cfg.canonical_text());

  auto m = ctx.manifest("demo");
  m.add_outputs_under(out);
  m.write(out);
  return d;
}

}  // namespace tfx
