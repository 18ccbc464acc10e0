#pragma once
// Generator contract shared by all backends: fit on a corpus, sample token
// sequences for a class, save/load, parameter count.
//
// Model file layout (little-endian):
//   "TFXM" u32 version u8 kind | u32 pl_max u32 N u32 L | N x (u32 len, name bytes)
//   | kind-specific body
// Markov body: u32 k f64 alpha, then per class u32 contexts and for each
// context k x i32 ids, u32 entries, entries x (i32 token, u32 count).
// LM body: u32 d u32 w u32 h u32 epochs u32 batch f64 lr u64 max_params, then
// tensors embedding, w1, b1, w2, b2 as (u32 rows, u32 cols, data) where data
// is float32, or for int8 weight tensors f32 scale followed by int8 values.

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "tfx/binary_io.hpp"
#include "tfx/core.hpp"
#include "tfx/generators/markov.hpp"
#include "tfx/generators/quantize.hpp"
#include "tfx/generators/tiny_lm.hpp"
#include "tfx/representation.hpp"

namespace tfx {

enum class GeneratorKind : std::uint8_t { markov = 1, tiny_lm = 2, tiny_lm_int8 = 3 };

inline const char* to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::markov: return "markov";
    case GeneratorKind::tiny_lm: return "lm";
    case GeneratorKind::tiny_lm_int8: return "lm-int8";
  }
  return "markov";
}

inline GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "markov") return GeneratorKind::markov;
  if (s == "lm") return GeneratorKind::tiny_lm;
  if (s == "lm-int8") return GeneratorKind::tiny_lm_int8;
  throw ConfigError("unknown generator kind '" + s + "' (expected markov or lm)");
}

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::markov;
  MarkovHyperparams markov;
  LmHyperparams lm;
  SamplingOptions sampling;
};

class Generator {
 public:
  using Impl = std::variant<MarkovGenerator, TinyCausalLm<float>, QuantizedLm>;

  explicit Generator(Impl impl, std::vector<std::string> label_names = {})
      : impl_(std::move(impl)), names_(std::move(label_names)) {
    if (names_.empty())
      for (int c = 0; c < vocab().n_classes(); ++c) names_.push_back("class" + std::to_string(c));
    if (static_cast<int>(names_.size()) != vocab().n_classes())
      throw ModelError("label names do not match the vocabulary class count");
  }

  GeneratorKind kind() const {
    switch (impl_.index()) {
      case 0: return GeneratorKind::markov;
      case 1: return GeneratorKind::tiny_lm;
      default: return GeneratorKind::tiny_lm_int8;
    }
  }
  const Impl& impl() const { return impl_; }
  const Vocabulary& vocab() const {
    return std::visit([](const auto& m) -> const Vocabulary& { return m.vocab(); }, impl_);
  }
  const std::vector<std::string>& label_names() const { return names_; }
  LabelSpace label_space() const { return LabelSpace(names_, vocab().length(), vocab().pl_max()); }
  std::size_t parameter_count() const {
    return std::visit([](const auto& m) { return m.parameter_count(); }, impl_);
  }

  std::vector<TokenSequence> sample(int class_id, std::size_t count, std::uint64_t seed,
                                    const SamplingOptions& opt = {}, unsigned threads = 1) const {
    if (class_id < 0 || class_id >= vocab().n_classes())
      throw DataError("unknown class id " + std::to_string(class_id));
    std::vector<TokenSequence> out(count);
    parallel_for(count, threads, [&](std::size_t i) { out[i] = sample_at(class_id, i, seed, opt); });
    return out;
  }

  /// One sample from the per-sample stream (seed, class_id, index).
  TokenSequence sample_at(int class_id, std::size_t index, std::uint64_t seed, const SamplingOptions& opt = {}) const {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(class_id), index));
    if (auto* m = std::get_if<MarkovGenerator>(&impl_)) return m->sample_one(class_id, rng);
    return std::visit(
        [&](const auto& m) -> TokenSequence {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, MarkovGenerator>) return {};
          else return lm_sample_one(m, class_id, rng, opt);
        },
        impl_);
  }

  void save(std::ostream& out) const;
  static Generator load(std::istream& in);

  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write model " + path);
    save(out);
  }
  static Generator load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model " + path);
    try {
      return load(in);
    } catch (const DataError& e) {
      throw ModelError(path + ": " + e.what());
    }
  }

 private:
  Impl impl_;
  std::vector<std::string> names_;
};

inline Generator fit_generator(const Corpus& corpus, const GeneratorConfig& cfg, std::uint64_t seed,
                               LmFitLog* log = nullptr) {
  const Vocabulary vocab(corpus.space);
  const auto& names = corpus.space.names();
  switch (cfg.kind) {
    case GeneratorKind::markov: return Generator(MarkovGenerator::fit(corpus, vocab, cfg.markov), names);
    case GeneratorKind::tiny_lm:
      return Generator(TinyCausalLm<float>::fit(corpus, vocab, cfg.lm, seed, log), names);
    case GeneratorKind::tiny_lm_int8:
      return Generator(quantize_weights_int8(TinyCausalLm<float>::fit(corpus, vocab, cfg.lm, seed, log)), names);
  }
  throw ConfigError("unknown generator kind");
}

struct GenerationStats {
  std::size_t emitted = 0;
  std::size_t repaired = 0;
  std::size_t rejected = 0;
};

/// Generates exactly `count` matrices per requested class. Rejected samples
/// are replaced by draws from later stream indices; repairs and rejections
/// are counted.
inline Corpus generate_corpus(const Generator& gen, const LabelSpace& space, const std::vector<int>& classes,
                              std::size_t count, std::uint64_t seed, const SamplingOptions& opt = {},
                              unsigned threads = 1, GenerationStats* stats = nullptr) {
  if (Vocabulary(space) != gen.vocab()) throw ModelError("model vocabulary does not match the label space");
  Corpus out{space, {}, Provenance::synthetic};
  GenerationStats local;
  for (int c : classes) {
    if (!space.contains(c)) throw DataError("unknown class id " + std::to_string(c));
    std::vector<TrafficMatrix> kept;
    std::size_t next_index = 0;
    std::size_t attempts_left = 20 * count + 100;
    while (kept.size() < count) {
      const std::size_t need = count - kept.size();
      std::vector<TokenSequence> batch(need);
      parallel_for(need, threads, [&](std::size_t i) { batch[i] = gen.sample_at(c, next_index + i, seed, opt); });
      next_index += need;
      for (const auto& seq : batch) {
        const auto d = decode_tokens(seq, gen.vocab());
        if (!d.matrix || d.matrix->label() != c) {
          ++local.rejected;
          continue;
        }
        if (d.status == DecodedSample::Status::repaired) ++local.repaired;
        kept.push_back(*d.matrix);
      }
      if (need > attempts_left) throw ModelError("generator rejects too many samples for class " + std::to_string(c));
      attempts_left -= need;
    }
    for (auto& m : kept) out.samples.push_back(std::move(m));
  }
  local.emitted = out.samples.size();
  if (stats) {
    stats->emitted += local.emitted;
    stats->repaired += local.repaired;
    stats->rejected += local.rejected;
  }
  return out;
}

namespace detail {

inline constexpr std::uint32_t kModelVersion = 1;

template <typename M>
void write_f32_tensor(ByteWriter& w, const M& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(m.data()[i]);
}

inline void write_f32_vector(ByteWriter& w, const std::vector<float>& v) {
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (float x : v) w.f32(x);
}

inline void write_q_tensor(ByteWriter& w, const QuantizedTensor& q) {
  w.u32(static_cast<std::uint32_t>(q.rows));
  w.u32(static_cast<std::uint32_t>(q.cols));
  w.f32(q.scale);
  w.bytes(q.values.data(), q.values.size());
}

template <typename M>
void read_f32_tensor(ByteReader& r, M& m) {
  const auto rows = r.u32();
  const auto cols = r.u32();
  if (rows != static_cast<std::uint32_t>(m.rows()) || cols != static_cast<std::uint32_t>(m.cols()))
    throw DataError("tensor shape does not match hyperparameters");
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
}

inline QuantizedTensor read_q_tensor(ByteReader& r, int rows, int cols) {
  QuantizedTensor q;
  q.rows = static_cast<int>(r.u32());
  q.cols = static_cast<int>(r.u32());
  if (q.rows != rows || q.cols != cols) throw DataError("tensor shape does not match hyperparameters");
  q.scale = r.f32();
  q.values.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  r.bytes(q.values.data(), q.values.size());
  return q;
}

inline void write_lm_header(ByteWriter& w, const LmHyperparams& hp) {
  w.u32(static_cast<std::uint32_t>(hp.embed_dim));
  w.u32(static_cast<std::uint32_t>(hp.window));
  w.u32(static_cast<std::uint32_t>(hp.hidden));
  w.u32(static_cast<std::uint32_t>(hp.epochs));
  w.u32(static_cast<std::uint32_t>(hp.batch_size));
  w.f64(hp.learning_rate);
  w.u64(hp.max_parameters);
}

inline LmHyperparams read_lm_header(ByteReader& r) {
  LmHyperparams hp;
  hp.embed_dim = static_cast<int>(r.count(1 << 16));
  hp.window = static_cast<int>(r.count(1 << 10));
  hp.hidden = static_cast<int>(r.count(1 << 16));
  hp.epochs = static_cast<int>(r.u32());
  hp.batch_size = static_cast<int>(r.u32());
  hp.learning_rate = r.f64();
  hp.max_parameters = r.u64();
  return hp;
}

}  // namespace detail

inline void Generator::save(std::ostream& out) const {
  ByteWriter w(out);
  w.bytes("TFXM", 4);
  w.u32(detail::kModelVersion);
  w.u8(static_cast<std::uint8_t>(kind()));
  const auto& v = vocab();
  w.u32(static_cast<std::uint32_t>(v.pl_max()));
  w.u32(static_cast<std::uint32_t>(v.n_classes()));
  w.u32(static_cast<std::uint32_t>(v.length()));
  for (const auto& name : names_) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  if (const auto* m = std::get_if<MarkovGenerator>(&impl_)) {
    w.u32(static_cast<std::uint32_t>(m->hyperparams().order));
    w.f64(m->hyperparams().alpha);
    for (const auto& table : m->tables()) {
      w.u32(static_cast<std::uint32_t>(table.size()));
      for (const auto& [ctx, row] : table) {
        for (int id : ctx) w.i32(id);
        w.u32(static_cast<std::uint32_t>(row.counts.size()));
        for (auto [tok, n] : row.counts) {
          w.i32(tok);
          w.u32(n);
        }
      }
    }
  } else if (const auto* lm = std::get_if<TinyCausalLm<float>>(&impl_)) {
    detail::write_lm_header(w, lm->hyperparams());
    const auto& p = lm->params();
    detail::write_f32_tensor(w, p.embedding);
    detail::write_f32_tensor(w, p.w1);
    detail::write_f32_tensor(w, p.b1);
    detail::write_f32_tensor(w, p.w2);
    detail::write_f32_tensor(w, p.b2);
  } else {
    const auto& q = std::get<QuantizedLm>(impl_);
    detail::write_lm_header(w, q.hyperparams());
    detail::write_q_tensor(w, q.embedding());
    detail::write_q_tensor(w, q.w1());
    detail::write_f32_vector(w, q.b1());
    detail::write_q_tensor(w, q.w2());
    detail::write_f32_vector(w, q.b2());
  }
  if (!out) throw ModelError("failed writing model");
}

inline Generator Generator::load(std::istream& in) {
  ByteReader r(in, "model file");
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "TFXM") throw ModelError("not a TFXM model file");
  if (r.u32() != detail::kModelVersion) throw ModelError("unsupported model file version");
  const auto kind = r.u8();
  const int pl_max = static_cast<int>(r.count(1 << 20));
  const int n = static_cast<int>(r.count(1 << 20));
  const int length = static_cast<int>(r.count(1 << 12));
  const Vocabulary vocab(pl_max, n, length);
  std::vector<std::string> names(static_cast<std::size_t>(n));
  for (auto& name : names) {
    name.resize(r.count(1 << 16));
    r.bytes(name.data(), name.size());
  }
  switch (static_cast<GeneratorKind>(kind)) {
    case GeneratorKind::markov: {
      MarkovHyperparams hp;
      hp.order = static_cast<int>(r.count(1 << 10));
      hp.alpha = r.f64();
      std::vector<MarkovGenerator::Table> tables(static_cast<std::size_t>(n));
      for (auto& table : tables) {
        const auto contexts = r.count(1u << 30);
        for (std::uint32_t c = 0; c < contexts; ++c) {
          MarkovGenerator::Context ctx(static_cast<std::size_t>(hp.order));
          for (auto& id : ctx) id = r.i32();
          MarkovGenerator::Row row;
          const auto entries = r.count(1u << 30);
          for (std::uint32_t e = 0; e < entries; ++e) {
            const int tok = r.i32();
            const auto cnt = r.u32();
            row.counts.emplace_back(tok, cnt);
            row.total += cnt;
          }
          table.emplace(std::move(ctx), std::move(row));
        }
      }
      return Generator(MarkovGenerator(vocab, hp, std::move(tables)), std::move(names));
    }
    case GeneratorKind::tiny_lm: {
      const auto hp = detail::read_lm_header(r);
      TinyCausalLm<float> lm(vocab, hp);
      auto& p = lm.params();
      detail::read_f32_tensor(r, p.embedding);
      detail::read_f32_tensor(r, p.w1);
      detail::read_f32_tensor(r, p.b1);
      detail::read_f32_tensor(r, p.w2);
      detail::read_f32_tensor(r, p.b2);
      return Generator(std::move(lm), std::move(names));
    }
    case GeneratorKind::tiny_lm_int8: {
      const auto hp = detail::read_lm_header(r);
      const int v = vocab.size();
      auto emb = detail::read_q_tensor(r, v, hp.embed_dim);
      auto w1 = detail::read_q_tensor(r, hp.window * hp.embed_dim, hp.hidden);
      Eigen::Matrix<float, 1, Eigen::Dynamic> b1(hp.hidden), b2(v);
      detail::read_f32_tensor(r, b1);
      auto w2 = detail::read_q_tensor(r, hp.hidden, v);
      detail::read_f32_tensor(r, b2);
      return Generator(QuantizedLm(vocab, hp, std::move(emb), std::move(w1),
                                   std::vector<float>(b1.data(), b1.data() + b1.size()), std::move(w2),
                                   std::vector<float>(b2.data(), b2.data() + b2.size())),
                       std::move(names));
    }
  }
  throw ModelError("unknown generator kind tag " + std::to_string(kind));
}

}  // namespace tfx
