#pragma once
// Windowed neural causal language model over the token vocabulary:
// concatenated embeddings of the last w tokens -> ReLU hidden layer ->
// softmax over the vocabulary. Trained with mini-batch Adam on next-token
// cross-entropy, PAD targets masked out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfx/core.hpp"
#include "tfx/parallel.hpp"
#include "tfx/representation.hpp"
#include "tfx/rng.hpp"

namespace tfx {

struct LmHyperparams {
  int embed_dim = 64;
  int window = 11;
  int hidden = 360;
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 64;
  std::size_t max_parameters = 2'000'000;
};

inline std::size_t lm_parameter_count(int vocab, const LmHyperparams& hp) {
  const auto v = static_cast<std::size_t>(vocab);
  const auto d = static_cast<std::size_t>(hp.embed_dim);
  const auto w = static_cast<std::size_t>(hp.window);
  const auto h = static_cast<std::size_t>(hp.hidden);
  return v * d + w * d * h + h + h * v + v;
}

/// Flattened (context window, target) pairs.
struct LmExamples {
  int window = 0;
  std::vector<int> contexts;  // size() * window ids
  std::vector<int> targets;
  std::vector<std::size_t> sequence_offsets;  // examples of sequence s: [off[s], off[s+1])

  std::size_t size() const { return targets.size(); }
  std::span<const int> context(std::size_t i) const {
    return std::span<const int>(contexts).subspan(i * static_cast<std::size_t>(window),
                                                  static_cast<std::size_t>(window));
  }
};

/// Window of the `window` tokens preceding position t, PAD-filled on the left.
inline void context_window(std::span<const int> ids, int t, int window, std::span<int> out) {
  for (int j = 0; j < window; ++j) {
    const int pos = t - window + j;
    out[static_cast<std::size_t>(j)] = pos < 0 ? Vocabulary::kPad : ids[static_cast<std::size_t>(pos)];
  }
}

inline LmExamples make_lm_examples(const std::vector<TokenSequence>& seqs, int window) {
  LmExamples ex;
  ex.window = window;
  ex.sequence_offsets.push_back(0);
  std::vector<int> ctx(static_cast<std::size_t>(window));
  for (const auto& s : seqs) {
    for (int t = 1; t < static_cast<int>(s.ids.size()); ++t) {
      const int target = s.ids[static_cast<std::size_t>(t)];
      if (target == Vocabulary::kPad) continue;
      context_window(s.ids, t, window, ctx);
      ex.contexts.insert(ex.contexts.end(), ctx.begin(), ctx.end());
      ex.targets.push_back(target);
    }
    ex.sequence_offsets.push_back(ex.targets.size());
  }
  return ex;
}

struct LmFitLog {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_seconds;
};

template <typename T>
class TinyCausalLm {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  struct Params {
    Matrix embedding;  // vocab x d
    Matrix w1;         // (w*d) x h
    RowVector b1;      // h
    Matrix w2;         // h x vocab
    RowVector b2;      // vocab

    void set_zero_like(const Params& o) {
      embedding = Matrix::Zero(o.embedding.rows(), o.embedding.cols());
      w1 = Matrix::Zero(o.w1.rows(), o.w1.cols());
      b1 = RowVector::Zero(o.b1.cols());
      w2 = Matrix::Zero(o.w2.rows(), o.w2.cols());
      b2 = RowVector::Zero(o.b2.cols());
    }

    void zero() {
      embedding.setZero();
      w1.setZero();
      b1.setZero();
      w2.setZero();
      b2.setZero();
    }

    /// Visits (name, flat data, size) of every tensor in a fixed order.
    template <typename Fn>
    void for_each(Fn&& fn) {
      fn("embedding", embedding.data(), embedding.size());
      fn("w1", w1.data(), w1.size());
      fn("b1", b1.data(), b1.size());
      fn("w2", w2.data(), w2.size());
      fn("b2", b2.data(), b2.size());
    }
  };

  TinyCausalLm() = default;
  TinyCausalLm(Vocabulary vocab, LmHyperparams hp) : vocab_(vocab), hp_(hp) {
    if (hp.embed_dim < 1 || hp.window < 1 || hp.hidden < 1 || hp.batch_size < 1 || hp.epochs < 0 ||
        !(hp.learning_rate > 0.0))
      throw ConfigError("invalid language-model hyperparameters");
    const int v = vocab.size();
    const int wd = hp.window * hp.embed_dim;
    p_.embedding = Matrix::Zero(v, hp.embed_dim);
    p_.w1 = Matrix::Zero(wd, hp.hidden);
    p_.b1 = RowVector::Zero(hp.hidden);
    p_.w2 = Matrix::Zero(hp.hidden, v);
    p_.b2 = RowVector::Zero(v);
  }

  const Vocabulary& vocab() const { return vocab_; }
  const LmHyperparams& hyperparams() const { return hp_; }
  int window() const { return hp_.window; }
  Params& params() { return p_; }
  const Params& params() const { return p_; }
  std::size_t parameter_count() const { return lm_parameter_count(vocab_.size(), hp_); }

  /// Embeddings ~ N(0, 0.1^2), hidden weights He-scaled, output weights
  /// N(0, 1/h) scaled down so initial predictions are near uniform.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    auto fill = [&](T* data, Eigen::Index n, double stddev) {
      for (Eigen::Index i = 0; i < n; ++i) data[i] = static_cast<T>(rng.normal() * stddev);
    };
    fill(p_.embedding.data(), p_.embedding.size(), 0.1);
    fill(p_.w1.data(), p_.w1.size(), std::sqrt(2.0 / static_cast<double>(p_.w1.rows())));
    fill(p_.w2.data(), p_.w2.size(), 0.1 / std::sqrt(static_cast<double>(hp_.hidden)));
    p_.b1.setZero();
    p_.b2.setZero();
  }

  /// Mean cross-entropy over the selected examples; accumulates the gradient
  /// of that mean into `grad` when given (grad must be zero-initialized).
  T loss_and_gradient(const LmExamples& ex, std::span<const std::size_t> rows, Params* grad) const {
    const auto b = static_cast<Eigen::Index>(rows.size());
    if (b == 0) return T(0);
    const int d = hp_.embed_dim;
    Matrix x(b, static_cast<Eigen::Index>(hp_.window) * d);
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto ctx = ex.context(rows[static_cast<std::size_t>(r)]);
      for (int s = 0; s < hp_.window; ++s)
        x.row(r).segment(s * d, d) = p_.embedding.row(ctx[static_cast<std::size_t>(s)]);
    }
    Matrix a = x * p_.w1;
    a.rowwise() += p_.b1;
    Matrix h = a.cwiseMax(T(0));
    Matrix z = h * p_.w2;
    z.rowwise() += p_.b2;
    T loss = 0;
    for (Eigen::Index r = 0; r < b; ++r) {
      const T mx = z.row(r).maxCoeff();
      z.row(r) = (z.row(r).array() - mx).exp().matrix();
      const T sum = z.row(r).sum();
      z.row(r) /= sum;
      const int target = ex.targets[rows[static_cast<std::size_t>(r)]];
      loss -= std::log(std::max(z(r, target), std::numeric_limits<T>::min()));
    }
    loss /= static_cast<T>(b);
    if (!grad) return loss;

    // z now holds softmax probabilities; turn it into dLoss/dlogits.
    for (Eigen::Index r = 0; r < b; ++r) z(r, ex.targets[rows[static_cast<std::size_t>(r)]]) -= T(1);
    z /= static_cast<T>(b);
    grad->w2.noalias() += h.transpose() * z;
    grad->b2 += z.colwise().sum();
    Matrix dh = z * p_.w2.transpose();
    dh.array() *= (a.array() > T(0)).template cast<T>();
    grad->w1.noalias() += x.transpose() * dh;
    grad->b1 += dh.colwise().sum();
    Matrix dx = dh * p_.w1.transpose();
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto ctx = ex.context(rows[static_cast<std::size_t>(r)]);
      for (int s = 0; s < hp_.window; ++s)
        grad->embedding.row(ctx[static_cast<std::size_t>(s)]) += dx.row(r).segment(s * d, d);
    }
    return loss;
  }

  /// Mean loss over all examples, evaluated in chunks without gradients.
  double mean_loss(const LmExamples& ex) const {
    double total = 0.0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < ex.size(); start += 512) {
      rows.clear();
      for (std::size_t i = start; i < std::min(ex.size(), start + 512); ++i) rows.push_back(i);
      total += static_cast<double>(loss_and_gradient(ex, rows, nullptr)) * static_cast<double>(rows.size());
    }
    return ex.size() ? total / static_cast<double>(ex.size()) : 0.0;
  }

  /// Next-token logits for one context window of `window()` ids.
  void logits(std::span<const int> context, std::vector<float>& out) const {
    const int d = hp_.embed_dim;
    RowVector x(static_cast<Eigen::Index>(hp_.window) * d);
    for (int s = 0; s < hp_.window; ++s) x.segment(s * d, d) = p_.embedding.row(context[static_cast<std::size_t>(s)]);
    RowVector h = (x * p_.w1 + p_.b1).cwiseMax(T(0));
    RowVector z = h * p_.w2 + p_.b2;
    out.resize(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(z[i]);
  }

  /// Trains a freshly initialized model. Sequences are shuffled per epoch
  /// and grouped into batches of `batch_size` sequences.
  static TinyCausalLm fit(const Corpus& corpus, const Vocabulary& vocab, const LmHyperparams& hp,
                          std::uint64_t seed, LmFitLog* log = nullptr) {
    if (vocab.n_classes() != corpus.space.size()) throw ConfigError("vocabulary N differs from label space");
    const auto count = lm_parameter_count(vocab.size(), hp);
    if (count > hp.max_parameters)
      throw ConfigError("language model has " + std::to_string(count) + " parameters, budget is " +
                        std::to_string(hp.max_parameters));
    if (corpus.samples.empty()) throw DataError("cannot train on an empty corpus");
    TinyCausalLm model(vocab, hp);
    model.initialize(seed);
    std::vector<TokenSequence> seqs;
    seqs.reserve(corpus.samples.size());
    for (const auto& s : corpus.samples) seqs.push_back(matrix_to_tokens(s, vocab));
    const auto ex = make_lm_examples(seqs, hp.window);
    LmFitLog local;
    LmFitLog& lg = log ? *log : local;
    lg.initial_loss = model.mean_loss(ex);

    Params grad, m, v;
    grad.set_zero_like(model.p_);
    m.set_zero_like(model.p_);
    v.set_zero_like(model.p_);
    std::vector<std::size_t> order(seqs.size());
    std::vector<std::size_t> rows;
    std::uint64_t step = 0;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
      const auto started = std::chrono::steady_clock::now();
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
      rng.shuffle(order);
      double epoch_total = 0.0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch_size)) {
        rows.clear();
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch_size));
        for (std::size_t k = start; k < end; ++k)
          for (auto i = ex.sequence_offsets[order[k]]; i < ex.sequence_offsets[order[k] + 1]; ++i) rows.push_back(i);
        if (rows.empty()) continue;
        grad.zero();
        const T loss = model.loss_and_gradient(ex, rows, &grad);
        if (!std::isfinite(static_cast<double>(loss)))
          throw ModelError("training loss became non-finite in epoch " + std::to_string(epoch) +
                           "; lower the learning rate");
        epoch_total += static_cast<double>(loss) * static_cast<double>(rows.size());
        model.adam_step(grad, m, v, ++step);
      }
      lg.epoch_loss.push_back(epoch_total / static_cast<double>(ex.size()));
      lg.epoch_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    }
    return model;
  }

  /// Adam with beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8 and bias correction.
  void adam_step(Params& grad, Params& m, Params& v, std::uint64_t step) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const T lr = static_cast<T>(hp_.learning_rate);
    auto update = [&](auto& param, auto& g, auto& mm, auto& vv) {
      mm.array() = T(beta1) * mm.array() + T(1 - beta1) * g.array();
      vv.array() = T(beta2) * vv.array() + T(1 - beta2) * g.array().square();
      param.array() -= lr * (mm.array() / T(c1)) / ((vv.array() / T(c2)).sqrt() + T(eps));
      if (!param.allFinite()) throw ModelError("non-finite weight after update; lower the learning rate");
    };
    update(p_.embedding, grad.embedding, m.embedding, v.embedding);
    update(p_.w1, grad.w1, m.w1, v.w1);
    update(p_.b1, grad.b1, m.b1, v.b1);
    update(p_.w2, grad.w2, m.w2, v.w2);
    update(p_.b2, grad.b2, m.b2, v.b2);
  }

 private:
  Vocabulary vocab_;
  LmHyperparams hp_;
  Params p_;
};

struct SamplingOptions {
  double temperature = 1.0;
  int top_k = 0;  // 0 = whole vocabulary
};

namespace detail {

inline int argmax_token(const std::vector<float>& logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace detail

/// Autoregressive decoding for any model exposing vocab(), window() and
/// logits(). `pick` chooses the next id from the logits. The body stops at
/// EOS or after L positions, after which EOS is appended.
template <typename Model, typename Pick>
TokenSequence decode_with(const Model& model, int class_id, Pick&& pick) {
  const auto& vocab = model.vocab();
  TokenSequence seq;
  seq.ids.assign(static_cast<std::size_t>(vocab.sequence_length()), Vocabulary::kPad);
  seq.ids[0] = vocab.class_token(class_id);
  std::vector<int> ctx(static_cast<std::size_t>(model.window()));
  std::vector<float> logits;
  int t = 1;
  for (; t <= vocab.length(); ++t) {
    context_window(seq.ids, t, model.window(), ctx);
    model.logits(ctx, logits);
    const int next = pick(logits);
    seq.ids[static_cast<std::size_t>(t)] = next;
    if (next == Vocabulary::kEos) break;
  }
  if (t > vocab.length()) seq.ids[static_cast<std::size_t>(vocab.length() + 1)] = Vocabulary::kEos;
  return seq;
}

/// Argmax decoding; ties resolve to the smallest token id.
template <typename Model>
TokenSequence greedy_decode(const Model& model, int class_id) {
  return decode_with(model, class_id, [](const std::vector<float>& z) { return detail::argmax_token(z); });
}

/// Temperature-scaled top-k sampling.
template <typename Model>
TokenSequence lm_sample_one(const Model& model, int class_id, Rng& rng, const SamplingOptions& opt) {
  const int v = model.vocab().size();
  const int k = opt.top_k <= 0 ? v : opt.top_k;
  if (!(opt.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (k < 1 || k > v) throw ConfigError("top_k must lie in [1, vocab]");
  std::vector<int> cand;
  std::vector<double> weights;
  return decode_with(model, class_id, [&](const std::vector<float>& z) {
    cand.resize(static_cast<std::size_t>(v));
    std::iota(cand.begin(), cand.end(), 0);
    if (k < v) {
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), [&](int a, int b) {
        return z[static_cast<std::size_t>(a)] > z[static_cast<std::size_t>(b)] ||
               (z[static_cast<std::size_t>(a)] == z[static_cast<std::size_t>(b)] && a < b);
      });
      cand.resize(static_cast<std::size_t>(k));
      std::sort(cand.begin(), cand.end());
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (int c : cand) mx = std::max(mx, static_cast<double>(z[static_cast<std::size_t>(c)]));
    weights.resize(cand.size());
    double total = 0.0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      weights[i] = std::exp((static_cast<double>(z[static_cast<std::size_t>(cand[i])]) - mx) / opt.temperature);
      total += weights[i];
    }
    return cand[rng.categorical(std::span<const double>(weights), total)];
  });
}

template <typename Model>
std::vector<TokenSequence> lm_sample(const Model& model, int class_id, std::size_t count, std::uint64_t seed,
                                     const SamplingOptions& opt = {}, unsigned threads = 1) {
  (void)model.vocab().class_token(class_id);
  std::vector<TokenSequence> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(class_id), i));
    out[i] = lm_sample_one(model, class_id, rng, opt);
  });
  return out;
}

}  // namespace tfx
