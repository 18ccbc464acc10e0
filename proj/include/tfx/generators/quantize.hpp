#pragma once
// Weight-only int8 post-training quantization of the tiny causal LM:
// one symmetric scale per weight tensor, biases stay float32, and inference
// dequantizes weights on the fly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tfx/generators/tiny_lm.hpp"

namespace tfx {

struct QuantizedTensor {
  int rows = 0;
  int cols = 0;
  float scale = 1.0f;
  std::vector<std::int8_t> values;  // row-major

  float at(int r, int c) const {
    return scale * static_cast<float>(values[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                                             static_cast<std::size_t>(c)]);
  }
};

/// s = max|w| / 127, q = round(w / s); an all-zero tensor gets s = 1.
inline QuantizedTensor quantize_tensor(std::span<const float> w, int rows, int cols) {
  QuantizedTensor q;
  q.rows = rows;
  q.cols = cols;
  float max_abs = 0.0f;
  for (float x : w) max_abs = std::max(max_abs, std::abs(x));
  q.scale = max_abs > 0.0f ? max_abs / 127.0f : 1.0f;
  q.values.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    q.values[i] = static_cast<std::int8_t>(std::clamp(std::lround(w[i] / q.scale), -127L, 127L));
  return q;
}

inline std::vector<float> dequantize_tensor(const QuantizedTensor& q) {
  std::vector<float> out(q.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = q.scale * static_cast<float>(q.values[i]);
  return out;
}

class QuantizedLm {
 public:
  QuantizedLm() = default;
  QuantizedLm(Vocabulary vocab, LmHyperparams hp, QuantizedTensor embedding, QuantizedTensor w1,
              std::vector<float> b1, QuantizedTensor w2, std::vector<float> b2)
      : vocab_(vocab), hp_(hp), embedding_(std::move(embedding)), w1_(std::move(w1)), b1_(std::move(b1)),
        w2_(std::move(w2)), b2_(std::move(b2)) {}

  const Vocabulary& vocab() const { return vocab_; }
  const LmHyperparams& hyperparams() const { return hp_; }
  int window() const { return hp_.window; }
  std::size_t parameter_count() const { return lm_parameter_count(vocab_.size(), hp_); }
  const QuantizedTensor& embedding() const { return embedding_; }
  const QuantizedTensor& w1() const { return w1_; }
  const QuantizedTensor& w2() const { return w2_; }
  const std::vector<float>& b1() const { return b1_; }
  const std::vector<float>& b2() const { return b2_; }

  void logits(std::span<const int> context, std::vector<float>& out) const {
    const int d = hp_.embed_dim;
    const int h = hp_.hidden;
    const int v = vocab_.size();
    std::vector<float> x(static_cast<std::size_t>(hp_.window * d));
    for (int s = 0; s < hp_.window; ++s)
      for (int k = 0; k < d; ++k)
        x[static_cast<std::size_t>(s * d + k)] = embedding_.at(context[static_cast<std::size_t>(s)], k);
    std::vector<float> acc(static_cast<std::size_t>(h), 0.0f);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const float xj = x[j];
      const std::int8_t* row = w1_.values.data() + j * static_cast<std::size_t>(h);
      for (int k = 0; k < h; ++k) acc[static_cast<std::size_t>(k)] += xj * static_cast<float>(row[k]);
    }
    for (int k = 0; k < h; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      acc[uk] = std::max(0.0f, acc[uk] * w1_.scale + b1_[uk]);
    }
    out.assign(static_cast<std::size_t>(v), 0.0f);
    for (int j = 0; j < h; ++j) {
      const float hj = acc[static_cast<std::size_t>(j)];
      if (hj == 0.0f) continue;
      const std::int8_t* row = w2_.values.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(v);
      for (int k = 0; k < v; ++k) out[static_cast<std::size_t>(k)] += hj * static_cast<float>(row[k]);
    }
    for (int k = 0; k < v; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      out[uk] = out[uk] * w2_.scale + b2_[uk];
    }
  }

 private:
  Vocabulary vocab_;
  LmHyperparams hp_;
  QuantizedTensor embedding_;
  QuantizedTensor w1_;
  std::vector<float> b1_;
  QuantizedTensor w2_;
  std::vector<float> b2_;
};

inline QuantizedLm quantize_weights_int8(const TinyCausalLm<float>& model) {
  const auto& p = model.params();
  auto q = [](const auto& m) {
    return quantize_tensor(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())),
                           static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  };
  return QuantizedLm(model.vocab(), model.hyperparams(), q(p.embedding), q(p.w1),
                     std::vector<float>(p.b1.data(), p.b1.data() + p.b1.size()), q(p.w2),
                     std::vector<float>(p.b2.data(), p.b2.data() + p.b2.size()));
}

/// Requantizing a quantized model leaves its stored weights unchanged.
inline QuantizedLm quantize_weights_int8(const QuantizedLm& model) {
  auto requant = [](const QuantizedTensor& t) {
    const auto w = dequantize_tensor(t);
    return quantize_tensor(w, t.rows, t.cols);
  };
  return QuantizedLm(model.vocab(), model.hyperparams(), requant(model.embedding()), requant(model.w1()),
                     model.b1(), requant(model.w2()), model.b2());
}

/// Float model with the dequantized weights; used to compare decisions.
inline TinyCausalLm<float> dequantize_model(const QuantizedLm& q) {
  TinyCausalLm<float> m(q.vocab(), q.hyperparams());
  auto& p = m.params();
  auto fill = [](auto& dst, const QuantizedTensor& t) {
    const auto w = dequantize_tensor(t);
    std::copy(w.begin(), w.end(), dst.data());
  };
  fill(p.embedding, q.embedding());
  fill(p.w1, q.w1());
  fill(p.w2, q.w2());
  std::copy(q.b1().begin(), q.b1().end(), p.b1.data());
  std::copy(q.b2().begin(), q.b2().end(), p.b2.data());
  return m;
}

/// Fraction of next-token argmax decisions on which two models agree, over
/// every non-PAD prefix of the given sequences.
template <typename ModelA, typename ModelB>
double argmax_agreement(const ModelA& a, const ModelB& b, const std::vector<TokenSequence>& prompts) {
  std::vector<int> ctx(static_cast<std::size_t>(a.window()));
  std::vector<float> za, zb;
  std::size_t agree = 0, total = 0;
  for (const auto& s : prompts)
    for (int t = 1; t < static_cast<int>(s.ids.size()); ++t) {
      if (s.ids[static_cast<std::size_t>(t)] == Vocabulary::kPad) break;
      context_window(s.ids, t, a.window(), ctx);
      a.logits(ctx, za);
      b.logits(ctx, zb);
      agree += detail::argmax_token(za) == detail::argmax_token(zb);
      ++total;
    }
  return total ? static_cast<double>(agree) / static_cast<double>(total) : 1.0;
}

}  // namespace tfx
