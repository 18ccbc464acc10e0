#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "tfx/generators/generator.hpp"
#include "tfx/generators/import.hpp"

using namespace tfx;
using tfx::testkit::tm;

namespace {

Corpus repeated(const std::vector<int>& data, std::size_t copies, int label = 0, int classes = 1) {
  Corpus c{testkit::space_of(classes), {}, Provenance::real};
  for (std::size_t i = 0; i < copies; ++i) c.samples.push_back(tm(data, label));
  return c;
}

Corpus random_corpus(std::uint64_t seed, int classes, std::size_t n, int pl_max = 1460) {
  Rng rng(seed);
  Corpus c{testkit::space_of(classes, 10, pl_max), {}, Provenance::real};
  for (std::size_t i = 0; i < n; ++i) c.samples.push_back(testkit::random_matrix(rng, 10, pl_max, classes));
  for (int k = 0; k < classes; ++k) c.samples.push_back(tm({1}, k, 10, pl_max));
  return c;
}

LmHyperparams micro_hp() {
  LmHyperparams hp;
  hp.embed_dim = 3;
  hp.window = 3;
  hp.hidden = 4;
  return hp;
}

}  // namespace

// ---- Markov ----

TEST(Markov, LaplaceSmoothedProbability) {
  const auto c = repeated({5}, 1);
  const Vocabulary v(c.space);
  const double alpha = 0.5;
  const auto g = MarkovGenerator::fit(c, v, {1, alpha});
  const double V = 2 * 1460 + 1;
  EXPECT_DOUBLE_EQ(g.probability(0, {v.class_token(0)}, v.token_of_value(5)), (1 + alpha) / (1 + alpha * V));
  EXPECT_DOUBLE_EQ(g.probability(0, {v.class_token(0)}, v.token_of_value(6)), alpha / (1 + alpha * V));
  EXPECT_DOUBLE_EQ(g.probability(0, {v.token_of_value(5)}, Vocabulary::kEos), (1 + alpha) / (1 + alpha * V));
  EXPECT_DOUBLE_EQ(g.probability(0, {v.token_of_value(9)}, Vocabulary::kEos), 1 / V);
  EXPECT_EQ(g.probability(0, {v.class_token(0)}, Vocabulary::kPad), 0.0);
}

TEST(Markov, RowsSumToOne) {
  const auto c = random_corpus(1, 2, 200, 30);
  const Vocabulary v(c.space);
  const auto g = MarkovGenerator::fit(c, v, {2, 1e-3});
  for (int k = 0; k < 2; ++k)
    for (const auto& [ctx, row] : g.tables()[static_cast<std::size_t>(k)]) {
      double s = g.probability(k, ctx, Vocabulary::kEos);
      for (int x = -30; x <= 30; ++x)
        if (x != 0) s += g.probability(k, ctx, v.token_of_value(x));
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Markov, CountsMatchBruteForceRecount) {
  const auto c = random_corpus(2, 3, 300, 20);
  const Vocabulary v(c.space);
  const int k = 2;
  const auto g = MarkovGenerator::fit(c, v, {k, 1e-6});
  // recount directly from the matrices: context = k previous tokens
  std::vector<std::map<std::vector<int>, std::map<int, std::uint32_t>>> want(3);
  for (const auto& m : c.samples) {
    std::vector<int> toks{v.class_token(m.label())};
    for (int i = 0; i < m.effective_length(); ++i) toks.push_back(v.token_of_value(m.values()[static_cast<std::size_t>(i)]));
    toks.push_back(Vocabulary::kEos);
    for (std::size_t t = 1; t < toks.size(); ++t) {
      std::vector<int> ctx;
      for (int j = k; j >= 1; --j) ctx.push_back(static_cast<int>(t) - j < 0 ? 0 : toks[t - static_cast<std::size_t>(j)]);
      ++want[static_cast<std::size_t>(m.label())][ctx][toks[t]];
    }
  }
  for (std::size_t cl = 0; cl < 3; ++cl) {
    ASSERT_EQ(g.tables()[cl].size(), want[cl].size());
    for (const auto& [ctx, nexts] : want[cl]) {
      const auto& row = g.tables()[cl].at(ctx);
      std::uint64_t total = 0;
      for (auto [tok, n] : nexts) {
        ASSERT_EQ(row.count_of(tok), n);
        total += n;
      }
      ASSERT_EQ(row.total, total);
    }
  }
}

TEST(Markov, HeavySmoothingIsUniform) {
  const auto c = random_corpus(3, 1, 100);
  const Vocabulary v(c.space);
  const auto g = MarkovGenerator::fit(c, v, {2, 1e12});
  const auto ctx = g.initial_context(0);
  for (int x : {-1460, -3, 7, 1460}) EXPECT_NEAR(g.probability(0, ctx, v.token_of_value(x)), 1.0 / 2921, 1e-12);
}

TEST(Markov, DeterministicChainReproducedExactly) {
  const auto c = repeated({10, -20, 30}, 100);
  const Vocabulary v(c.space);
  const auto g = MarkovGenerator::fit(c, v, {2, 1e-12});
  const auto want = matrix_to_tokens(c.samples[0], v);
  for (const auto& s : g.sample(0, 1000, 4)) ASSERT_EQ(s, want);
}

TEST(Markov, SamplesDependOnlyOnSeedAndIndex) {
  const auto c = random_corpus(4, 2, 400);
  const Vocabulary v(c.space);
  const auto g = MarkovGenerator::fit(c, v, {2, 1e-6});
  const auto a = g.sample(1, 300, 77, 1);
  EXPECT_EQ(a, g.sample(1, 300, 77, 8));
  const auto prefix = g.sample(1, 100, 77, 3);
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), a.begin()));
  EXPECT_NE(a, g.sample(1, 300, 78, 1));
  for (const auto& s : a) ASSERT_TRUE(is_well_formed(s, v));
}

TEST(Markov, RecoversKnownChain) {
  // values {1,2,3}; first value uniform, then a fixed transition matrix, 10 steps
  const double p[3][3] = {{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}, {0.3, 0.3, 0.4}};
  Rng rng(5);
  Corpus c{testkit::space_of(1), {}, Provenance::real};
  for (int n = 0; n < 5000; ++n) {
    std::vector<int> x{1 + static_cast<int>(rng.below(3))};
    while (x.size() < 10) {
      const double u = rng.uniform();
      const auto& row = p[x.back() - 1];
      x.push_back(u < row[0] ? 1 : u < row[0] + row[1] ? 2 : 3);
    }
    c.samples.push_back(tm(x));
  }
  const Vocabulary v(c.space);
  const auto g = MarkovGenerator::fit(c, v, {1, 1e-9});
  for (int a = 1; a <= 3; ++a) {
    double row_total = 0;
    for (int b = 1; b <= 3; ++b) row_total += g.probability(0, {v.token_of_value(a)}, v.token_of_value(b));
    for (int b = 1; b <= 3; ++b)
      EXPECT_NEAR(g.probability(0, {v.token_of_value(a)}, v.token_of_value(b)) / row_total, p[a - 1][b - 1], 0.02);
  }
}

TEST(Markov, RejectsBadHyperparamsAndEmptyClass) {
  const auto c = repeated({1}, 3, 0, 2);
  const Vocabulary v(c.space);
  EXPECT_THROW(MarkovGenerator::fit(c, v, {0, 1e-6}), ConfigError);
  EXPECT_THROW(MarkovGenerator::fit(c, v, {2, 0.0}), ConfigError);
  EXPECT_THROW(MarkovGenerator::fit(c, v, {2, 1e-6}), DataError);
}

// ---- language model ----

TEST(TinyLm, DefaultParameterBudget) {
  const LmHyperparams hp;
  EXPECT_EQ(lm_parameter_count(2927, hp), 1'497'775u);
  EXPECT_GE(lm_parameter_count(2927, hp), 1'000'000u);
  EXPECT_LE(lm_parameter_count(2927, hp), 2'000'000u);
  LmHyperparams big = hp;
  big.hidden = 1000;
  EXPECT_THROW(TinyCausalLm<float>::fit(repeated({1}, 1), Vocabulary(1460, 1), big, 1), ConfigError);
}

TEST(TinyLm, GradientMatchesCentralDifferences) {
  const Vocabulary v(3, 2, 4);
  TinyCausalLm<double> m(v, micro_hp());
  m.initialize(11);
  std::vector<TokenSequence> seqs;
  for (auto d : {std::vector<int>{3, -2, 1}, {-3}, {1, 2, 3, -1}})
    seqs.push_back(matrix_to_tokens(TrafficMatrix::from_data(d, 4, static_cast<int>(d.size() % 2), 3), v));
  const auto ex = make_lm_examples(seqs, 3);
  std::vector<std::size_t> rows(ex.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TinyCausalLm<double>::Params grad;
  grad.set_zero_like(m.params());
  m.loss_and_gradient(ex, rows, &grad);

  std::vector<double> analytic;
  grad.for_each([&](const char*, double* data, Eigen::Index n) { analytic.insert(analytic.end(), data, data + n); });
  std::size_t k = 0;
  double worst = 0;
  m.params().for_each([&](const char*, double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i, ++k) {
      const double saved = data[i], h = 1e-6;
      data[i] = saved + h;
      const double up = m.loss_and_gradient(ex, rows, nullptr);
      data[i] = saved - h;
      const double down = m.loss_and_gradient(ex, rows, nullptr);
      data[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(analytic[k]));
      if (scale > 1e-7) worst = std::max(worst, std::abs(numeric - analytic[k]) / scale);
    }
  });
  EXPECT_EQ(k, analytic.size());
  EXPECT_LT(worst, 1e-4);
}

TEST(TinyLm, InitialLossNearLogVocab) {
  const auto c = random_corpus(6, 5, 200);
  LmHyperparams hp;
  hp.epochs = 0;
  LmFitLog log;
  (void)TinyCausalLm<float>::fit(c, Vocabulary(c.space), hp, 3, &log);
  EXPECT_NEAR(log.initial_loss / std::log(2927.0), 1.0, 0.02);
}

TEST(TinyLm, LossDecreasesOverEarlyEpochs) {
  Corpus c{testkit::space_of(2), {}, Provenance::real};
  for (int i = 0; i < 256; ++i) c.samples.push_back(tm({100 + i % 4, -200, 300}, i % 2));
  LmHyperparams hp;
  hp.epochs = 5;
  hp.hidden = 64;
  LmFitLog log;
  (void)TinyCausalLm<float>::fit(c, Vocabulary(c.space), hp, 3, &log);
  ASSERT_EQ(log.epoch_loss.size(), 5u);
  EXPECT_LT(log.epoch_loss.front(), log.initial_loss);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(log.epoch_loss[e], log.epoch_loss[e - 1]);
}

TEST(TinyLm, MemorizesSingleSequence) {
  const auto c = repeated({1200, -40, 40, -1460, 7}, 1);
  LmHyperparams hp;
  hp.epochs = 200;
  const auto m = TinyCausalLm<float>::fit(c, Vocabulary(c.space), hp, 9);
  EXPECT_EQ(greedy_decode(m, 0), matrix_to_tokens(c.samples[0], m.vocab()));
}

TEST(TinyLm, TopOneSamplingIsGreedy) {
  const Vocabulary v(1460, 3);
  TinyCausalLm<float> m(v, LmHyperparams{});
  m.initialize(5);
  Rng rng(1);
  for (int cl = 0; cl < 3; ++cl)
    EXPECT_EQ(lm_sample_one(m, cl, rng, {0.7, 1}), greedy_decode(m, cl));
  EXPECT_THROW(lm_sample_one(m, 0, rng, {0.0, 1}), ConfigError);
  EXPECT_THROW(lm_sample_one(m, 0, rng, {1.0, 3000}), ConfigError);
}

TEST(TinyLm, ClassConditioningSeparatesSupports) {
  Corpus c{testkit::space_of(2), {}, Provenance::real};
  for (int i = 0; i < 64; ++i) {
    c.samples.push_back(tm({100, 100 + i % 3, -50}, 0));
    c.samples.push_back(tm({-900, 900 - i % 3}, 1));
  }
  LmHyperparams hp;
  hp.epochs = 150;
  hp.hidden = 64;
  const auto m = TinyCausalLm<float>::fit(c, Vocabulary(c.space), hp, 2);
  const auto s0 = decode_tokens(greedy_decode(m, 0), m.vocab());
  const auto s1 = decode_tokens(greedy_decode(m, 1), m.vocab());
  ASSERT_TRUE(s0.matrix && s1.matrix);
  EXPECT_EQ(s0.matrix->values()[0], 100);
  EXPECT_EQ(s1.matrix->values()[0], -900);
}

// ---- int8 ----

TEST(Quantize, HandScaledTensor) {
  const std::vector<float> w{-1.27f, 0.0f, 1.27f};
  const auto q = quantize_tensor(w, 1, 3);
  EXPECT_FLOAT_EQ(q.scale, 0.01f);
  EXPECT_EQ(q.values, (std::vector<std::int8_t>{-127, 0, 127}));
  const auto z = quantize_tensor(std::vector<float>(4, 0.0f), 2, 2);
  EXPECT_EQ(z.scale, 1.0f);
}

TEST(Quantize, ErrorWithinHalfStep) {
  Rng rng(12);
  std::vector<float> w(5000);
  for (auto& x : w) x = static_cast<float>(rng.normal() * 0.3);
  const auto q = quantize_tensor(w, 50, 100);
  const auto back = dequantize_tensor(q);
  for (std::size_t i = 0; i < w.size(); ++i) ASSERT_LE(std::abs(back[i] - w[i]), q.scale / 2 * (1 + 1e-5f));
}

TEST(Quantize, RequantizingIsIdempotent) {
  TinyCausalLm<float> m(Vocabulary(40, 2), micro_hp());
  m.initialize(3);
  const auto q1 = quantize_weights_int8(m);
  const auto q2 = quantize_weights_int8(q1);
  EXPECT_EQ(q1.w1().values, q2.w1().values);
  EXPECT_EQ(q1.w2().values, q2.w2().values);
  EXPECT_EQ(q1.embedding().values, q2.embedding().values);
  EXPECT_FLOAT_EQ(q1.w2().scale, q2.w2().scale);
}

TEST(Quantize, InferenceMatchesDequantizedFloatModel) {
  TinyCausalLm<float> m(Vocabulary(1460, 2), LmHyperparams{});
  m.initialize(8);
  const auto q = quantize_weights_int8(m);
  const auto deq = dequantize_model(q);
  std::vector<int> ctx(11, Vocabulary::kPad);
  ctx.back() = 2;
  std::vector<float> a, b;
  q.logits(ctx, a);
  deq.logits(ctx, b);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-4);
  std::vector<TokenSequence> prompts{greedy_decode(m, 0), greedy_decode(m, 1)};
  EXPECT_DOUBLE_EQ(argmax_agreement(q, deq, prompts), 1.0);
}

TEST(Quantize, ModelFileShrinksToAQuarter) {
  TinyCausalLm<float> m(Vocabulary(1460, 5), LmHyperparams{});
  m.initialize(8);
  std::ostringstream f, i8;
  Generator(m).save(f);
  Generator(quantize_weights_int8(m)).save(i8);
  EXPECT_LE(static_cast<double>(i8.str().size()), static_cast<double>(f.str().size()) / 3.0);
}

// ---- external import ----

TEST(Import, RoundTripsTokenFile) {
  const auto c = random_corpus(20, 3, 100);
  const Vocabulary v(c.space);
  std::vector<TokenSequence> seqs;
  for (const auto& m : c.samples) seqs.push_back(matrix_to_tokens(m, v));
  std::stringstream s;
  write_token_file(s, v, seqs);
  ImportReport rep;
  const auto back = import_external(s, c.space, &rep);
  EXPECT_EQ(back.samples, c.samples);
  EXPECT_EQ(rep.accepted, c.samples.size());
  EXPECT_EQ(rep.rejected, 0u);
  EXPECT_EQ(back.provenance, Provenance::synthetic);
}

TEST(Import, CountsRejectedAndRepaired) {
  const auto space = testkit::space_of(2);
  const Vocabulary v(space);
  std::vector<TokenSequence> seqs{{{2, v.token_of_value(5), 99999, 1, 0, 0, 0, 0, 0, 0, 0, 0}},
                                  {{3, v.token_of_value(5), 2, 1, 0, 0, 0, 0, 0, 0, 0, 0}},
                                  {{3, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}};
  std::stringstream s;
  write_token_file(s, v, seqs);
  ImportReport rep;
  const auto out = import_external(s, space, &rep);
  EXPECT_EQ(rep.lines, 3u);
  EXPECT_EQ(rep.accepted, 1u);
  EXPECT_EQ(rep.repaired, 1u);
  EXPECT_EQ(rep.rejected, 2u);
  ASSERT_EQ(out.samples.size(), 1u);
  EXPECT_EQ(out.samples[0], tm({5}, 1));
}

TEST(Import, VocabularyMismatchIsNamed) {
  const Vocabulary other(1460, 2, 12);
  std::stringstream s;
  write_token_file(s, other, {});
  try {
    (void)import_external(s, testkit::space_of(2), nullptr);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("L 12 != 10"), std::string::npos) << e.what();
  }
}

// ---- model files ----

TEST(ModelFile, MarkovRoundTripSamplesIdentically) {
  const auto c = random_corpus(30, 2, 300);
  GeneratorConfig cfg;
  const auto g = fit_generator(c, cfg, 1);
  std::stringstream s;
  g.save(s);
  const auto back = Generator::load(s);
  EXPECT_EQ(back.kind(), GeneratorKind::markov);
  EXPECT_EQ(back.label_names(), c.space.names());
  EXPECT_EQ(back.sample(1, 200, 5), g.sample(1, 200, 5));
}

TEST(ModelFile, LmRoundTripIsBitExact) {
  TinyCausalLm<float> m(Vocabulary(50, 2), micro_hp());
  m.initialize(4);
  for (const Generator& g : {Generator(m), Generator(quantize_weights_int8(m))}) {
    std::stringstream s;
    g.save(s);
    const auto text = s.str();
    const auto back = Generator::load(s);
    std::stringstream again;
    back.save(again);
    EXPECT_EQ(again.str(), text);
    EXPECT_EQ(back.sample(0, 20, 3), g.sample(0, 20, 3));
  }
}

TEST(ModelFile, CorruptFilesRaiseModelError) {
  std::istringstream junk("NOPE");
  EXPECT_THROW(Generator::load(junk), ModelError);
  const auto dir = testkit::scratch_dir("modelfile");
  {
    std::ofstream(dir / "short.tfxm", std::ios::binary) << "TFXM";
  }
  EXPECT_THROW(Generator::load_file((dir / "short.tfxm").string()), ModelError);
  EXPECT_THROW(Generator::load_file((dir / "missing.tfxm").string()), ModelError);
}

TEST(GenerateCorpus, ExactCountsAndVocabularyCheck) {
  const auto c = random_corpus(31, 3, 300);
  const auto g = fit_generator(c, {}, 1);
  GenerationStats st;
  const auto out = generate_corpus(g, c.space, {0, 2}, 50, 9, {}, 1, &st);
  const auto counts = out.class_counts();
  EXPECT_EQ(counts, (std::vector<std::size_t>{50, 0, 50}));
  EXPECT_EQ(st.emitted, 100u);
  EXPECT_EQ(out.samples, generate_corpus(g, c.space, {0, 2}, 50, 9, {}, 4).samples);
  EXPECT_THROW(generate_corpus(g, testkit::space_of(4), {0}, 1, 1), ModelError);
}
