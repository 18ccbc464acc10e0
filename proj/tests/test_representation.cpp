#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "test_util.hpp"
#include "tfx/gasf.hpp"
#include "tfx/representation.hpp"

using namespace tfx;
using tfx::testkit::tm;

namespace {

// Independent restatement of the token layout formula.
int t_of(int v, int n = 5, int pl_max = 1460) { return v < 0 ? 2 + n + (v + pl_max) : 2 + n + pl_max + (v - 1); }

}  // namespace

TEST(Vocabulary, LayoutFormula) {
  const Vocabulary v(1460, 5);
  EXPECT_EQ(v.size(), 2927);
  EXPECT_EQ(v.token_of_value(-1460), 7);
  EXPECT_EQ(v.token_of_value(-1), 1466);
  EXPECT_EQ(v.token_of_value(1), 1467);
  EXPECT_EQ(v.token_of_value(300), 1766);
  EXPECT_EQ(v.token_of_value(50), 1516);
  EXPECT_EQ(v.token_of_value(1460), 2926);
  EXPECT_EQ(Vocabulary(1460, 40).size(), 2 * 1460 + 40 + 2);
  EXPECT_THROW(v.token_of_value(0), DataError);
  EXPECT_THROW(v.token_of_value(1461), DataError);
}

TEST(Vocabulary, BijectionOverDomain) {
  const Vocabulary v(1460, 5);
  for (int x = -1460; x <= 1460; ++x) {
    if (x == 0) continue;
    const int id = v.token_of_value(x);
    ASSERT_EQ(id, t_of(x));
    ASSERT_TRUE(v.is_value(id));
    ASSERT_EQ(v.value_of_token(id), x);
  }
  for (int c = 0; c < 5; ++c) {
    EXPECT_TRUE(v.is_class(v.class_token(c)));
    EXPECT_EQ(v.class_of(v.class_token(c)), c);
  }
  EXPECT_FALSE(v.is_value(Vocabulary::kPad));
  EXPECT_FALSE(v.is_value(Vocabulary::kEos));
}

TEST(Tokens, LayoutOfShortMatrix) {
  const Vocabulary v(1460, 5);
  const auto seq = matrix_to_tokens(tm({300, -1460, 50}), v);
  EXPECT_EQ(seq.ids, (std::vector<int>{2, 1766, 7, 1516, 1, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_TRUE(is_well_formed(seq, v));
}

TEST(Tokens, FullLengthHasEosAtEleven) {
  const Vocabulary v(1460, 5);
  const auto seq = matrix_to_tokens(tm({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 4), v);
  ASSERT_EQ(seq.ids.size(), 12u);
  EXPECT_EQ(seq.ids[0], 6);
  EXPECT_EQ(seq.ids[11], Vocabulary::kEos);
  EXPECT_EQ(std::count(seq.ids.begin(), seq.ids.end(), Vocabulary::kPad), 0);
}

TEST(Tokens, RoundTripFuzz) {
  const Vocabulary v(1460, 5);
  Rng rng(99);
  for (int i = 0; i < 20000; ++i) {
    const auto m = testkit::random_matrix(rng, 10, 1460, 5);
    const auto seq = matrix_to_tokens(m, v);
    ASSERT_TRUE(is_well_formed(seq, v));
    const auto d = decode_tokens(seq, v);
    ASSERT_EQ(d.status, DecodedSample::Status::ok);
    ASSERT_EQ(*d.matrix, m);
  }
}

TEST(Tokens, RepairStopsAtStrayClass) {
  const Vocabulary v(1460, 5);
  TokenSequence seq{{2, t_of(100), 3, t_of(5), 1, 0, 0, 0, 0, 0, 0, 0}};
  const auto d = decode_tokens(seq, v);
  EXPECT_EQ(d.status, DecodedSample::Status::repaired);
  EXPECT_EQ(d.matrix->values(), (std::vector<int>{100, 0, 0, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(d.matrix->effective_length(), 1);
}

TEST(Tokens, RepairOnPadAndOverlongBody) {
  const Vocabulary v(1460, 5);
  TokenSequence pad{{2, t_of(7), 0, t_of(9), 1, 0, 0, 0, 0, 0, 0, 0}};
  EXPECT_EQ(tokens_to_matrix(pad, v).effective_length(), 1);
  TokenSequence longer{std::vector<int>(14, t_of(3))};
  longer.ids[0] = 2;
  const auto d = decode_tokens(longer, v);
  EXPECT_EQ(d.status, DecodedSample::Status::repaired);
  EXPECT_EQ(d.matrix->effective_length(), 10);
  TokenSequence garbage_after{{2, t_of(7), 1, t_of(9), 0, 0, 0, 0, 0, 0, 0, 0}};
  EXPECT_EQ(decode_tokens(garbage_after, v).status, DecodedSample::Status::repaired);
}

TEST(Tokens, EmptyBodyIsRejected) {
  const Vocabulary v(1460, 5);
  EXPECT_THROW(tokens_to_matrix({{2, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}, v), RejectedSample);
  EXPECT_THROW(tokens_to_matrix({{t_of(4), 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}}, v), RejectedSample);
  EXPECT_THROW(tokens_to_matrix({{2, 99999, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0}}, v), RejectedSample);
}

TEST(TokenFile, RoundTrip) {
  const Vocabulary v(1460, 5);
  Rng rng(3);
  std::vector<TokenSequence> seqs;
  for (int i = 0; i < 200; ++i) seqs.push_back(matrix_to_tokens(testkit::random_matrix(rng, 10, 1460, 5), v));
  std::stringstream s;
  write_token_file(s, v, seqs);
  const auto f = read_token_file(s);
  EXPECT_EQ(f.vocab, v);
  EXPECT_EQ(f.sequences, seqs);
  EXPECT_EQ(f.unparsable_lines, 0u);
}

TEST(Gasf, HandEvaluatedTwoByTwo) {
  // x = [0, 1] -> phi = [pi/2, 0]; pixels cos(phi_i + phi_j).
  GasfImage img;
  img.length = 2;
  const double phi[2] = {std::numbers::pi / 2, 0.0};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) img.pixels.push_back(std::cos(phi[i] + phi[j]));
  EXPECT_NEAR(img.at(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(img.at(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(img.at(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(img.at(1, 1), 1.0, 1e-15);
  // The encoder reaches x = 1 exactly at +pl_max and x = 0 at padding.
  const auto enc = matrix_to_gasf(TrafficMatrix::from_values({1460, 0}, 0, 1460), 1460);
  EXPECT_NEAR(enc.at(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(enc.at(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(enc.at(1, 1), -1.0, 1e-12);
}

TEST(Gasf, NormalizationFormula) {
  const int pl = 1460;
  const double eps = 1.0 / (4.0 * pl);
  for (int v : {-1460, -1, 1, 300, 1460})
    EXPECT_NEAR(gasf_normalize(v, pl), eps + (v + pl) * (1 - eps) / (2.0 * pl), 1e-15);
  double prev = -1.0;
  for (int v = -pl; v <= pl; ++v) {
    if (v == 0) continue;
    const double x = gasf_normalize(v, pl);
    ASSERT_GT(x, prev);
    ASSERT_GT(x, 0.0);
    ASSERT_LE(x, 1.0);
    prev = x;
  }
}

TEST(Gasf, SymmetricWithPaddingDiagonal) {
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    const auto m = testkit::random_matrix(rng, 10, 1460, 2);
    const auto img = matrix_to_gasf(m, 1460);
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) ASSERT_EQ(img.at(i, j), img.at(j, i));
      if (i >= m.effective_length()) {
        ASSERT_NEAR(img.at(i, i), -1.0, 1e-12);
      }
      ASSERT_GE(img.at(i, i), -1.0);
      ASSERT_LE(img.at(i, i), 1.0);
    }
  }
}

TEST(Gasf, ExactInverseWithoutRefinement) {
  Rng rng(6);
  for (int k = 0; k < 5000; ++k) {
    const auto m = testkit::random_matrix(rng, 10, 1460, 3);
    ASSERT_EQ(gasf_to_matrix(matrix_to_gasf(m, 1460), 1460, 0), m);
  }
  for (int v = -1460; v <= 1460; ++v) {
    if (v == 0) continue;
    const auto m = tm({v, -v, v});
    ASSERT_EQ(gasf_to_matrix(matrix_to_gasf(m, 1460), 1460, 0), m) << v;
  }
}

TEST(Gasf, ExactInverseWithRefinement) {
  Rng rng(7);
  for (int k = 0; k < 500; ++k) {
    const auto m = testkit::random_matrix(rng, 10, 1460, 3);
    ASSERT_EQ(gasf_to_matrix(matrix_to_gasf(m, 1460), 1460, 5), m);
  }
}

// Holds for full-length matrices. With padding present, a padded position and
// the -pl_max level differ by only eps * x_j in each off-diagonal pixel, which
// is below this noise amplitude whenever the data values are small.
TEST(Gasf, QuarterLevelNoiseRecoveredOnFullLengthMatrices) {
  const int pl = 1460;
  const double amp = 0.25 * gasf_level_step(pl);
  Rng rng(8);
  for (int k = 0; k < 500; ++k) {
    std::vector<int> v(10);
    for (auto& x : v) {
      x = static_cast<int>(rng.below(2 * pl)) - pl;
      if (x >= 0) ++x;
    }
    const auto m = TrafficMatrix::from_values(v, 0, pl);
    auto img = matrix_to_gasf(m, pl);
    for (auto& p : img.pixels) p += (2.0 * rng.uniform() - 1.0) * amp;
    ASSERT_EQ(gasf_to_matrix(img, pl, 5), m) << "trial " << k;
  }
}

TEST(Gasf, RefinementNeverIncreasesObjective) {
  Rng rng(9);
  for (int k = 0; k < 50; ++k) {
    const auto m = testkit::random_matrix(rng, 10, 1460, 2);
    auto img = matrix_to_gasf(m, 1460);
    for (auto& p : img.pixels) p = std::clamp(p + (rng.uniform() - 0.5) * 0.2, -1.0, 1.0);
    std::vector<double> phi(10);
    for (int i = 0; i < 10; ++i) phi[static_cast<std::size_t>(i)] = std::acos(std::sqrt((img.at(i, i) + 1) / 2));
    const auto trace = refine_gasf_angles(img, phi, 6);
    ASSERT_FALSE(trace.empty());
    for (std::size_t r = 1; r < trace.size(); ++r) ASSERT_LE(trace[r], trace[r - 1] + 1e-12);
  }
}

TEST(Gasf, PaddingAtPositionZeroIsRejected) {
  GasfImage img{3, 0, std::vector<double>(9, -1.0)};
  EXPECT_THROW(gasf_to_matrix(img, 1460, 0), RejectedSample);
}

TEST(Gasf, DataAfterPaddingIsTruncatedAndCounted) {
  auto img = matrix_to_gasf(tm({100, 200, 300}), 1460);
  // make position 1 look like padding
  for (int j = 0; j < 10; ++j) {
    img.at(1, j) = -std::sin(std::acos(gasf_normalize(j == 1 ? 0 : 1, 1460)));
    img.at(j, 1) = img.at(1, j);
  }
  img.at(1, 1) = -1.0;
  const auto d = decode_gasf(img, 1460, 0);
  ASSERT_TRUE(d.matrix);
  EXPECT_EQ(d.matrix->effective_length(), 1);
  EXPECT_EQ(d.truncated_positions, 1);
}

TEST(GasfFile, RoundTripKeepsLabelsAndFloatPixels) {
  Rng rng(10);
  std::vector<GasfImage> imgs;
  for (int i = 0; i < 20; ++i) imgs.push_back(matrix_to_gasf(testkit::random_matrix(rng, 10, 1460, 4), 1460));
  for (std::size_t i = 0; i < imgs.size(); ++i) imgs[i].label = static_cast<int>(i % 4);
  std::stringstream s;
  write_gasf_file(s, imgs, 10);
  const auto back = read_gasf_file(s);
  ASSERT_EQ(back.size(), imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    EXPECT_EQ(back[i].label, imgs[i].label);
    for (std::size_t p = 0; p < imgs[i].pixels.size(); ++p)
      ASSERT_EQ(back[i].pixels[p], static_cast<double>(static_cast<float>(imgs[i].pixels[p])));
  }
}
