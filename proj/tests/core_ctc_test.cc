// core_ctc_test.cc

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "wctcb/core.h"
#include "wctcb/ctc.h"

namespace wctcb {
namespace {

using testing::BruteCtcMax;
using testing::BruteCtcProb;
using testing::FromRows;
using testing::OneHotRows;
using testing::Uniform;

constexpr TokenId e = 0, a = 1, b = 2;

std::filesystem::path TempPath(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / "wctcb_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void WriteBytes(const std::filesystem::path &p, const std::string &bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string ReadBytes(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Vocabulary AbVocab() { return Vocabulary::FromTokens({"<blank>", "a", "b"}); }

TEST(LogNumerics, LogAddHandlesNegativeInfinity) {
  EXPECT_EQ(LogAdd(kLogZero, kLogZero), kLogZero);
  EXPECT_DOUBLE_EQ(LogAdd(kLogZero, -2.0), -2.0);
  EXPECT_NEAR(LogAdd(std::log(0.25), std::log(0.5)), std::log(0.75), 1e-15);
  EXPECT_NEAR(LogAdd(-1000.0, -1000.0), -1000.0 + std::numbers::ln2, 1e-12);
}

TEST(LogNumerics, LogSumExpEmptyIsMinusInfinity) {
  EXPECT_EQ(LogSumExp({}), kLogZero);
  std::vector<double> v = {std::log(0.1), std::log(0.2), std::log(0.3)};
  EXPECT_NEAR(LogSumExp(v), std::log(0.6), 1e-15);
}

TEST(VocabularyTest, RejectsMissingBlankAndDuplicates) {
  EXPECT_THROW(Vocabulary::FromTokens({"a", "<blank>"}), FormatError);
  EXPECT_THROW(Vocabulary::FromTokens({"<blank>", "a", "a"}), FormatError);
  EXPECT_THROW(Vocabulary::FromTokens({"<blank>", ""}), FormatError);
}

TEST(VocabularyTest, SaveLoadRoundTrip) {
  auto v = Vocabulary::FromTokens({"<blank>", "ch", "c", "h"});
  auto p = TempPath("vocab.txt");
  v.Save(p);
  auto w = Vocabulary::Load(p);
  EXPECT_EQ(w.tokens(), v.tokens());
  EXPECT_EQ(w.max_token_bytes(), 2u);
  EXPECT_EQ(*w.Find("h"), 3);
  EXPECT_FALSE(w.Find("x").has_value());
}

TEST(TokenizeKeywordTest, GreedyLongestMatch) {
  auto v = Vocabulary::FromTokens({"<blank>", "c", "ch", "h", "a"});
  auto kw = TokenizeKeyword("chach", v);
  EXPECT_EQ(kw.ids, (TokenSequence{2, 4, 2}));
  EXPECT_EQ(kw.surface, "chach");
}

TEST(TokenizeKeywordTest, ReportsUnmatchablePosition) {
  auto v = AbVocab();
  try {
    TokenizeKeyword("abx", v);
    FAIL() << "expected FormatError";
  } catch (const FormatError &err) {
    EXPECT_NE(std::string(err.what()).find("position 2"), std::string::npos) << err.what();
  }
  EXPECT_THROW(TokenizeKeyword("", v), FormatError);
}

TEST(TokenizeKeywordTest, MultiByteTokens) {
  auto v = Vocabulary::FromTokens({"<blank>", "忠", "犬", "ハチ", "公"});
  auto kw = TokenizeKeyword("忠犬ハチ公", v);
  EXPECT_EQ(kw.ids, (TokenSequence{1, 2, 3, 4}));
  EXPECT_EQ(v.Detokenize(kw.ids), "忠犬ハチ公");
}

TEST(KeywordFile, SkipsCommentsAndTags) {
  auto p = TempPath("kw.txt");
  WriteBytes(p, "# list\nab\tOOV\n\nba\r\n");
  EXPECT_EQ(LoadKeywordSurfaces(p), (std::vector<std::string>{"ab", "ba"}));
}

TEST(PosteriorgramTest, ValidatesRows) {
  EXPECT_THROW(FromRows({{0.5, 0.6}}), FormatError);
  EXPECT_THROW(FromRows({{1.0}}), FormatError);
  EXPECT_THROW(FromRows({{1.5, -0.5}}), FormatError);
  EXPECT_THROW(FromRows({{std::nan(""), 1.0}}), FormatError);
  EXPECT_THROW(Posteriorgram::FromMatrix(Matrix(0, 3)), FormatError);
  auto z = FromRows({{0.25, 0.75}});
  EXPECT_EQ(z.log_prob(0, 0), std::log(0.25));
  auto zero = FromRows({{1.0, 0.0}});
  EXPECT_EQ(zero.log_prob(0, 1), kLogZero);
}

TEST(PosteriorgramFile, RoundTripIsByteIdentical) {
  std::mt19937_64 rng(3);
  auto z = testing::RandomPosteriorgram(rng, 7, 5);
  // Stored as float32, so round first to compare values exactly.
  Matrix m = z.raw().cast<float>().cast<double>();
  auto zf = Posteriorgram::FromMatrix(m);
  auto p1 = TempPath("z1.pgm"), p2 = TempPath("z2.pgm");
  SavePosteriorgram(zf, p1);
  auto back = LoadPosteriorgram(p1);
  EXPECT_EQ(back.raw(), zf.raw());
  SavePosteriorgram(back, p2);
  EXPECT_EQ(ReadBytes(p1), ReadBytes(p2));
  EXPECT_EQ(ReadBytes(p1).size(), 12u + 7 * 5 * 4);
}

TEST(PosteriorgramFile, RejectsMalformedFiles) {
  auto p = TempPath("bad.pgm");
  auto header = [](std::uint32_t T, std::uint32_t K) {
    std::ostringstream s;
    s << "PGM1";
    WriteU32(s, T);
    WriteU32(s, K);
    return s.str();
  };
  auto floats = [](std::vector<float> v) {
    std::ostringstream s;
    WriteFloat32(s, v);
    return s.str();
  };

  WriteBytes(p, "PGM2" + header(1, 2).substr(4) + floats({0.5f, 0.5f}));
  EXPECT_THROW(LoadPosteriorgram(p), FormatError);
  WriteBytes(p, header(2, 2) + floats({0.5f, 0.5f}));
  EXPECT_THROW(LoadPosteriorgram(p), FormatError);
  WriteBytes(p, header(1, 2) + floats({0.5f, 0.5f, 0.0f}));
  EXPECT_THROW(LoadPosteriorgram(p), FormatError);
  WriteBytes(p, header(0, 2));
  EXPECT_THROW(LoadPosteriorgram(p), FormatError);
  WriteBytes(p, header(1, 2) + floats({0.5f, 0.6f}));
  EXPECT_THROW(LoadPosteriorgram(p), FormatError);
  WriteBytes(p, header(1, 2) + floats({0.25f, 0.75f}));
  EXPECT_EQ(LoadPosteriorgram(p).prob(0, 1), 0.75);
}

// ---------------------------------------------------------------------------

TEST(CollapseTest, Examples) {
  EXPECT_EQ(Collapse(std::vector<TokenId>{a, a, e, b}), (TokenSequence{a, b}));
  EXPECT_EQ(Collapse(std::vector<TokenId>{a, e, a}), (TokenSequence{a, a}));
  EXPECT_EQ(Collapse(std::vector<TokenId>{e, e, e}), TokenSequence{});
}

TEST(GreedyDecodeTest, Examples) {
  EXPECT_EQ(GreedyDecode(OneHotRows({a, a, e, b}, 3)), (TokenSequence{a, b}));
  EXPECT_EQ(GreedyDecode(OneHotRows({e, e}, 3)), TokenSequence{});
  EXPECT_EQ(GreedyDecode(FromRows({{0.0, 0.6, 0.4}, {0.0, 0.4, 0.6}})), (TokenSequence{a, b}));
  // Ties resolve to the smaller index.
  EXPECT_EQ(ArgmaxPath(Uniform(2, 3)), (AlignmentPath{e, e}));
}

TEST(CtcLossTest, Examples) {
  EXPECT_EQ(CtcLoss(OneHotRows({a}, 3), TokenSequence{a}), 0.0);
  EXPECT_NEAR(CtcLoss(Uniform(2, 3), TokenSequence{a}), std::log(3.0), 1e-12);
  EXPECT_EQ(CtcLoss(Uniform(1, 3), TokenSequence{a, b}), std::numeric_limits<double>::infinity());
  EXPECT_EQ(CtcLoss(Uniform(2, 3), TokenSequence{a, a}), std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isfinite(CtcLoss(Uniform(3, 3), TokenSequence{a, a})));
}

TEST(CtcLossTest, EmptyLabelIsAllBlank) {
  auto z = FromRows({{0.5, 0.5, 0.0}, {0.25, 0.25, 0.5}});
  EXPECT_NEAR(CtcLoss(z, TokenSequence{}), -std::log(0.125), 1e-12);
}

TEST(MinFramesForTest, CountsRepeatBlanks) {
  EXPECT_EQ(MinFramesFor(TokenSequence{}), 0u);
  EXPECT_EQ(MinFramesFor(TokenSequence{a, b}), 2u);
  EXPECT_EQ(MinFramesFor(TokenSequence{a, a, a}), 5u);
}

TEST(ViterbiAlignTest, Examples) {
  EXPECT_EQ(ViterbiAlign(OneHotRows({e, a, e}, 3), TokenSequence{a}), (AlignmentPath{e, a, e}));
  EXPECT_EQ(ViterbiAlign(Uniform(2, 3), TokenSequence{a}), (AlignmentPath{a, e}));
  auto z = FromRows({{0.1, 0.9, 0.0}, {0.9, 0.1, 0.0}});
  EXPECT_EQ(ViterbiAlign(z, TokenSequence{a}), (AlignmentPath{a, e}));
  EXPECT_THROW(ViterbiAlign(Uniform(1, 3), TokenSequence{a, b}), InvalidArgument);
  EXPECT_THROW(ViterbiAlign(OneHotRows({e, e}, 3), TokenSequence{a}), InvalidArgument);
}

TEST(IntermediateLossMixTest, Examples) {
  std::mt19937_64 rng(11);
  auto fin = testing::RandomPosteriorgram(rng, 4, 3);
  auto z1 = testing::RandomPosteriorgram(rng, 4, 3);
  auto z2 = testing::RandomPosteriorgram(rng, 4, 3);
  TokenSequence y = {a, b};
  const double lf = CtcLoss(fin, y), l1 = CtcLoss(z1, y), l2 = CtcLoss(z2, y);

  EXPECT_EQ(IntermediateLossMix(fin, {{1, z1}}, y, {0.0, {1}}), lf);
  EXPECT_NEAR(IntermediateLossMix(fin, {{3, fin}}, y, {1.0, {3}}), lf, 1e-12);
  EXPECT_NEAR(IntermediateLossMix(fin, {{1, z1}, {2, z2}}, y, {0.5, {1, 2}}),
              0.5 * lf + 0.25 * (l1 + l2), 1e-12);
  EXPECT_THROW(IntermediateLossMix(fin, {{1, z1}}, y, {0.5, {1, 2}}), InvalidArgument);
}

TEST(IntermediateLossMixTest, LambdaOneIgnoresInfeasibleFinal) {
  auto fin = OneHotRows({e, e}, 3);
  auto z1 = Uniform(2, 3);
  TokenSequence y = {a};
  EXPECT_NEAR(IntermediateLossMix(fin, {{1, z1}}, y, {1.0, {1}}), std::log(3.0), 1e-12);
}

// ---------------------------------------------------------------------------
// Properties against path enumeration.

TEST(CtcProperty, LossMatchesEnumeration) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t T = 1 + rng() % 5, K = 2 + rng() % 3, L = rng() % 4;
    auto z = testing::RandomPosteriorgram(rng, T, K, trial % 3 == 0 ? 0.0 : 0.01);
    auto y = testing::RandomLabels(rng, L, K);
    const double brute = BruteCtcProb(z, y);
    EXPECT_NEAR(std::exp(-CtcLoss(z, y)), brute, 1e-9) << "trial " << trial;
    if (brute > 0.0) {
      auto path = ViterbiAlign(z, y);
      EXPECT_EQ(Collapse(path), y);
      EXPECT_NEAR(std::exp(PathLogScore(z, path)), BruteCtcMax(z, y), 1e-12);
    }
  }
}

TEST(CtcProperty, ViterbiTieBreakAdvancesEarliest) {
  // Uniform rows: all feasible paths tie, so the chosen one emits each label
  // as early as possible and pads with trailing blanks or repeats.
  auto path = ViterbiAlign(Uniform(5, 3), TokenSequence{a, b});
  EXPECT_EQ(path, (AlignmentPath{a, b, e, e, e}));
  auto rep = ViterbiAlign(Uniform(4, 3), TokenSequence{a, a});
  EXPECT_EQ(rep, (AlignmentPath{a, e, a, e}));
}

TEST(CtcProperty, GreedyIsArgmaxCollapse) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto z = testing::RandomPosteriorgram(rng, 1 + rng() % 8, 2 + rng() % 4);
    AlignmentPath manual;
    for (std::size_t t = 0; t < z.num_frames(); ++t) {
      Eigen::Index k;
      z.probs().row(static_cast<Eigen::Index>(t)).maxCoeff(&k);
      manual.push_back(static_cast<TokenId>(k));
    }
    EXPECT_EQ(GreedyDecode(z), testing::OracleCollapse(manual));
  }
}

}  // namespace
}  // namespace wctcb
