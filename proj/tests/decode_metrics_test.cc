// decode_metrics_test.cc

#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.h"
#include "wctcb/ctc.h"
#include "wctcb/decode.h"
#include "wctcb/metrics.h"

namespace wctcb {
namespace {

using testing::FromRows;

constexpr char kArpa[] = R"(\data\
ngram 1=4
ngram 2=2

\1-grams:
-99	<s>	-0.3
-1.0	a	-0.5
-0.5	b	-0.25
-0.7	</s>

\2-grams:
-0.2	a b
-0.1	<s> a

\end\
)";

NGramLM ParseArpa(const std::string &text) {
  std::istringstream in(text);
  return NGramLM::Parse(in);
}

TEST(NGramLMTest, LookupAndBackoff) {
  auto lm = ParseArpa(kArpa);
  EXPECT_EQ(lm.order(), 2);
  EXPECT_EQ(lm.count(1), 4u);
  std::vector<std::string> none, ctx_a = {"a"}, ctx_b = {"b"}, ctx_s = {"<s>"};
  EXPECT_EQ(lm.Log10Prob(none, "a"), -1.0);
  EXPECT_EQ(lm.Log10Prob(ctx_a, "b"), -0.2);
  EXPECT_EQ(lm.Log10Prob(ctx_s, "a"), -0.1);
  // Unseen bigrams: context back-off weight plus the unigram.
  EXPECT_DOUBLE_EQ(lm.Log10Prob(ctx_b, "a"), -0.25 + -1.0);
  EXPECT_DOUBLE_EQ(lm.Log10Prob(ctx_a, "</s>"), -0.5 + -0.7);
  EXPECT_DOUBLE_EQ(lm.Log10Prob(ctx_s, "b"), -0.3 + -0.5);
  // Unknown word, no <unk> entry.
  EXPECT_DOUBLE_EQ(lm.Log10Prob(ctx_a, "zz"), -0.5 + -10.0);
  // Older context words beyond the order are ignored.
  std::vector<std::string> long_ctx = {"b", "b", "a"};
  EXPECT_EQ(lm.Log10Prob(long_ctx, "b"), -0.2);
}

TEST(NGramLMTest, UnkEntryIsUsed) {
  auto lm = ParseArpa("\\data\\\nngram 1=2\n\n\\1-grams:\n-1\ta\n-3\t<unk>\n\n\\end\\\n");
  std::vector<std::string> none;
  EXPECT_EQ(lm.Log10Prob(none, "q"), -3.0);
  EXPECT_TRUE(lm.Contains("a"));
  EXPECT_FALSE(lm.Contains("q"));
}

TEST(NGramLMTest, RejectsMalformed) {
  EXPECT_THROW(ParseArpa("ngram 1=1\n"), FormatError);
  EXPECT_THROW(ParseArpa("\\data\\\nngram 1=2\n\n\\1-grams:\n-1\ta\n\n\\end\\\n"), FormatError);
  EXPECT_THROW(ParseArpa("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\ta\n"), FormatError);
  EXPECT_THROW(ParseArpa("\\data\\\nngram 2=1\n"), FormatError);
  EXPECT_THROW(ParseArpa("\\data\\\nngram 1=1\n\n\\1-grams:\n0.5\ta\n\n\\end\\\n"), FormatError);
  EXPECT_THROW(ParseArpa("\\data\\\nngram 1=1\n\n\\1-grams:\n-1\ta b\n\n\\end\\\n"), FormatError);
}

TEST(NGramLMTest, CanonicalRoundTrip) {
  // Unsorted input with extra spaces and redundant number formatting.
  auto lm = ParseArpa(
      "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.50  b\n-1.000   a   -0.25\n\n\\end\\\n");
  std::ostringstream first;
  lm.Write(first);
  auto again = ParseArpa(first.str());
  std::ostringstream second;
  again.Write(second);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(first.str(),
            "\\data\\\nngram 1=2\n\n\\1-grams:\n-1\ta\t-0.25\n-0.5\tb\n\n\\end\\\n");
}

// ---------------------------------------------------------------------------

TEST(BoostStateTest, AwardsBanksAndResets) {
  std::vector<Keyword> kws = {{"ab", {1, 2}}, {"abc", {1, 2, 3}}};
  auto trie = KeywordTrie::Build(kws);
  BoostState s;
  s = s.Advance(trie, 1);
  EXPECT_EQ(s.pending, 1);
  s = s.Advance(trie, 2);  // "ab" complete, "abc" still reachable
  EXPECT_EQ(s.pending, 0);
  EXPECT_EQ(s.awarded, 2);
  EXPECT_NE(s.node, KeywordTrie::kRoot);
  s = s.Advance(trie, 3);  // leaf: back to the root
  EXPECT_EQ(s.node, KeywordTrie::kRoot);
  EXPECT_EQ(s.net(), 3);
}

TEST(BoostStateTest, DeadMatchIsRetracted) {
  std::vector<Keyword> kws = {{"cd", {3, 4}}};
  auto trie = KeywordTrie::Build(kws);
  BoostState s;
  s = s.Advance(trie, 3).Advance(trie, 2);
  EXPECT_EQ(s.awarded, 1);
  EXPECT_EQ(s.retracted, 1);
  EXPECT_EQ(s.net(), 0);
  // A dying match restarts at the root with the current token.
  s = s.Advance(trie, 3).Advance(trie, 3).Advance(trie, 4);
  EXPECT_EQ(s.net(), 2);
  // Unfinished match at end of utterance.
  auto fin = BoostState{}.Advance(trie, 3).Finalize();
  EXPECT_EQ(fin.net(), 0);
  EXPECT_EQ(fin.retracted, 1);
}

TEST(BeamSearchTest, SortedAndDecomposed) {
  std::mt19937_64 rng(21);
  auto vocab = Vocabulary::FromTokens({"<blank>", "a", "b"});
  auto lm = ParseArpa(kArpa);
  std::vector<Keyword> kws = {{"ab", {1, 2}}};
  auto trie = KeywordTrie::Build(kws);
  DecodeConfig cfg{8, 0.5, 0.2, 3.0};
  for (int trial = 0; trial < 30; ++trial) {
    auto z = testing::RandomPosteriorgram(rng, 2 + rng() % 5, 3);
    auto hyps = BeamSearch(z, vocab, cfg, &lm, &trie);
    ASSERT_FALSE(hyps.empty());
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      const auto &h = hyps[i];
      EXPECT_DOUBLE_EQ(h.total, h.acoustic + h.lm + h.boost + h.length_terms);
      EXPECT_DOUBLE_EQ(h.length_terms, 0.2 * static_cast<double>(h.tokens.size()));
      EXPECT_DOUBLE_EQ(h.boost, 3.0 * (h.boost_awarded - h.boost_retracted));
      // Pruning can only drop alignment mass.
      EXPECT_LE(h.acoustic, -CtcLoss(z, h.tokens) + 1e-9);
      if (i > 0) EXPECT_GE(hyps[i - 1].total, h.total);
    }
  }
}

TEST(BeamSearchTest, WideBeamIsExact) {
  std::mt19937_64 rng(22);
  auto vocab = Vocabulary::FromTokens({"<blank>", "a", "b"});
  DecodeConfig cfg{1000, 0.0, 0.0, 0.0};
  for (int trial = 0; trial < 40; ++trial) {
    auto z = testing::RandomPosteriorgram(rng, 1 + rng() % 5, 3);
    auto exact = testing::BruteLabelPosteriors(z);
    auto hyps = BeamSearch(z, vocab, cfg);
    ASSERT_EQ(hyps.size(), exact.size());
    for (const auto &h : hyps) EXPECT_NEAR(std::exp(h.acoustic), exact.at(h.tokens), 1e-12);
  }
}

TEST(BeamSearchTest, NoFusionMeansAcousticRanking) {
  std::mt19937_64 rng(23);
  auto vocab = Vocabulary::FromTokens({"<blank>", "a", "b", "c"});
  auto lm = ParseArpa(kArpa);
  std::vector<Keyword> kws = {{"ab", {1, 2}}};
  auto trie = KeywordTrie::Build(kws);
  for (int trial = 0; trial < 20; ++trial) {
    auto z = testing::RandomPosteriorgram(rng, 6, 4);
    auto plain = BeamSearch(z, vocab, {5, 0.0, 0.0, 0.0});
    auto fused = BeamSearch(z, vocab, {5, 0.0, 0.0, 0.0}, &lm, &trie);
    ASSERT_EQ(plain.size(), fused.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
      EXPECT_EQ(plain[i].tokens, fused[i].tokens);
      EXPECT_EQ(plain[i].total, fused[i].total);
      EXPECT_EQ(plain[i].total, plain[i].acoustic);
    }
  }
}

// A beam wide enough to hold every prefix is exact, so it bounds every
// narrower beam from above.
TEST(BeamSearchTest, ExhaustiveBeamBoundsNarrowerBeams) {
  std::mt19937_64 rng(24);
  auto vocab = Vocabulary::FromTokens({"<blank>", "a", "b", "c"});
  for (int trial = 0; trial < 40; ++trial) {
    auto z = testing::RandomPosteriorgram(rng, 3 + rng() % 6, 4);
    const double exact = BeamSearch(z, vocab, {1u << 16, 0.0, 0.0, 0.0}).front().total;
    for (std::size_t beam : {1, 2, 4, 8, 64})
      EXPECT_LE(BeamSearch(z, vocab, {beam, 0.0, 0.0, 0.0}).front().total, exact + 1e-12)
          << "trial " << trial << " beam " << beam;
  }
}

// Widening the beam is not monotone: at beam 8 the best prefix "acab" is
// pruned midway by competitors that a beam of 4 never admits.
TEST(BeamSearchTest, WiderBeamCanLowerTopScore) {
  std::mt19937_64 rng(24);
  auto vocab = Vocabulary::FromTokens({"<blank>", "a", "b", "c"});
  Posteriorgram z;
  for (int trial = 0; trial <= 9; ++trial) z = testing::RandomPosteriorgram(rng, 3 + rng() % 6, 4);
  const TokenSequence acab = {1, 3, 1, 2};
  auto narrow = BeamSearch(z, vocab, {4, 0.0, 0.0, 0.0}).front();
  auto wider = BeamSearch(z, vocab, {8, 0.0, 0.0, 0.0}).front();
  auto exact = BeamSearch(z, vocab, {64, 0.0, 0.0, 0.0}).front();
  EXPECT_EQ(narrow.tokens, acab);
  EXPECT_EQ(exact.tokens, acab);
  EXPECT_NE(wider.tokens, acab);
  EXPECT_LT(wider.total, narrow.total);
  EXPECT_NEAR(exact.acoustic, -CtcLoss(z, acab), 1e-12);
}

TEST(BeamSearchTest, LanguageModelEntersInNaturalLog) {
  auto vocab = Vocabulary::FromTokens({"<blank>", "a", "b"});
  auto lm = ParseArpa(kArpa);
  auto z = testing::OneHotRows({1, 2}, 3);
  auto hyps = BeamSearch(z, vocab, {4, 0.5, 0.0, 0.0}, &lm);
  ASSERT_EQ(hyps.size(), 1u);
  EXPECT_EQ(hyps[0].tokens, (TokenSequence{1, 2}));
  // p(a|<s>) p(b|a) p(</s>|b) = -0.1 - 0.2 + (-0.25 - 0.7) in log10.
  EXPECT_NEAR(hyps[0].lm, 0.5 * std::numbers::ln10 * (-0.1 - 0.2 - 0.95), 1e-12);
}

TEST(BeamSearchTest, RejectsBadConfig) {
  auto vocab = Vocabulary::FromTokens({"<blank>", "a"});
  auto z = testing::Uniform(2, 2);
  EXPECT_THROW(BeamSearch(z, vocab, {0, 0.5, 0.2, 0.0}), InvalidArgument);
  EXPECT_THROW(BeamSearch(testing::Uniform(2, 3), vocab, {}), InvalidArgument);
}

// ---------------------------------------------------------------------------

TokenSequence Ids(std::string_view s) {
  TokenSequence out;
  for (char ch : s) out.push_back(static_cast<TokenId>(ch));
  return out;
}

TEST(MetricsTest, CerExamples) {
  EXPECT_EQ(Cer(Ids("abc"), Ids("abc")), 0.0);
  EXPECT_EQ(Cer(Ids("abc"), Ids("axc")), 1.0 / 3.0);
  EXPECT_EQ(Cer(Ids("ab"), Ids("ba")), 1.0);
  EXPECT_EQ(EditDistance(Ids("kitten"), Ids("sitting")), 3u);
  EXPECT_EQ(EditDistance(Ids(""), Ids("abc")), 3u);
  EXPECT_THROW(Cer(Ids(""), Ids("a")), InvalidArgument);
}

TEST(MetricsTest, EditDistanceIsAMetric) {
  std::mt19937_64 rng(31);
  auto random = [&] {
    TokenSequence s(rng() % 7);
    for (auto &x : s) x = static_cast<TokenId>(rng() % 3);
    return s;
  };
  for (int trial = 0; trial < 300; ++trial) {
    auto x = random(), y = random(), w = random();
    EXPECT_EQ(EditDistance(x, x), 0u);
    EXPECT_EQ(EditDistance(x, y), EditDistance(y, x));
    EXPECT_LE(EditDistance(x, w), EditDistance(x, y) + EditDistance(y, w));
  }
}

TEST(MetricsTest, CountsNonOverlapping) {
  EXPECT_EQ(CountOccurrences(Ids("aaaa"), Ids("aa")), 2u);
  EXPECT_EQ(CountOccurrences(Ids("aaa"), Ids("aa")), 1u);
  EXPECT_EQ(CountOccurrences(Ids("abcab"), Ids("ab")), 2u);
  EXPECT_EQ(CountOccurrences(Ids("abc"), Ids("")), 0u);
}

TEST(MetricsTest, F1Examples) {
  std::vector<Keyword> kw = {{"ka", Ids("ka")}};
  const bool oov[] = {true};
  std::vector<TokenSequence> refs = {Ids("xkax")}, same = {Ids("xkax")}, miss = {Ids("xkbx")};
  auto hit = KeywordF1(refs, same, kw, oov);
  EXPECT_EQ(hit.f1_oov, 1.0);
  EXPECT_FALSE(hit.f1_iv.has_value());
  EXPECT_EQ(hit.keywords.at("ka").tp, 1u);
  auto lost = KeywordF1(refs, miss, kw, oov);
  EXPECT_EQ(lost.f1_oov, 0.0);
  EXPECT_EQ(lost.keywords.at("ka").fn, 1u);
  EXPECT_EQ(lost.edits, 1u);
  EXPECT_EQ(lost.cer, 0.25);
}

TEST(MetricsTest, HalfPrecisionHalfRecall) {
  std::vector<Keyword> kw = {{"ka", Ids("ka")}};
  const bool oov[] = {false};
  std::vector<TokenSequence> refs = {Ids("kaxx"), Ids("yyka"), Ids("zzzz")};
  std::vector<TokenSequence> hyps = {Ids("kaxx"), Ids("yykb"), Ids("zzka")};
  auto r = KeywordF1(refs, hyps, kw, oov);
  const auto &c = r.keywords.at("ka");
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(r.f1_iv, 0.5);
  EXPECT_FALSE(r.f1_oov.has_value());
  EXPECT_EQ(r.edits, 3u);
  EXPECT_EQ(r.ref_length, 12u);
  EXPECT_EQ(r.cer, 0.25);
}

TEST(MetricsTest, RejectsMismatchedLengths) {
  std::vector<TokenSequence> one = {Ids("a")}, two = {Ids("a"), Ids("b")};
  EXPECT_THROW(KeywordF1(one, two, {}, {}), InvalidArgument);
  EXPECT_EQ(F1(0, 0, 0), std::nullopt);
}

}  // namespace
}  // namespace wctcb
