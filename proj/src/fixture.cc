// fixture.cc

#include "wctcb/fixture.h"

#include <algorithm>
#include <random>
#include <string>

namespace wctcb {

namespace {

// Everything that ends up in a float32 blob is rounded first so that a
// fixture behaves the same in memory and after a save/load cycle.
void RoundToFloat(Matrix &m) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(m.data()[i]);
}

Matrix ScaledIdentity(std::size_t n, double scale) {
  Matrix m = Matrix::Identity(n, n) * scale;
  RoundToFloat(m);
  return m;
}

bool ContainsAt(const TokenSequence &seq, const TokenSequence &pat, std::size_t at) {
  return at + pat.size() <= seq.size() &&
         std::equal(pat.begin(), pat.end(), seq.begin() + at);
}

std::size_t CountMatches(const TokenSequence &seq, const TokenSequence &pat) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + pat.size() <= seq.size(); ++i)
    if (ContainsAt(seq, pat, i)) ++n;
  return n;
}

}  // namespace

Vocabulary LetterVocabulary() {
  std::vector<std::string> tokens = {std::string(kBlankToken)};
  for (char c = 'a'; c <= 'z'; ++c) tokens.emplace_back(1, c);
  return Vocabulary::FromTokens(std::move(tokens));
}

RecoveryFixture SynthesizeRecoveryFixture(const Vocabulary &vocab,
                                          TokenSequence reference,
                                          std::size_t keyword_offset,
                                          TokenSequence corruption,
                                          const RecoveryFixtureOptions &opts,
                                          std::uint64_t seed) {
  const std::size_t K = vocab.size();
  if (opts.num_layers < 2) throw InvalidArgument("fixture needs at least two layers");
  if (corruption.empty() || keyword_offset + corruption.size() > reference.size())
    throw InvalidArgument("keyword span outside the reference");
  for (TokenId id : reference)
    if (id <= kBlankId || static_cast<std::size_t>(id) >= K)
      throw InvalidArgument("reference token outside the vocabulary");
  for (std::size_t i = 0; i < corruption.size(); ++i) {
    const TokenId c = corruption[i];
    if (c <= kBlankId || static_cast<std::size_t>(c) >= K)
      throw InvalidArgument("corruption token outside the vocabulary");
    if (c == reference[keyword_offset + i])
      throw InvalidArgument("corruption must differ from the keyword token");
  }

  RecoveryFixture fx;
  fx.vocab = vocab;
  fx.reference = std::move(reference);
  fx.keyword_offset = keyword_offset;
  fx.corruption = std::move(corruption);
  const auto kw_begin = fx.reference.begin() + static_cast<std::ptrdiff_t>(keyword_offset);
  fx.keyword.ids.assign(kw_begin, kw_begin + static_cast<std::ptrdiff_t>(fx.corruption.size()));
  fx.keyword.surface = vocab.Detokenize(fx.keyword.ids);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  // Leading blank, then (token, blank) per reference token.
  const std::size_t T = 1 + 2 * fx.reference.size();
  fx.features = Matrix::Zero(T, K);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k) fx.features(t, k) = opts.feature_noise * noise(rng);
  for (std::size_t t = 0; t < T; t += 2) fx.features(t, kBlankId) += opts.blank_logit;
  for (std::size_t i = 0; i < fx.reference.size(); ++i) {
    const std::size_t t = 1 + 2 * i;
    const TokenId tok = fx.reference[i];
    if (i >= keyword_offset && i < keyword_offset + fx.corruption.size()) {
      fx.features(t, fx.corruption[i - keyword_offset]) += opts.token_logit;
      fx.features(t, tok) += opts.token_logit - opts.confusion_margin;
    } else {
      fx.features(t, tok) += opts.token_logit;
    }
  }
  RoundToFloat(fx.features);
  fx.keyword_first_frame = 1 + 2 * keyword_offset;
  fx.keyword_last_frame = 1 + 2 * (keyword_offset + fx.corruption.size() - 1);

  std::vector<EncoderLayer> layers;
  for (int n = 1; n <= opts.num_layers; ++n) {
    EncoderLayer l;
    l.transform = Matrix(K, K);
    for (Eigen::Index i = 0; i < l.transform.size(); ++i)
      l.transform.data()[i] = opts.transform_scale * noise(rng);
    RoundToFloat(l.transform);
    l.offset = RowVector::Zero(K);
    const bool last = n == opts.num_layers;
    l.head = ScaledIdentity(K, last ? opts.final_head_scale : opts.intermediate_head_scale);
    l.cond = ScaledIdentity(K, opts.cond_gain);
    l.cond_offset = RowVector::Zero(K);
    layers.push_back(std::move(l));
  }
  std::set<int> selfcond;
  for (int n = 1; n < opts.num_layers; ++n) selfcond.insert(n);
  fx.model = LayerStack(K, K, std::move(layers), std::move(selfcond));
  return fx;
}

RecoveryFixture RandomRecoveryFixture(const Vocabulary &vocab,
                                      const RecoveryFixtureOptions &opts,
                                      std::uint64_t seed) {
  if (vocab.size() < 3) throw InvalidArgument("fixture vocabulary too small");
  if (opts.min_keyword < 1 || opts.min_keyword > opts.max_keyword ||
      opts.max_keyword > opts.min_length || opts.min_length > opts.max_length)
    throw InvalidArgument("inconsistent fixture length options");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> token(1, static_cast<TokenId>(vocab.size() - 1));
  std::uniform_int_distribution<std::size_t> length(opts.min_length, opts.max_length);
  std::uniform_int_distribution<std::size_t> kw_length(opts.min_keyword, opts.max_keyword);

  for (;;) {
    const std::size_t L = length(rng);
    const std::size_t m = kw_length(rng);
    TokenSequence ref(L);
    for (auto &id : ref) id = token(rng);
    const std::size_t offset =
        std::uniform_int_distribution<std::size_t>(0, L - m)(rng);
    TokenSequence kw(ref.begin() + static_cast<std::ptrdiff_t>(offset),
                     ref.begin() + static_cast<std::ptrdiff_t>(offset + m));
    if (CountMatches(ref, kw) != 1) continue;
    TokenSequence corruption(m);
    for (std::size_t i = 0; i < m; ++i) {
      do {
        corruption[i] = token(rng);
      } while (corruption[i] == kw[i]);
    }
    return SynthesizeRecoveryFixture(vocab, std::move(ref), offset,
                                     std::move(corruption), opts, rng());
  }
}

}  // namespace wctcb
