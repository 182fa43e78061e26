// decode.cc

#include "wctcb/decode.h"

#include <algorithm>
#include <numbers>

namespace wctcb {

KeywordTrie KeywordTrie::Build(std::span<const Keyword> keywords) {
  KeywordTrie trie;
  trie.nodes_.emplace_back();
  for (const Keyword &kw : keywords) {
    if (kw.ids.empty()) throw InvalidArgument("empty keyword in trie");
    int node = kRoot;
    for (TokenId id : kw.ids) {
      auto it = trie.nodes_[node].children.find(id);
      if (it == trie.nodes_[node].children.end()) {
        const int child = static_cast<int>(trie.nodes_.size());
        const int depth = trie.nodes_[node].depth + 1;
        trie.nodes_[node].children.emplace(id, child);
        trie.nodes_.push_back(Node{{}, depth, false});
        node = child;
      } else {
        node = it->second;
      }
    }
    trie.nodes_[node].terminal = true;
  }
  return trie;
}

std::optional<int> KeywordTrie::Child(int node, TokenId token) const {
  const auto &children = nodes_.at(node).children;
  auto it = children.find(token);
  if (it == children.end()) return std::nullopt;
  return it->second;
}

BoostState BoostState::Advance(const KeywordTrie &trie, TokenId token) const {
  BoostState s = *this;
  auto child = trie.Child(s.node, token);
  if (!child && s.node != KeywordTrie::kRoot) {
    // The partial match dies: take back what was not yet banked and try the
    // token as the start of a new match.
    s.retracted += s.pending;
    s.pending = 0;
    s.node = KeywordTrie::kRoot;
    child = trie.Child(s.node, token);
  }
  if (!child) return s;
  s.node = *child;
  ++s.pending;
  ++s.awarded;
  if (trie.terminal(s.node)) {
    s.pending = 0;
    if (!trie.has_children(s.node)) s.node = KeywordTrie::kRoot;
  }
  return s;
}

BoostState BoostState::Finalize() const {
  BoostState s = *this;
  s.retracted += s.pending;
  s.pending = 0;
  s.node = KeywordTrie::kRoot;
  return s;
}

namespace {

struct PrefixScores {
  double blank = kLogZero;
  double nonblank = kLogZero;
  // Prefix-level terms, weighted. They depend on the prefix only.
  double lm = 0.0;
  double length_terms = 0.0;
  BoostState boost;

  double acoustic() const { return LogAdd(blank, nonblank); }
};

class Fusion {
 public:
  Fusion(const Vocabulary &vocab, const DecodeConfig &cfg, const NGramLM *lm,
         const KeywordTrie *trie)
      : vocab_(vocab), cfg_(cfg), lm_(lm), trie_(trie) {}

  double Bonus(const PrefixScores &p) const {
    return p.lm + p.length_terms + cfg_.kbbs_weight * p.boost.net();
  }

  // Terms for emitting `token` after `prefix`.
  void Extend(const TokenSequence &prefix, TokenId token, const PrefixScores &parent,
              PrefixScores &child) const {
    child.lm = parent.lm;
    if (lm_ && cfg_.lm_weight != 0.0)
      child.lm += cfg_.lm_weight * LmLogProb(prefix, vocab_.token(token));
    child.length_terms = parent.length_terms + cfg_.length_penalty;
    child.boost = trie_ ? parent.boost.Advance(*trie_, token) : parent.boost;
  }

  double EndOfSentence(const TokenSequence &prefix) const {
    if (!lm_ || cfg_.lm_weight == 0.0 || !lm_->Contains("</s>")) return 0.0;
    return cfg_.lm_weight * LmLogProb(prefix, "</s>");
  }

 private:
  double LmLogProb(const TokenSequence &prefix, const std::string &word) const {
    const std::size_t keep = static_cast<std::size_t>(std::max(lm_->order() - 1, 0));
    std::vector<std::string> ctx;
    if (prefix.size() < keep) ctx.push_back("<s>");
    const std::size_t from = prefix.size() > keep ? prefix.size() - keep : 0;
    for (std::size_t i = from; i < prefix.size(); ++i) ctx.push_back(vocab_.token(prefix[i]));
    return lm_->Log10Prob(ctx, word) * std::numbers::ln10;
  }

  const Vocabulary &vocab_;
  const DecodeConfig &cfg_;
  const NGramLM *lm_;
  const KeywordTrie *trie_;
};

bool RankBefore(double score_a, const TokenSequence &a, double score_b,
                const TokenSequence &b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

}  // namespace

std::vector<ScoredHypothesis> BeamSearch(const Posteriorgram &z, const Vocabulary &vocab,
                                         const DecodeConfig &cfg, const NGramLM *lm,
                                         const KeywordTrie *trie) {
  if (cfg.beam_size < 1) throw InvalidArgument("beam size must be at least 1");
  if (!std::isfinite(cfg.lm_weight) || !std::isfinite(cfg.length_penalty) ||
      !std::isfinite(cfg.kbbs_weight))
    throw InvalidArgument("decode weights must be finite");
  if (z.num_tokens() != vocab.size())
    throw InvalidArgument("posteriorgram width does not match the vocabulary");

  const Fusion fusion(vocab, cfg, lm, trie);
  std::map<TokenSequence, PrefixScores> beam;
  beam[{}].blank = 0.0;

  const std::size_t K = z.num_tokens();
  for (std::size_t t = 0; t < z.num_frames(); ++t) {
    std::map<TokenSequence, PrefixScores> next;
    auto slot = [&](const TokenSequence &prefix, const PrefixScores &like) -> PrefixScores & {
      auto [it, inserted] = next.try_emplace(prefix);
      if (inserted) {
        it->second.lm = like.lm;
        it->second.length_terms = like.length_terms;
        it->second.boost = like.boost;
      }
      return it->second;
    };

    for (const auto &[prefix, p] : beam) {
      const double total = p.acoustic();
      PrefixScores &stay = slot(prefix, p);
      stay.blank = LogAdd(stay.blank, total + z.log_prob(t, kBlankId));

      for (std::size_t k = 1; k < K; ++k) {
        const double lp = z.log_prob(t, static_cast<TokenId>(k));
        if (lp == kLogZero) continue;
        const TokenId c = static_cast<TokenId>(k);
        TokenSequence extended = prefix;
        extended.push_back(c);
        auto [it, inserted] = next.try_emplace(extended);
        if (inserted) fusion.Extend(prefix, c, p, it->second);
        PrefixScores &ext = it->second;
        if (!prefix.empty() && prefix.back() == c) {
          // A repeat only extends the prefix across a blank.
          PrefixScores &same = slot(prefix, p);
          same.nonblank = LogAdd(same.nonblank, p.nonblank + lp);
          ext.nonblank = LogAdd(ext.nonblank, p.blank + lp);
        } else {
          ext.nonblank = LogAdd(ext.nonblank, total + lp);
        }
      }
    }

    std::vector<std::pair<double, const TokenSequence *>> ranked;
    ranked.reserve(next.size());
    for (const auto &[prefix, p] : next) {
      const double score = p.acoustic() + fusion.Bonus(p);
      if (score == kLogZero) continue;
      ranked.emplace_back(score, &prefix);
    }
    const std::size_t keep = std::min(cfg.beam_size, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                      ranked.end(), [](const auto &a, const auto &b) {
                        return RankBefore(a.first, *a.second, b.first, *b.second);
                      });
    std::map<TokenSequence, PrefixScores> pruned;
    for (std::size_t i = 0; i < keep; ++i)
      pruned.emplace(*ranked[i].second, next.at(*ranked[i].second));
    beam = std::move(pruned);
  }

  std::vector<ScoredHypothesis> out;
  for (const auto &[prefix, p] : beam) {
    ScoredHypothesis h;
    h.tokens = prefix;
    h.acoustic = p.acoustic();
    h.lm = p.lm + fusion.EndOfSentence(prefix);
    h.length_terms = p.length_terms;
    const BoostState fin = p.boost.Finalize();
    h.boost_awarded = fin.awarded;
    h.boost_retracted = fin.retracted;
    h.boost = cfg.kbbs_weight * fin.net();
    h.total = h.acoustic + h.lm + h.boost + h.length_terms;
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    return RankBefore(a.total, a.tokens, b.total, b.tokens);
  });
  return out;
}

}  // namespace wctcb
