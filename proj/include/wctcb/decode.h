// wctcb/decode.h

// CTC prefix beam search with optional n-gram shallow fusion and
// keyword-boosted scoring.

#ifndef WCTCB_DECODE_H_
#define WCTCB_DECODE_H_

#include <map>
#include <optional>

#include "wctcb/core.h"

namespace wctcb {

/// Back-off n-gram model read from ARPA text. Probabilities are log10.
class NGramLM {
 public:
  struct Entry {
    double log10_prob = 0.0;
    std::optional<double> backoff;
  };
  using NGram = std::vector<std::string>;

  static NGramLM Load(const std::filesystem::path &path);
  static NGramLM Parse(std::istream &in);
  /// Canonical ARPA text: sections in order, n-grams sorted, shortest
  /// round-trip number formatting.
  void Save(const std::filesystem::path &path) const;
  void Write(std::ostream &out) const;

  int order() const { return static_cast<int>(ngrams_.size()); }
  std::size_t count(int n) const { return ngrams_.at(n - 1).size(); }
  const std::map<NGram, Entry> &ngrams(int n) const { return ngrams_.at(n - 1); }

  bool Contains(const std::string &word) const;

  /// log10 p(word | context), backing off through shorter contexts. Context
  /// is oldest-first; only its last order()-1 words matter. Words without a
  /// unigram score as "<unk>" if the model has one, else unk_log10().
  double Log10Prob(std::span<const std::string> context, const std::string &word) const;

  double unk_log10() const { return unk_log10_; }
  void set_unk_log10(double v) { unk_log10_ = v; }

 private:
  std::vector<std::map<NGram, Entry>> ngrams_;
  double unk_log10_ = -10.0;
};

/// Prefix tree over keyword token ids.
class KeywordTrie {
 public:
  static constexpr int kRoot = 0;

  static KeywordTrie Build(std::span<const Keyword> keywords);

  std::optional<int> Child(int node, TokenId token) const;
  int depth(int node) const { return nodes_.at(node).depth; }
  bool terminal(int node) const { return nodes_.at(node).terminal; }
  bool has_children(int node) const { return !nodes_.at(node).children.empty(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::map<TokenId, int> children;
    int depth = 0;
    bool terminal = false;
  };
  std::vector<Node> nodes_;
};

/// Partial keyword match carried by a prefix.
///
/// Each token that extends a match earns one unit of boost. Completing a
/// keyword banks the units; if the match dies first, the unbanked units are
/// taken back, so a hypothesis that only brushed past a keyword ends with
/// net zero boost.
struct BoostState {
  int node = KeywordTrie::kRoot;
  int pending = 0;
  int awarded = 0;
  int retracted = 0;

  int net() const { return awarded - retracted; }
  /// Advance by one emitted token.
  BoostState Advance(const KeywordTrie &trie, TokenId token) const;
  /// Take back an unfinished match at the end of the utterance.
  BoostState Finalize() const;
};

struct DecodeConfig {
  std::size_t beam_size = 10;
  double lm_weight = 0.5;
  double length_penalty = 0.2;
  /// 0 disables keyword boosting; 3.0 is the usual setting.
  double kbbs_weight = 0.0;
};

/// A ranked result with its score decomposition:
/// total = acoustic + lm + boost + length_terms, each already weighted.
struct ScoredHypothesis {
  TokenSequence tokens;
  double total = 0.0;
  double acoustic = 0.0;
  double lm = 0.0;
  double boost = 0.0;
  double length_terms = 0.0;
  /// Raw boost units, before the kbbs weight.
  int boost_awarded = 0;
  int boost_retracted = 0;
};

/// Prefix beam search over z. Only new-token emissions receive LM, length and
/// boost terms; blanks and repeat merges are acoustic only. LM scores enter in
/// natural log. Results are sorted by total (descending), ties broken by
/// lexicographically smaller token sequence.
std::vector<ScoredHypothesis> BeamSearch(const Posteriorgram &z, const Vocabulary &vocab,
                                         const DecodeConfig &cfg,
                                         const NGramLM *lm = nullptr,
                                         const KeywordTrie *trie = nullptr);

}  // namespace wctcb

#endif  // WCTCB_DECODE_H_
