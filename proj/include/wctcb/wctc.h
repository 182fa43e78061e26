// wctcb/wctc.h

// Wildcard CTC keyword spotting.
//
// A keyword k1..km is embedded in the state sequence
//
//   *pre, blank, k1, blank, k2, ..., blank, km, blank, *post
//
// where the two wildcard states match any frame at zero cost (emission
// score 1) and loop on themselves. Inside the keyword the usual CTC
// transitions apply. A path must start in {*pre, first blank, k1} and end in
// {km, last blank, *post}, so every accepted path spells the keyword exactly
// once and absorbs everything else into the wildcards.

#ifndef WCTCB_WCTC_H_
#define WCTCB_WCTC_H_

#include <optional>
#include <utility>

#include "wctcb/core.h"

namespace wctcb {

class WildcardGraph {
 public:
  enum class Kind { kPreWildcard, kBlank, kToken, kPostWildcard };

  struct State {
    Kind kind;
    /// Emitted label; meaningless for wildcard states.
    TokenId label;
    /// Blank adjacent to a wildcard (not between two keyword tokens).
    bool outer_blank = false;
    /// Index of the keyword token this state emits, for kToken states.
    int keyword_pos = -1;
  };

  static WildcardGraph Build(const Keyword &kw, const Vocabulary &vocab);

  const Keyword &keyword() const { return keyword_; }
  const std::vector<State> &states() const { return states_; }
  std::size_t size() const { return states_.size(); }

  const std::vector<int> &predecessors(int s) const { return preds_[s]; }
  const std::vector<int> &successors(int s) const { return succs_[s]; }
  const std::vector<int> &start_states() const { return starts_; }
  bool is_accept(int s) const { return accept_[s]; }
  bool is_start(int s) const;
  bool is_wildcard(int s) const {
    return states_[s].kind == Kind::kPreWildcard ||
           states_[s].kind == Kind::kPostWildcard;
  }

  int pre_wildcard() const { return 0; }
  int post_wildcard() const { return static_cast<int>(states_.size()) - 1; }

  bool HasTransition(int from, int to) const;

 private:
  void AddArc(int from, int to);

  Keyword keyword_;
  std::vector<State> states_;
  std::vector<std::vector<int>> preds_;
  std::vector<std::vector<int>> succs_;
  std::vector<int> starts_;
  std::vector<bool> accept_;
};

struct SpotConfig {
  /// Log-domain detection threshold; a keyword is detected when its
  /// wildcard path sum is strictly greater.
  double theta = -40.0;
};

/// Log of the summed score of every accepted state sequence of length T.
/// Not normalized by length; may exceed 0 when several placements each
/// score close to 1.
double WildcardForward(const Posteriorgram &z, const WildcardGraph &g);

/// Best accepted state sequence (state indices into g.states()).
///
/// Ties: leave *pre as early as possible, enter *post as late as possible,
/// and otherwise prefer the further-advanced keyword state.
/// Throws InvalidArgument when no accepted sequence has nonzero score.
std::vector<int> WildcardViterbi(const Posteriorgram &z, const WildcardGraph &g);

/// Sum of emission log scores along a state path (wildcards contribute 0).
double WildcardPathScore(const Posteriorgram &z, const WildcardGraph &g,
                         std::span<const int> states);

/// T sparse rows over |V'|; each row holds the set of hot token ids.
class BiasMask {
 public:
  BiasMask() = default;
  BiasMask(std::size_t frames, std::size_t tokens)
      : tokens_(tokens), rows_(frames) {}

  std::size_t num_frames() const { return rows_.size(); }
  std::size_t num_tokens() const { return tokens_; }

  /// Sorted, duplicate-free.
  const std::vector<TokenId> &row(std::size_t t) const { return rows_[t]; }
  bool is_set(std::size_t t, TokenId k) const;
  void Set(std::size_t t, TokenId k);

  /// True when every row is zero.
  bool empty() const;
  std::size_t CountSet() const;

  /// Dense 0/1 matrix.
  Matrix ToDense() const;

  friend bool operator==(const BiasMask &, const BiasMask &) = default;

 private:
  std::size_t tokens_ = 0;
  std::vector<std::vector<TokenId>> rows_;
};

struct Detection {
  Keyword keyword;
  double log_score = kLogZero;
  /// First and last frame on keyword states other than the outer blanks.
  std::size_t first_frame = 0;
  std::size_t last_frame = 0;
  /// Graph state per frame of the best path.
  std::vector<int> best_path;
  std::optional<int> layer;
};

struct SpotResult {
  std::vector<Detection> detections;
  /// One mask per input keyword, in input order; zero when not detected.
  std::vector<BiasMask> masks;
};

/// Spots every keyword independently. A detected keyword's mask is one-hot
/// on the keyword token occupied by the best path at each frame; frames on
/// wildcards or blanks stay zero.
SpotResult SpotKeywords(const Posteriorgram &z, std::span<const Keyword> keywords,
                        const SpotConfig &cfg, const Vocabulary &vocab);

}  // namespace wctcb

#endif  // WCTCB_WCTC_H_
