// wctcb/metrics.h

#ifndef WCTCB_METRICS_H_
#define WCTCB_METRICS_H_

#include <map>
#include <optional>

#include "wctcb/core.h"

namespace wctcb {

/// Unit-cost Levenshtein distance.
std::size_t EditDistance(std::span<const TokenId> a, std::span<const TokenId> b);

/// EditDistance(ref, hyp) / |ref|. Throws InvalidArgument on an empty ref.
double Cer(std::span<const TokenId> ref, std::span<const TokenId> hyp);

/// Non-overlapping left-to-right occurrences of `pattern` in `seq`.
std::size_t CountOccurrences(std::span<const TokenId> seq,
                             std::span<const TokenId> pattern);

struct KeywordCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  bool oov = false;
};

struct EvalReport {
  /// Corpus-level: total edits over total reference length.
  double cer = 0.0;
  std::size_t edits = 0;
  std::size_t ref_length = 0;
  std::map<std::string, KeywordCounts> keywords;
  /// nullopt when the class has no reference or hypothesis occurrences.
  std::optional<double> f1_oov;
  std::optional<double> f1_iv;
};

/// 2tp / (2tp + fp + fn); nullopt if all counts are zero.
std::optional<double> F1(std::size_t tp, std::size_t fp, std::size_t fn);

/// Per utterance, tp = min(ref_count, hyp_count), fp and fn take the excess.
/// F1 is pooled over the OOV-flagged and IV-flagged keywords separately.
/// The CER fields are filled in as well (utterances with empty references add
/// their hypothesis length as insertions).
EvalReport KeywordF1(std::span<const TokenSequence> refs,
                     std::span<const TokenSequence> hyps,
                     std::span<const Keyword> keywords, std::span<const bool> oov_flags);

}  // namespace wctcb

#endif  // WCTCB_METRICS_H_
