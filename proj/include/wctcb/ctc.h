// wctcb/ctc.h

#ifndef WCTCB_CTC_H_
#define WCTCB_CTC_H_

#include <map>
#include <set>

#include "wctcb/core.h"

namespace wctcb {

/// Merge adjacent repeats, then delete blanks.
TokenSequence Collapse(std::span<const TokenId> path);

/// Collapse of the per-frame argmax; ties go to the smallest token index.
TokenSequence GreedyDecode(const Posteriorgram &z);

/// Per-frame argmax path (smallest index on ties).
AlignmentPath ArgmaxPath(const Posteriorgram &z);

/// Minimum number of frames needed to emit `y`: one per token plus one blank
/// between each adjacent repeated pair.
std::size_t MinFramesFor(std::span<const TokenId> y);

/// Forward lattice over the blank-expanded label sequence
/// (blank, y1, blank, y2, ..., yL, blank).
struct CtcLattice {
  std::vector<TokenId> expanded_labels;
  /// alpha(t, s) = log of the summed probability of all prefixes of length
  /// t+1 ending in expanded state s.
  Matrix alpha;

  /// Log-likelihood of y: sum of the last two states at the final frame.
  double LogLikelihood() const;
};

CtcLattice BuildCtcLattice(const Posteriorgram &z, std::span<const TokenId> y);

/// Negative log-likelihood of y under z. Returns +inf when y cannot be
/// emitted in z.num_frames() frames.
double CtcLoss(const Posteriorgram &z, std::span<const TokenId> y);

/// Maximum-probability path in the preimage of y under Collapse. Among equal
/// scores the path that advances through the expanded labels earliest wins.
/// Throws InvalidArgument if no path has nonzero probability.
AlignmentPath ViterbiAlign(const Posteriorgram &z, std::span<const TokenId> y);

/// Sum of log z_{t, path_t}.
double PathLogScore(const Posteriorgram &z, std::span<const TokenId> path);

struct LossMixConfig {
  double lambda = 0.0;
  std::set<int> intermediate_layers;
};

/// (1 - lambda) * L(final) + lambda / |N| * sum_n L(intermediate_n).
/// Diagnostic only; nothing here is differentiated.
double IntermediateLossMix(const Posteriorgram &final_z,
                           const std::map<int, Posteriorgram> &intermediate_zs,
                           std::span<const TokenId> y, const LossMixConfig &cfg);

}  // namespace wctcb

#endif  // WCTCB_CTC_H_
