// wctcb/bias.h

// Turning keyword evidence into self-conditioning features.
//
// Two routes feed the same projection:
//   * spotting:     masks from SpotKeywords are OR-ed together and mixed into
//                   the layer posteriorgram with weight omega;
//   * trigger map:  known misrecognitions in the greedy hypothesis are
//                   rewritten to the keyword, force-aligned, and mixed in with
//                   weight psi.
// Either way the mixed distribution goes through one more softmax before the
// linear map back to the encoder dimension.

#ifndef WCTCB_BIAS_H_
#define WCTCB_BIAS_H_

#include <optional>
#include <set>
#include <utility>

#include "wctcb/core.h"
#include "wctcb/wctc.h"

namespace wctcb {

struct BiasConfig {
  double omega = 0.7;
  std::set<int> bias_layers;
  double theta = -40.0;
};

struct TriggerRule {
  TokenSequence trigger;
  Keyword keyword;
};

struct InterBiasConfig {
  double psi = 0.9;
  std::vector<TriggerRule> trigger_map;
  std::set<int> layers;
};

/// "trigger<TAB>keyword" per line, both tokenized with TokenizeKeyword.
std::vector<TriggerRule> LoadTriggerMap(const std::filesystem::path &path,
                                        const Vocabulary &vocab);

/// Element-wise maximum. An empty input yields the zero mask of the given
/// shape.
BiasMask AggregateMasks(std::span<const BiasMask> masks, std::size_t frames,
                        std::size_t tokens);

/// Row-wise softmax.
Matrix Softmax(const Matrix &logits);

/// Softmax((1 - omega) * z + omega * mask). An all-zero mask returns z
/// unchanged; otherwise every row goes through the softmax, including rows
/// where the mask is zero.
Posteriorgram BiasInterpolate(const Posteriorgram &z, const BiasMask &mask,
                              double omega);

/// zp * weights + bias, row by row. weights is |V'| x D.
Matrix ProjectBias(const Matrix &zp, const Matrix &weights, const RowVector &bias);
Matrix ProjectBias(const Posteriorgram &zp, const Matrix &weights,
                   const RowVector &bias);

/// Leftmost-first, longest-trigger-first, non-overlapping rewrite of trigger
/// occurrences to their keywords. Equal-length triggers at one position
/// resolve to the first rule.
TokenSequence InterBiasSubstitute(std::span<const TokenId> hyp,
                                  std::span<const TriggerRule> rules);

/// Softmax((1 - psi) * z + psi * OneHot(ViterbiAlign(z, biased_y))), or
/// nullopt when biased_y cannot be aligned to z.
std::optional<Matrix> InterBiasDistribution(const Posteriorgram &z,
                                            std::span<const TokenId> biased_y,
                                            double psi);

struct InterBiasFeatures {
  Matrix features;
  /// False when biased_y could not be aligned and plain self-conditioning
  /// features were returned instead.
  bool applied = false;
};

/// Force-align biased_y to z, one-hot the alignment, mix with weight psi,
/// softmax and project. Falls back to ProjectBias(z) if the alignment is
/// infeasible.
InterBiasFeatures InterBiasFeaturesFor(const Posteriorgram &z,
                                       std::span<const TokenId> biased_y,
                                       double psi, const Matrix &weights,
                                       const RowVector &bias);

}  // namespace wctcb

#endif  // WCTCB_BIAS_H_
