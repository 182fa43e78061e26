// ctc.cc

#include "wctcb/ctc.h"

#include <array>
#include <string>

namespace wctcb {

TokenSequence Collapse(std::span<const TokenId> path) {
  TokenSequence out;
  TokenId prev = -1;
  for (TokenId label : path) {
    if (label != prev && label != kBlankId) out.push_back(label);
    prev = label;
  }
  return out;
}

AlignmentPath ArgmaxPath(const Posteriorgram &z) {
  AlignmentPath path(z.num_frames());
  for (std::size_t t = 0; t < z.num_frames(); ++t) {
    TokenId best = 0;
    for (std::size_t k = 1; k < z.num_tokens(); ++k)
      if (z.prob(t, k) > z.prob(t, best)) best = static_cast<TokenId>(k);
    path[t] = best;
  }
  return path;
}

TokenSequence GreedyDecode(const Posteriorgram &z) {
  return Collapse(ArgmaxPath(z));
}

std::size_t MinFramesFor(std::span<const TokenId> y) {
  std::size_t n = y.size();
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] == y[i - 1]) ++n;
  return n;
}

namespace {

std::vector<TokenId> ExpandLabels(std::span<const TokenId> y) {
  std::vector<TokenId> ext;
  ext.reserve(2 * y.size() + 1);
  ext.push_back(kBlankId);
  for (TokenId id : y) {
    if (id == kBlankId)
      throw InvalidArgument("label sequence must not contain blank");
    ext.push_back(id);
    ext.push_back(kBlankId);
  }
  return ext;
}

// A state may be entered from s, s-1, and s-2 when s-2 is a different
// non-blank label.
bool CanSkip(const std::vector<TokenId> &ext, std::size_t s) {
  return s >= 2 && ext[s] != kBlankId && ext[s] != ext[s - 2];
}

void CheckLabels(const Posteriorgram &z, std::span<const TokenId> y) {
  for (TokenId id : y)
    if (id <= kBlankId || static_cast<std::size_t>(id) >= z.num_tokens())
      throw InvalidArgument("label " + std::to_string(id) +
                            " outside the posteriorgram's token range");
}

}  // namespace

double CtcLattice::LogLikelihood() const {
  const Eigen::Index last = alpha.rows() - 1;
  const Eigen::Index s = alpha.cols();
  if (s == 1) return alpha(last, 0);
  return LogAdd(alpha(last, s - 1), alpha(last, s - 2));
}

CtcLattice BuildCtcLattice(const Posteriorgram &z, std::span<const TokenId> y) {
  CheckLabels(z, y);
  CtcLattice lat;
  lat.expanded_labels = ExpandLabels(y);
  const auto &ext = lat.expanded_labels;
  const std::size_t T = z.num_frames();
  const std::size_t S = ext.size();
  lat.alpha = Matrix::Constant(T, S, kLogZero);
  lat.alpha(0, 0) = z.log_prob(0, ext[0]);
  if (S > 1) lat.alpha(0, 1) = z.log_prob(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = lat.alpha(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, lat.alpha(t - 1, s - 1));
      if (CanSkip(ext, s)) acc = LogAdd(acc, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = acc + z.log_prob(t, ext[s]);
    }
  }
  return lat;
}

double CtcLoss(const Posteriorgram &z, std::span<const TokenId> y) {
  if (MinFramesFor(y) > z.num_frames())
    return std::numeric_limits<double>::infinity();
  return -BuildCtcLattice(z, y).LogLikelihood();
}

AlignmentPath ViterbiAlign(const Posteriorgram &z, std::span<const TokenId> y) {
  CheckLabels(z, y);
  if (MinFramesFor(y) > z.num_frames())
    throw InvalidArgument("label sequence too long for " +
                          std::to_string(z.num_frames()) + " frames");
  const auto ext = ExpandLabels(y);
  const std::size_t T = z.num_frames();
  const std::size_t S = ext.size();

  // best(t, s): best log score of frames t..T-1 given state s at frame t.
  // Tracing forward from the start and keeping the highest state on ties
  // yields the earliest-advancing optimal path.
  Matrix best = Matrix::Constant(T, S, kLogZero);
  for (std::size_t s = (S >= 2 ? S - 2 : 0); s < S; ++s)
    best(T - 1, s) = z.log_prob(T - 1, ext[s]);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double next = best(t + 1, s);
      if (s + 1 < S) next = std::max(next, best(t + 1, s + 1));
      if (s + 2 < S && CanSkip(ext, s + 2)) next = std::max(next, best(t + 1, s + 2));
      best(t, s) = next + z.log_prob(t, ext[s]);
    }
  }

  std::size_t s = (S > 1 && best(0, 1) >= best(0, 0)) ? 1 : 0;
  if (best(0, s) == kLogZero)
    throw InvalidArgument("no alignment with nonzero probability");

  AlignmentPath path(T);
  path[0] = ext[s];
  for (std::size_t t = 1; t < T; ++t) {
    std::size_t pick = s;
    if (s + 2 < S && CanSkip(ext, s + 2) && best(t, s + 2) >= best(t, pick) &&
        best(t, s + 2) >= best(t, s + 1))
      pick = s + 2;
    else if (s + 1 < S && best(t, s + 1) >= best(t, s))
      pick = s + 1;
    s = pick;
    path[t] = ext[s];
  }
  return path;
}

double PathLogScore(const Posteriorgram &z, std::span<const TokenId> path) {
  double score = 0.0;
  for (std::size_t t = 0; t < path.size(); ++t) score += z.log_prob(t, path[t]);
  return score;
}

double IntermediateLossMix(const Posteriorgram &final_z,
                           const std::map<int, Posteriorgram> &intermediate_zs,
                           std::span<const TokenId> y, const LossMixConfig &cfg) {
  if (cfg.lambda < 0.0 || cfg.lambda > 1.0)
    throw InvalidArgument("lambda must lie in [0, 1]");
  if (cfg.lambda > 0.0 && cfg.intermediate_layers.empty())
    throw InvalidArgument("intermediate layers required when lambda > 0");
  for (int n : cfg.intermediate_layers)
    if (!intermediate_zs.contains(n))
      throw InvalidArgument("missing posteriorgram for layer " + std::to_string(n));
  if (intermediate_zs.size() != cfg.intermediate_layers.size())
    throw InvalidArgument("posteriorgrams supplied for layers outside the mix");

  // Guard the zero-weight terms so an infeasible +inf loss does not turn
  // into 0 * inf.
  double loss = cfg.lambda < 1.0 ? (1.0 - cfg.lambda) * CtcLoss(final_z, y) : 0.0;
  if (cfg.lambda == 0.0) return loss;
  double inter = 0.0;
  for (int n : cfg.intermediate_layers) inter += CtcLoss(intermediate_zs.at(n), y);
  return loss + cfg.lambda / static_cast<double>(cfg.intermediate_layers.size()) * inter;
}

}  // namespace wctcb
