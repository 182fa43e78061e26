// bias.cc

#include "wctcb/bias.h"

#include <algorithm>
#include <string>

#include "wctcb/ctc.h"

namespace wctcb {

std::vector<TriggerRule> LoadTriggerMap(const std::filesystem::path &path,
                                        const Vocabulary &vocab) {
  std::vector<TriggerRule> rules;
  std::size_t lineno = 0;
  for (const auto &line : ReadLines(path)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected trigger<TAB>keyword");
    Keyword trigger = TokenizeKeyword(std::string_view(line).substr(0, tab), vocab);
    Keyword kw = TokenizeKeyword(std::string_view(line).substr(tab + 1), vocab);
    rules.push_back({std::move(trigger.ids), std::move(kw)});
  }
  return rules;
}

BiasMask AggregateMasks(std::span<const BiasMask> masks, std::size_t frames,
                        std::size_t tokens) {
  BiasMask out(frames, tokens);
  for (const BiasMask &m : masks) {
    if (m.num_frames() != frames || m.num_tokens() != tokens)
      throw InvalidArgument("bias mask shape mismatch");
    for (std::size_t t = 0; t < frames; ++t)
      for (TokenId k : m.row(t)) out.Set(t, k);
  }
  return out;
}

Matrix Softmax(const Matrix &logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      out(t, k) = std::exp(logits(t, k) - mx);
      sum += out(t, k);
    }
    out.row(t) /= sum;
  }
  return out;
}

Posteriorgram BiasInterpolate(const Posteriorgram &z, const BiasMask &mask,
                              double omega) {
  if (mask.num_frames() != z.num_frames() || mask.num_tokens() != z.num_tokens())
    throw InvalidArgument("bias mask shape does not match posteriorgram");
  if (!(omega >= 0.0 && omega <= 1.0))
    throw InvalidArgument("omega must lie in [0, 1]");
  if (mask.empty()) return z;
  const Matrix mixed = (1.0 - omega) * z.probs() + omega * mask.ToDense();
  return Posteriorgram::FromMatrix(Softmax(mixed), z.layer());
}

Matrix ProjectBias(const Matrix &zp, const Matrix &weights, const RowVector &bias) {
  if (zp.cols() != weights.rows())
    throw InvalidArgument("projection expects " + std::to_string(weights.rows()) +
                          " inputs, got " + std::to_string(zp.cols()));
  if (bias.size() != weights.cols())
    throw InvalidArgument("projection bias length does not match output width");
  Matrix out = zp * weights;
  out.rowwise() += bias;
  return out;
}

Matrix ProjectBias(const Posteriorgram &zp, const Matrix &weights,
                   const RowVector &bias) {
  return ProjectBias(zp.probs(), weights, bias);
}

TokenSequence InterBiasSubstitute(std::span<const TokenId> hyp,
                                  std::span<const TriggerRule> rules) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < hyp.size()) {
    const TriggerRule *match = nullptr;
    for (const TriggerRule &r : rules) {
      const auto &trig = r.trigger;
      if (trig.empty() || trig.size() > hyp.size() - i) continue;
      if (match && trig.size() <= match->trigger.size()) continue;
      if (std::equal(trig.begin(), trig.end(), hyp.begin() + i)) match = &r;
    }
    if (match) {
      out.insert(out.end(), match->keyword.ids.begin(), match->keyword.ids.end());
      i += match->trigger.size();
    } else {
      out.push_back(hyp[i++]);
    }
  }
  return out;
}

std::optional<Matrix> InterBiasDistribution(const Posteriorgram &z,
                                            std::span<const TokenId> biased_y,
                                            double psi) {
  if (!(psi >= 0.0 && psi <= 1.0)) throw InvalidArgument("psi must lie in [0, 1]");
  if (MinFramesFor(biased_y) > z.num_frames()) return std::nullopt;
  AlignmentPath path;
  try {
    path = ViterbiAlign(z, biased_y);
  } catch (const InvalidArgument &) {
    // Every alignment has zero probability.
    return std::nullopt;
  }
  Matrix onehot = Matrix::Zero(z.num_frames(), z.num_tokens());
  for (std::size_t t = 0; t < path.size(); ++t) onehot(t, path[t]) = 1.0;
  return Softmax((1.0 - psi) * z.probs() + psi * onehot);
}

InterBiasFeatures InterBiasFeaturesFor(const Posteriorgram &z,
                                       std::span<const TokenId> biased_y,
                                       double psi, const Matrix &weights,
                                       const RowVector &bias) {
  auto mixed = InterBiasDistribution(z, biased_y, psi);
  if (!mixed) return {ProjectBias(z, weights, bias), false};
  return {ProjectBias(*mixed, weights, bias), true};
}

}  // namespace wctcb
