// metrics.cc

#include "wctcb/metrics.h"

#include <algorithm>
#include <array>
#include <numeric>

namespace wctcb {

std::size_t EditDistance(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double Cer(std::span<const TokenId> ref, std::span<const TokenId> hyp) {
  if (ref.empty()) throw InvalidArgument("empty reference");
  return static_cast<double>(EditDistance(ref, hyp)) / static_cast<double>(ref.size());
}

std::size_t CountOccurrences(std::span<const TokenId> seq,
                             std::span<const TokenId> pattern) {
  if (pattern.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + pattern.size() <= seq.size();) {
    if (std::equal(pattern.begin(), pattern.end(), seq.begin() + i)) {
      ++n;
      i += pattern.size();
    } else {
      ++i;
    }
  }
  return n;
}

std::optional<double> F1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return std::nullopt;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

EvalReport KeywordF1(std::span<const TokenSequence> refs,
                     std::span<const TokenSequence> hyps,
                     std::span<const Keyword> keywords, std::span<const bool> oov_flags) {
  if (refs.size() != hyps.size())
    throw InvalidArgument("reference and hypothesis counts differ (" +
                          std::to_string(refs.size()) + " vs " +
                          std::to_string(hyps.size()) + ")");
  if (keywords.size() != oov_flags.size())
    throw InvalidArgument("one OOV flag per keyword required");

  EvalReport report;
  for (std::size_t u = 0; u < refs.size(); ++u) {
    report.edits += EditDistance(refs[u], hyps[u]);
    report.ref_length += refs[u].size();
  }
  report.cer = report.ref_length == 0
                   ? 0.0
                   : static_cast<double>(report.edits) /
                         static_cast<double>(report.ref_length);

  std::array<std::size_t, 2> tp{}, fp{}, fn{};  // [iv, oov]
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    KeywordCounts c;
    c.oov = oov_flags[k];
    for (std::size_t u = 0; u < refs.size(); ++u) {
      const std::size_t r = CountOccurrences(refs[u], keywords[k].ids);
      const std::size_t h = CountOccurrences(hyps[u], keywords[k].ids);
      c.tp += std::min(r, h);
      if (h > r) c.fp += h - r;
      if (r > h) c.fn += r - h;
    }
    const std::size_t cls = c.oov ? 1 : 0;
    tp[cls] += c.tp;
    fp[cls] += c.fp;
    fn[cls] += c.fn;
    auto &slot = report.keywords[keywords[k].surface];
    slot.tp += c.tp;
    slot.fp += c.fp;
    slot.fn += c.fn;
    slot.oov = c.oov;
  }
  report.f1_iv = F1(tp[0], fp[0], fn[0]);
  report.f1_oov = F1(tp[1], fp[1], fn[1]);
  return report;
}

}  // namespace wctcb
