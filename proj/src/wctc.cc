// wctc.cc

#include "wctcb/wctc.h"

#include <algorithm>
#include <string>

namespace wctcb {

WildcardGraph WildcardGraph::Build(const Keyword &kw, const Vocabulary &vocab) {
  if (kw.ids.empty()) throw InvalidArgument("empty keyword");
  for (TokenId id : kw.ids)
    if (id <= kBlankId || static_cast<std::size_t>(id) >= vocab.size())
      throw InvalidArgument("keyword \"" + kw.surface + "\" has token id " +
                            std::to_string(id) + " outside the vocabulary");

  WildcardGraph g;
  g.keyword_ = kw;
  const int m = static_cast<int>(kw.ids.size());
  g.states_.push_back({Kind::kPreWildcard, kBlankId});
  for (int i = 0; i < m; ++i) {
    g.states_.push_back({Kind::kBlank, kBlankId, i == 0});
    g.states_.push_back({Kind::kToken, kw.ids[i], false, i});
  }
  g.states_.push_back({Kind::kBlank, kBlankId, true});
  g.states_.push_back({Kind::kPostWildcard, kBlankId});

  const int n = static_cast<int>(g.states_.size());
  const int post = n - 1;
  const int last_token = n - 3;
  const int last_blank = n - 2;
  g.preds_.resize(n);
  g.succs_.resize(n);
  g.accept_.assign(n, false);

  g.AddArc(0, 0);
  g.AddArc(0, 1);
  g.AddArc(0, 2);
  for (int s = 1; s <= last_blank; ++s) {
    g.AddArc(s, s);
    if (s + 1 <= last_blank) g.AddArc(s, s + 1);
    if (s + 2 <= last_blank && g.states_[s + 2].kind == Kind::kToken &&
        g.states_[s + 2].label != g.states_[s].label)
      g.AddArc(s, s + 2);
  }
  g.AddArc(last_token, post);
  g.AddArc(last_blank, post);
  g.AddArc(post, post);

  g.starts_ = {0, 1, 2};
  g.accept_[last_token] = g.accept_[last_blank] = g.accept_[post] = true;
  for (auto &p : g.preds_) std::sort(p.begin(), p.end());
  for (auto &s : g.succs_) std::sort(s.begin(), s.end());
  return g;
}

void WildcardGraph::AddArc(int from, int to) {
  succs_[from].push_back(to);
  preds_[to].push_back(from);
}

bool WildcardGraph::is_start(int s) const {
  return std::find(starts_.begin(), starts_.end(), s) != starts_.end();
}

bool WildcardGraph::HasTransition(int from, int to) const {
  const auto &s = succs_[from];
  return std::find(s.begin(), s.end(), to) != s.end();
}

namespace {

void CheckShapes(const Posteriorgram &z, const WildcardGraph &g) {
  for (TokenId id : g.keyword().ids)
    if (static_cast<std::size_t>(id) >= z.num_tokens())
      throw InvalidArgument("keyword token outside the posteriorgram");
}

double Emission(const Posteriorgram &z, const WildcardGraph &g, std::size_t t,
                int s) {
  if (g.is_wildcard(s)) return 0.0;
  return z.log_prob(t, g.states()[s].label);
}

// Larger key wins a Viterbi tie: keyword states by position, then *post,
// then *pre.
int TieKey(const WildcardGraph &g, int s) {
  if (s == g.pre_wildcard()) return 0;
  if (s == g.post_wildcard()) return 1;
  return 1 + s;
}

}  // namespace

double WildcardForward(const Posteriorgram &z, const WildcardGraph &g) {
  CheckShapes(z, g);
  const std::size_t T = z.num_frames();
  const int n = static_cast<int>(g.size());
  std::vector<double> alpha(n, kLogZero), next(n);
  for (int s : g.start_states()) alpha[s] = Emission(z, g, 0, s);
  std::vector<double> terms;
  for (std::size_t t = 1; t < T; ++t) {
    for (int s = 0; s < n; ++s) {
      terms.clear();
      for (int p : g.predecessors(s)) terms.push_back(alpha[p]);
      next[s] = LogSumExp(terms) + Emission(z, g, t, s);
    }
    std::swap(alpha, next);
  }
  terms.clear();
  for (int s = 0; s < n; ++s)
    if (g.is_accept(s)) terms.push_back(alpha[s]);
  return LogSumExp(terms);
}

std::vector<int> WildcardViterbi(const Posteriorgram &z, const WildcardGraph &g) {
  CheckShapes(z, g);
  const std::size_t T = z.num_frames();
  const int n = static_cast<int>(g.size());

  // best(t, s): best score of frames t..T-1 given state s at frame t.
  Matrix best = Matrix::Constant(T, n, kLogZero);
  for (int s = 0; s < n; ++s)
    if (g.is_accept(s)) best(T - 1, s) = Emission(z, g, T - 1, s);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (int s = 0; s < n; ++s) {
      double nb = kLogZero;
      for (int q : g.successors(s)) nb = std::max(nb, best(t + 1, q));
      best(t, s) = nb + Emission(z, g, t, s);
    }
  }

  auto pick = [&](std::size_t t, const std::vector<int> &candidates) {
    int chosen = -1;
    for (int s : candidates) {
      if (chosen < 0 || best(t, s) > best(t, chosen) ||
          (best(t, s) == best(t, chosen) && TieKey(g, s) > TieKey(g, chosen)))
        chosen = s;
    }
    return chosen;
  };

  std::vector<int> path(T);
  path[0] = pick(0, g.start_states());
  if (best(0, path[0]) == kLogZero)
    throw InvalidArgument("keyword \"" + g.keyword().surface +
                          "\" has no accepting path");
  for (std::size_t t = 1; t < T; ++t) path[t] = pick(t, g.successors(path[t - 1]));
  return path;
}

double WildcardPathScore(const Posteriorgram &z, const WildcardGraph &g,
                         std::span<const int> states) {
  double score = 0.0;
  for (std::size_t t = 0; t < states.size(); ++t) score += Emission(z, g, t, states[t]);
  return score;
}

// ---------------------------------------------------------------------------

bool BiasMask::is_set(std::size_t t, TokenId k) const {
  const auto &r = rows_[t];
  return std::binary_search(r.begin(), r.end(), k);
}

void BiasMask::Set(std::size_t t, TokenId k) {
  if (t >= rows_.size() || k < 0 || static_cast<std::size_t>(k) >= tokens_)
    throw InvalidArgument("bias mask index out of range");
  auto &r = rows_[t];
  auto it = std::lower_bound(r.begin(), r.end(), k);
  if (it == r.end() || *it != k) r.insert(it, k);
}

bool BiasMask::empty() const {
  return std::all_of(rows_.begin(), rows_.end(),
                     [](const auto &r) { return r.empty(); });
}

std::size_t BiasMask::CountSet() const {
  std::size_t n = 0;
  for (const auto &r : rows_) n += r.size();
  return n;
}

Matrix BiasMask::ToDense() const {
  Matrix m = Matrix::Zero(rows_.size(), tokens_);
  for (std::size_t t = 0; t < rows_.size(); ++t)
    for (TokenId k : rows_[t]) m(t, k) = 1.0;
  return m;
}

SpotResult SpotKeywords(const Posteriorgram &z, std::span<const Keyword> keywords,
                        const SpotConfig &cfg, const Vocabulary &vocab) {
  if (z.num_tokens() != vocab.size())
    throw InvalidArgument("posteriorgram width " + std::to_string(z.num_tokens()) +
                          " does not match vocabulary size " +
                          std::to_string(vocab.size()));
  if (!std::isfinite(cfg.theta)) throw InvalidArgument("theta must be finite");
  SpotResult result;
  for (const Keyword &kw : keywords) {
    BiasMask mask(z.num_frames(), z.num_tokens());
    const WildcardGraph g = WildcardGraph::Build(kw, vocab);
    const double score = WildcardForward(z, g);
    if (score > cfg.theta) {
      Detection det;
      det.keyword = kw;
      det.log_score = score;
      det.layer = z.layer();
      det.best_path = WildcardViterbi(z, g);
      bool seen = false;
      for (std::size_t t = 0; t < det.best_path.size(); ++t) {
        const auto &st = g.states()[det.best_path[t]];
        if (g.is_wildcard(det.best_path[t]) || st.outer_blank) continue;
        if (!seen) det.first_frame = t;
        det.last_frame = t;
        seen = true;
        if (st.kind == WildcardGraph::Kind::kToken) mask.Set(t, st.label);
      }
      result.detections.push_back(std::move(det));
    }
    result.masks.push_back(std::move(mask));
  }
  return result;
}

}  // namespace wctcb
