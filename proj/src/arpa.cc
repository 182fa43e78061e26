// arpa.cc

#include <charconv>
#include <fstream>
#include <sstream>

#include "wctcb/decode.h"

namespace wctcb {

namespace {

std::vector<std::string> SplitWhitespace(const std::string &line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string f; in >> f;) out.push_back(std::move(f));
  return out;
}

double ParseNumber(const std::string &s, std::size_t lineno) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v))
    throw FormatError("ARPA line " + std::to_string(lineno) + ": bad number \"" +
                      s + "\"");
  return v;
}

std::string FormatNumber(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

NGramLM NGramLM::Load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return Parse(in);
}

NGramLM NGramLM::Parse(std::istream &in) {
  NGramLM lm;
  std::vector<std::size_t> declared;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next() || line != "\\data\\") throw FormatError("ARPA: missing \\data\\ header");
  while (next() && line.rfind("ngram ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("ARPA: bad count line " + line);
    const int n = static_cast<int>(ParseNumber(line.substr(6, eq - 6), lineno));
    if (n != static_cast<int>(declared.size()) + 1)
      throw FormatError("ARPA: n-gram counts out of order at line " +
                        std::to_string(lineno));
    declared.push_back(static_cast<std::size_t>(ParseNumber(line.substr(eq + 1), lineno)));
  }
  if (declared.empty()) throw FormatError("ARPA: no n-gram counts");
  lm.ngrams_.resize(declared.size());

  for (std::size_t n = 1; n <= declared.size(); ++n) {
    const std::string header = "\\" + std::to_string(n) + "-grams:";
    if (line != header)
      throw FormatError("ARPA: expected " + header + " at line " + std::to_string(lineno));
    auto &table = lm.ngrams_[n - 1];
    while (next() && line.front() != '\\') {
      const auto f = SplitWhitespace(line);
      if (f.size() != n + 1 && f.size() != n + 2)
        throw FormatError("ARPA line " + std::to_string(lineno) + ": expected " +
                          std::to_string(n) + " words");
      Entry e;
      e.log10_prob = ParseNumber(f[0], lineno);
      if (e.log10_prob > 0.0)
        throw FormatError("ARPA line " + std::to_string(lineno) +
                          ": positive log probability");
      if (f.size() == n + 2) e.backoff = ParseNumber(f[n + 1], lineno);
      NGram words(f.begin() + 1, f.begin() + 1 + static_cast<std::ptrdiff_t>(n));
      if (!table.emplace(std::move(words), e).second)
        throw FormatError("ARPA line " + std::to_string(lineno) + ": duplicate n-gram");
    }
    if (table.size() != declared[n - 1])
      throw FormatError("ARPA: " + std::to_string(n) + "-gram count mismatch (declared " +
                        std::to_string(declared[n - 1]) + ", found " +
                        std::to_string(table.size()) + ")");
  }
  if (line != "\\end\\") throw FormatError("ARPA: missing \\end\\");
  return lm;
}

void NGramLM::Write(std::ostream &out) const {
  out << "\\data\\\n";
  for (std::size_t n = 1; n <= ngrams_.size(); ++n)
    out << "ngram " << n << "=" << ngrams_[n - 1].size() << "\n";
  for (std::size_t n = 1; n <= ngrams_.size(); ++n) {
    out << "\n\\" << n << "-grams:\n";
    for (const auto &[words, e] : ngrams_[n - 1]) {
      out << FormatNumber(e.log10_prob) << '\t';
      for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
      if (e.backoff) out << '\t' << FormatNumber(*e.backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

void NGramLM::Save(const std::filesystem::path &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  Write(out);
}

bool NGramLM::Contains(const std::string &word) const {
  return !ngrams_.empty() && ngrams_[0].contains(NGram{word});
}

double NGramLM::Log10Prob(std::span<const std::string> context,
                          const std::string &word) const {
  const std::size_t max_ctx = ngrams_.size() - 1;
  if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);

  // Longest matching n-gram first, accumulating back-off weights of the
  // contexts that had to be dropped.
  double backoff = 0.0;
  for (std::size_t drop = 0; drop <= context.size(); ++drop) {
    const auto ctx = context.subspan(drop);
    NGram key(ctx.begin(), ctx.end());
    key.push_back(word);
    const auto &table = ngrams_[key.size() - 1];
    if (auto it = table.find(key); it != table.end()) return backoff + it->second.log10_prob;
    if (!ctx.empty()) {
      const auto &ctx_table = ngrams_[ctx.size() - 1];
      if (auto c = ctx_table.find(NGram(ctx.begin(), ctx.end()));
          c != ctx_table.end() && c->second.backoff)
        backoff += *c->second.backoff;
    }
  }
  if (auto unk = ngrams_[0].find(NGram{"<unk>"}); unk != ngrams_[0].end())
    return backoff + unk->second.log10_prob;
  return backoff + unk_log10_;
}

}  // namespace wctcb
