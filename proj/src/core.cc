// core.cc

#include "wctcb/core.h"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <sstream>

namespace wctcb {

double LogAdd(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

double LogSumExp(std::span<const double> values) {
  double acc = kLogZero;
  for (double v : values) acc = LogAdd(acc, v);
  return acc;
}

// ---------------------------------------------------------------------------

std::vector<std::string> ReadLines(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != kBlankToken)
    throw FormatError("vocabulary must start with \"<blank>\"");
  Vocabulary v;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string &tok = tokens[i];
    if (tok.empty())
      throw FormatError("empty token at line " + std::to_string(i + 1));
    if (i > 0 && tok == kBlankToken)
      throw FormatError("\"<blank>\" repeated at line " + std::to_string(i + 1));
    if (!v.index_.emplace(tok, static_cast<TokenId>(i)).second)
      throw FormatError("duplicate token \"" + tok + "\"");
    if (i > 0) v.max_token_bytes_ = std::max(v.max_token_bytes_, tok.size());
  }
  v.tokens_ = std::move(tokens);
  return v;
}

Vocabulary Vocabulary::Load(const std::filesystem::path &path) {
  auto lines = ReadLines(path);
  // A trailing newline is not an empty token.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return FromTokens(std::move(lines));
}

void Vocabulary::Save(const std::filesystem::path &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto &tok : tokens_) out << tok << '\n';
}

std::optional<TokenId> Vocabulary::Find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::Detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids)
    if (id != kBlankId) out += tokens_.at(id);
  return out;
}

// ---------------------------------------------------------------------------

Posteriorgram Posteriorgram::FromMatrix(Matrix probs, std::optional<int> layer) {
  if (probs.rows() == 0) throw FormatError("empty posteriorgram");
  if (probs.cols() < 2)
    throw FormatError("posteriorgram needs blank plus at least one token");
  Posteriorgram z;
  z.norm_.resize(probs.rows(), probs.cols());
  z.log_.resize(probs.rows(), probs.cols());
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double p = probs(t, k);
      if (!std::isfinite(p))
        throw FormatError("non-finite value at frame " + std::to_string(t));
      if (p < 0.0 || p > 1.0)
        throw FormatError("probability outside [0,1] at frame " +
                          std::to_string(t));
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance)
      throw FormatError("row not normalized at frame " + std::to_string(t));
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      z.norm_(t, k) = probs(t, k) / sum;
      z.log_(t, k) = SafeLog(z.norm_(t, k));
    }
  }
  z.raw_ = std::move(probs);
  z.layer_ = layer;
  return z;
}

Posteriorgram Posteriorgram::WithLayer(std::optional<int> layer) const {
  Posteriorgram z = *this;
  z.layer_ = layer;
  return z;
}

namespace {

constexpr std::array<char, 4> kPgmMagic = {'P', 'G', 'M', '1'};

}  // namespace

std::uint32_t ReadU32(std::istream &in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char *>(b.data()), 4))
    throw FormatError("truncated header");
  return static_cast<std::uint32_t>(b[0]) |
         static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

void WriteU32(std::ostream &out, std::uint32_t v) {
  const std::array<char, 4> b = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::vector<float> ReadFloat32(std::istream &in, std::size_t count) {
  std::vector<unsigned char> bytes(count * 4);
  if (count > 0 &&
      !in.read(reinterpret_cast<char *>(bytes.data()),
               static_cast<std::streamsize>(bytes.size())))
    throw FormatError("truncated payload");
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char *b = &bytes[4 * i];
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                            static_cast<std::uint32_t>(b[1]) << 8 |
                            static_cast<std::uint32_t>(b[2]) << 16 |
                            static_cast<std::uint32_t>(b[3]) << 24;
    values[i] = std::bit_cast<float>(u);
  }
  return values;
}

void WriteFloat32(std::ostream &out, std::span<const float> values) {
  for (float f : values) WriteU32(out, std::bit_cast<std::uint32_t>(f));
}

Posteriorgram LoadPosteriorgram(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kPgmMagic)
    throw FormatError("bad magic in " + path.string());
  const std::uint32_t frames = ReadU32(in);
  const std::uint32_t tokens = ReadU32(in);
  if (frames == 0) throw FormatError("empty posteriorgram");
  const auto values =
      ReadFloat32(in, static_cast<std::size_t>(frames) * tokens);
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after payload in " + path.string());
  Matrix m(frames, tokens);
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t k = 0; k < tokens; ++k)
      m(t, k) = values[static_cast<std::size_t>(t) * tokens + k];
  return Posteriorgram::FromMatrix(std::move(m));
}

void SavePosteriorgram(const Posteriorgram &z, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kPgmMagic.data(), 4);
  WriteU32(out, static_cast<std::uint32_t>(z.num_frames()));
  WriteU32(out, static_cast<std::uint32_t>(z.num_tokens()));
  std::vector<float> values;
  values.reserve(z.num_frames() * z.num_tokens());
  for (std::size_t t = 0; t < z.num_frames(); ++t)
    for (std::size_t k = 0; k < z.num_tokens(); ++k)
      values.push_back(static_cast<float>(z.raw()(t, k)));
  WriteFloat32(out, values);
}

// ---------------------------------------------------------------------------

Keyword TokenizeKeyword(std::string_view surface, const Vocabulary &vocab) {
  if (surface.empty()) throw FormatError("empty keyword");
  Keyword kw{std::string(surface), {}};
  std::size_t pos = 0;
  std::size_t chars = 0;
  while (pos < surface.size()) {
    const std::size_t longest =
        std::min(vocab.max_token_bytes(), surface.size() - pos);
    std::optional<TokenId> match;
    std::size_t len = longest;
    for (; len > 0; --len) {
      match = vocab.Find(surface.substr(pos, len));
      if (match && *match != kBlankId) break;
      match.reset();
    }
    if (!match) {
      throw FormatError("cannot tokenize \"" + std::string(surface) +
                        "\" at position " + std::to_string(chars));
    }
    kw.ids.push_back(*match);
    // Count UTF-8 lead bytes so positions are reported in characters.
    for (std::size_t i = pos; i < pos + len; ++i)
      if ((static_cast<unsigned char>(surface[i]) & 0xC0) != 0x80) ++chars;
    pos += len;
  }
  return kw;
}

std::vector<std::string> LoadKeywordSurfaces(const std::filesystem::path &path) {
  std::vector<std::string> out;
  for (auto &line : ReadLines(path)) {
    // An optional "<TAB>IV" / "<TAB>OOV" tag is not part of the surface.
    if (auto tab = line.find('\t'); tab != std::string::npos) line.resize(tab);
    if (line.find_first_not_of(" ") == std::string::npos || line.front() == '#')
      continue;
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace wctcb
