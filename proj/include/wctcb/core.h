// wctcb/core.h

// Shared domain types, log-domain numerics and the on-disk formats for
// vocabularies, keyword lists and posteriorgrams.

#ifndef WCTCB_CORE_H_
#define WCTCB_CORE_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace wctcb {

using TokenId = std::int32_t;

/// The CTC blank always occupies column 0.
inline constexpr TokenId kBlankId = 0;
inline constexpr std::string_view kBlankToken = "<blank>";

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Token ids over the vocabulary without blank.
using TokenSequence = std::vector<TokenId>;

/// One label per frame; blank allowed.
using AlignmentPath = std::vector<TokenId>;

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Raised for malformed input files and violated type invariants.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation's precondition does not hold.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Log-domain numerics

/// log(exp(a) + exp(b)); either argument may be -inf.
double LogAdd(double a, double b);

/// log(sum_i exp(v_i)), reduced left to right. Empty input gives -inf.
double LogSumExp(std::span<const double> values);

/// Natural log that maps 0 to -inf.
inline double SafeLog(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  /// Validates: first token is "<blank>", all tokens distinct and non-empty.
  static Vocabulary FromTokens(std::vector<std::string> tokens);
  /// One token per line, line index is the id.
  static Vocabulary Load(const std::filesystem::path &path);

  void Save(const std::filesystem::path &path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string &token(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string> &tokens() const { return tokens_; }
  std::optional<TokenId> Find(std::string_view token) const;
  std::size_t max_token_bytes() const { return max_token_bytes_; }

  /// Concatenates token strings; blank renders as nothing.
  std::string Detokenize(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_token_bytes_ = 0;
};

// ---------------------------------------------------------------------------
// Posteriorgram

/// T x |V'| per-frame distributions. Immutable once built.
///
/// Values are kept exactly as supplied (so the file round trip is lossless);
/// every accessor works on the row-normalized distribution.
class Posteriorgram {
 public:
  /// Row-normalization tolerance.
  static constexpr double kRowTolerance = 1e-5;

  /// Validates and builds. Rows must sum to 1 within kRowTolerance and every
  /// entry must lie in [0, 1].
  static Posteriorgram FromMatrix(Matrix probs,
                                  std::optional<int> layer = std::nullopt);

  std::size_t num_frames() const { return static_cast<std::size_t>(raw_.rows()); }
  std::size_t num_tokens() const { return static_cast<std::size_t>(raw_.cols()); }

  double prob(std::size_t t, TokenId k) const { return norm_(t, k); }
  double log_prob(std::size_t t, TokenId k) const { return log_(t, k); }

  /// Normalized probabilities.
  const Matrix &probs() const { return norm_; }
  const Matrix &log_probs() const { return log_; }
  /// Values as supplied, before normalization.
  const Matrix &raw() const { return raw_; }

  std::optional<int> layer() const { return layer_; }
  Posteriorgram WithLayer(std::optional<int> layer) const;

 private:
  Matrix raw_;
  Matrix norm_;
  Matrix log_;
  std::optional<int> layer_;
};

/// Reads a PGM1 file (see README for the byte layout).
Posteriorgram LoadPosteriorgram(const std::filesystem::path &path);
void SavePosteriorgram(const Posteriorgram &z, const std::filesystem::path &path);

/// Little-endian helpers shared by the PGM1, feature and model blob code.
std::vector<float> ReadFloat32(std::istream &in, std::size_t count);
void WriteFloat32(std::ostream &out, std::span<const float> values);
std::uint32_t ReadU32(std::istream &in);
void WriteU32(std::ostream &out, std::uint32_t v);

// ---------------------------------------------------------------------------
// Keywords

struct Keyword {
  std::string surface;
  TokenSequence ids;
};

/// Greedy longest-match segmentation of `surface` into vocabulary tokens.
/// Throws FormatError naming the byte offset of the first unmatchable input.
Keyword TokenizeKeyword(std::string_view surface, const Vocabulary &vocab);

/// Keyword surfaces, one per line. Blank lines and '#' comments skipped;
/// anything after a tab (the IV/OOV tag) is dropped.
std::vector<std::string> LoadKeywordSurfaces(const std::filesystem::path &path);

/// Reads lines of a UTF-8 text file, stripping a trailing '\r'.
std::vector<std::string> ReadLines(const std::filesystem::path &path);

}  // namespace wctcb

#endif  // WCTCB_CORE_H_
