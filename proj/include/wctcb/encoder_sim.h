// wctcb/encoder_sim.h

// A small deterministic layer stack with self-conditioning.
//
// Layer n (1-based) maps X'(n-1) to
//     X(n)  = X'(n-1) + tanh(X'(n-1) * A_n + c_n)
// and, for n in the self-conditioning set,
//     Z(n)  = Softmax(X(n) * H_n)
//     X'(n) = X(n) + Z(n) * P_n + b_n
// The last layer only produces Z = Softmax(X(N) * H_N). Biasing replaces
// Z(n) in the conditioning term at selected layers.

#ifndef WCTCB_ENCODER_SIM_H_
#define WCTCB_ENCODER_SIM_H_

#include <optional>
#include <set>

#include "wctcb/bias.h"
#include "wctcb/core.h"
#include "wctcb/wctc.h"

namespace wctcb {

struct EncoderLayer {
  Matrix transform;   // D x D
  RowVector offset;   // D
  Matrix head;        // D x |V'|
  Matrix cond;        // |V'| x D
  RowVector cond_offset;  // D
};

class LayerStack {
 public:
  LayerStack() = default;
  /// Validates shapes, finiteness, and that self-conditioning layers lie in
  /// 1..N-1.
  LayerStack(std::size_t dim, std::size_t vocab_size, std::vector<EncoderLayer> layers,
             std::set<int> selfcond_layers);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t vocab_size() const { return vocab_size_; }
  /// 1-based.
  const EncoderLayer &layer(int n) const { return layers_.at(n - 1); }
  const std::set<int> &selfcond_layers() const { return selfcond_; }

 private:
  std::size_t dim_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<EncoderLayer> layers_;
  std::set<int> selfcond_;
};

/// Reads a JSON manifest plus one float32 blob per matrix/vector. Blob paths
/// are relative to the manifest's directory.
LayerStack LoadModel(const std::filesystem::path &manifest);

/// Writes manifest.json and blobs into `dir`; returns the manifest path.
std::filesystem::path SaveModel(const LayerStack &model, const std::filesystem::path &dir);

/// Raw row-major float32 blob of exactly rows * cols values.
Matrix LoadBlob(const std::filesystem::path &path, std::size_t rows, std::size_t cols);
void SaveBlob(const Matrix &m, const std::filesystem::path &path);

/// Feature file: "FEA1", u32 T, u32 D, then T*D float32, all little-endian.
Matrix LoadFeatures(const std::filesystem::path &path);
void SaveFeatures(const Matrix &x, const std::filesystem::path &path);

struct LayerTrace {
  int layer = 0;
  /// Head output before any biasing.
  Posteriorgram z;
  /// Distribution fed to the conditioning projection when it differs from z.
  std::optional<Posteriorgram> biased_z;
  std::vector<Detection> detections;
  /// The trigger-substituted hypothesis, when trigger biasing ran.
  std::optional<TokenSequence> biased_hypothesis;
};

struct RunTrace {
  /// One entry per self-conditioning layer, ascending.
  std::vector<LayerTrace> layers;
  /// Output of the last layer.
  Posteriorgram final_z;
  TokenSequence greedy;
};

/// Plain self-conditioned forward pass.
RunTrace ForwardSelfCond(const LayerStack &model, const Matrix &x);

/// Forward pass with wildcard-CTC biasing at cfg.bias_layers.
/// Throws InvalidArgument if a bias layer does not self-condition.
RunTrace ForwardWithBias(const LayerStack &model, const Matrix &x,
                         std::span<const Keyword> keywords, const BiasConfig &cfg,
                         const Vocabulary &vocab);

/// Forward pass with trigger-map biasing at cfg.layers (self-conditioning
/// layers only). Layers whose greedy hypothesis contains no trigger use plain
/// self-conditioning.
RunTrace ForwardWithInterBias(const LayerStack &model, const Matrix &x,
                              const InterBiasConfig &cfg);

/// Every third element of the sorted self-conditioning set (3rd, 6th, ...).
std::set<int> EveryThirdLayer(const std::set<int> &selfcond_layers);

}  // namespace wctcb

#endif  // WCTCB_ENCODER_SIM_H_
