// encoder_sim.cc

#include "wctcb/encoder_sim.h"

#include <array>
#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"
#include "wctcb/ctc.h"

namespace wctcb {

namespace {

void CheckShape(const Matrix &m, std::size_t rows, std::size_t cols,
                const std::string &what) {
  if (static_cast<std::size_t>(m.rows()) != rows ||
      static_cast<std::size_t>(m.cols()) != cols)
    throw FormatError(what + " is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  if (!m.allFinite()) throw FormatError(what + " has non-finite entries");
}

void CheckShape(const RowVector &v, std::size_t cols, const std::string &what) {
  if (static_cast<std::size_t>(v.size()) != cols)
    throw FormatError(what + " has length " + std::to_string(v.size()) +
                      ", expected " + std::to_string(cols));
  if (!v.allFinite()) throw FormatError(what + " has non-finite entries");
}

}  // namespace

LayerStack::LayerStack(std::size_t dim, std::size_t vocab_size,
                       std::vector<EncoderLayer> layers, std::set<int> selfcond_layers)
    : dim_(dim), vocab_size_(vocab_size), layers_(std::move(layers)),
      selfcond_(std::move(selfcond_layers)) {
  if (layers_.empty()) throw FormatError("model has no layers");
  if (dim_ == 0) throw FormatError("model dimension must be positive");
  if (vocab_size_ < 2) throw FormatError("vocabulary must include blank and a token");
  const int n = static_cast<int>(layers_.size());
  for (int s : selfcond_)
    if (s < 1 || s >= n)
      throw FormatError("self-conditioning layer " + std::to_string(s) +
                        " outside 1.." + std::to_string(n - 1));
  for (int i = 0; i < n; ++i) {
    const std::string tag = "layer " + std::to_string(i + 1) + " ";
    const auto &l = layers_[i];
    CheckShape(l.transform, dim_, dim_, tag + "transform");
    CheckShape(l.offset, dim_, tag + "offset");
    CheckShape(l.head, dim_, vocab_size_, tag + "head");
    CheckShape(l.cond, vocab_size_, dim_, tag + "cond");
    CheckShape(l.cond_offset, dim_, tag + "cond_offset");
  }
}

// ---------------------------------------------------------------------------
// Blobs and manifests

Matrix LoadBlob(const std::filesystem::path &path, std::size_t rows,
                std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing blob " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes != rows * cols * 4)
    throw FormatError("blob " + path.string() + " holds " + std::to_string(bytes) +
                      " bytes, expected " + std::to_string(rows * cols * 4));
  const auto values = ReadFloat32(in, rows * cols);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = values[i];
  return m;
}

void SaveBlob(const Matrix &m, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  std::vector<float> values(m.data(), m.data() + m.size());
  WriteFloat32(out, values);
}

namespace {

constexpr std::array<const char *, 5> kBlobNames = {"transform", "offset", "head",
                                                    "cond", "cond_offset"};

}  // namespace

LayerStack LoadModel(const std::filesystem::path &manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("bad manifest " + manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  try {
    const auto n = j.at("num_layers").get<std::size_t>();
    const auto dim = j.at("dim").get<std::size_t>();
    const auto vocab = j.at("vocab_size").get<std::size_t>();
    const auto selfcond = j.at("selfcond_layers").get<std::set<int>>();
    const auto &blobs = j.at("blobs");
    if (!blobs.is_array() || blobs.size() != n)
      throw FormatError("manifest lists " + std::to_string(blobs.size()) +
                        " blob sets for " + std::to_string(n) + " layers");
    std::vector<EncoderLayer> layers;
    for (std::size_t i = 0; i < n; ++i) {
      const auto &b = blobs[i];
      for (const char *name : kBlobNames)
        if (!b.contains(name))
          throw FormatError("layer " + std::to_string(i + 1) + " missing blob \"" +
                            name + "\"");
      EncoderLayer l;
      l.transform = LoadBlob(dir / b["transform"].get<std::string>(), dim, dim);
      l.offset = LoadBlob(dir / b["offset"].get<std::string>(), 1, dim);
      l.head = LoadBlob(dir / b["head"].get<std::string>(), dim, vocab);
      l.cond = LoadBlob(dir / b["cond"].get<std::string>(), vocab, dim);
      l.cond_offset = LoadBlob(dir / b["cond_offset"].get<std::string>(), 1, dim);
      layers.push_back(std::move(l));
    }
    return LayerStack(dim, vocab, std::move(layers), selfcond);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("bad manifest " + manifest.string() + ": " + e.what());
  }
}

std::filesystem::path SaveModel(const LayerStack &model,
                                const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["num_layers"] = model.num_layers();
  j["dim"] = model.dim();
  j["vocab_size"] = model.vocab_size();
  j["selfcond_layers"] = model.selfcond_layers();
  j["blobs"] = nlohmann::json::array();
  for (std::size_t i = 1; i <= model.num_layers(); ++i) {
    const auto &l = model.layer(static_cast<int>(i));
    const std::string prefix = "layer" + std::to_string(i) + ".";
    nlohmann::json b;
    const std::array<Matrix, 5> parts = {l.transform, l.offset, l.head, l.cond,
                                         l.cond_offset};
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::string file = prefix + kBlobNames[p] + ".f32";
      SaveBlob(parts[p], dir / file);
      b[kBlobNames[p]] = file;
    }
    j["blobs"].push_back(std::move(b));
  }
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  return path;
}

namespace {

constexpr std::array<char, 4> kFeaMagic = {'F', 'E', 'A', '1'};

}  // namespace

Matrix LoadFeatures(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kFeaMagic)
    throw FormatError("bad magic in " + path.string());
  const std::uint32_t frames = ReadU32(in);
  const std::uint32_t dim = ReadU32(in);
  if (frames == 0) throw FormatError("empty feature sequence");
  const auto values = ReadFloat32(in, static_cast<std::size_t>(frames) * dim);
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after payload in " + path.string());
  Matrix x(frames, dim);
  for (std::size_t i = 0; i < values.size(); ++i) x.data()[i] = values[i];
  if (!x.allFinite()) throw FormatError("non-finite feature in " + path.string());
  return x;
}

void SaveFeatures(const Matrix &x, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kFeaMagic.data(), 4);
  WriteU32(out, static_cast<std::uint32_t>(x.rows()));
  WriteU32(out, static_cast<std::uint32_t>(x.cols()));
  std::vector<float> values(x.data(), x.data() + x.size());
  WriteFloat32(out, values);
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

// Returns the distribution to project at a self-conditioning layer. The
// default is the head output itself.
using Conditioner = std::function<Matrix(int layer, const Posteriorgram &z,
                                         LayerTrace &trace)>;

RunTrace Forward(const LayerStack &model, const Matrix &x, const Conditioner &cond) {
  if (static_cast<std::size_t>(x.cols()) != model.dim())
    throw InvalidArgument("features have width " + std::to_string(x.cols()) +
                          ", model expects " + std::to_string(model.dim()));
  if (x.rows() == 0) throw InvalidArgument("empty feature sequence");
  if (!x.allFinite()) throw InvalidArgument("non-finite input features");

  RunTrace trace;
  Matrix h = x;
  const int n_layers = static_cast<int>(model.num_layers());
  for (int n = 1; n <= n_layers; ++n) {
    const EncoderLayer &l = model.layer(n);
    Matrix pre = h * l.transform;
    pre.rowwise() += l.offset;
    h += pre.array().tanh().matrix();
    if (!h.allFinite())
      throw InvalidArgument("non-finite activation at layer " + std::to_string(n));

    if (n == n_layers) {
      trace.final_z = Posteriorgram::FromMatrix(Softmax(h * l.head), n);
      break;
    }
    if (!model.selfcond_layers().contains(n)) continue;

    LayerTrace lt;
    lt.layer = n;
    lt.z = Posteriorgram::FromMatrix(Softmax(h * l.head), n);
    const Matrix zc = cond(n, lt.z, lt);
    h += ProjectBias(zc, l.cond, l.cond_offset);
    if (!h.allFinite())
      throw InvalidArgument("non-finite activation after conditioning at layer " +
                            std::to_string(n));
    trace.layers.push_back(std::move(lt));
  }
  trace.greedy = GreedyDecode(trace.final_z);
  return trace;
}

}  // namespace

RunTrace ForwardSelfCond(const LayerStack &model, const Matrix &x) {
  return Forward(model, x, [](int, const Posteriorgram &z, LayerTrace &) {
    return z.probs();
  });
}

RunTrace ForwardWithBias(const LayerStack &model, const Matrix &x,
                         std::span<const Keyword> keywords, const BiasConfig &cfg,
                         const Vocabulary &vocab) {
  for (int s : cfg.bias_layers)
    if (!model.selfcond_layers().contains(s))
      throw InvalidArgument("bias layer " + std::to_string(s) +
                            " is not a self-conditioning layer");
  if (vocab.size() != model.vocab_size())
    throw InvalidArgument("vocabulary size does not match the model");
  const SpotConfig spot{cfg.theta};
  return Forward(model, x, [&](int n, const Posteriorgram &z, LayerTrace &lt) {
    if (!cfg.bias_layers.contains(n) || keywords.empty()) return z.probs();
    SpotResult found = SpotKeywords(z, keywords, spot, vocab);
    const BiasMask mask = AggregateMasks(found.masks, z.num_frames(), z.num_tokens());
    lt.detections = std::move(found.detections);
    if (mask.empty()) return z.probs();
    lt.biased_z = BiasInterpolate(z, mask, cfg.omega);
    return lt.biased_z->probs();
  });
}

RunTrace ForwardWithInterBias(const LayerStack &model, const Matrix &x,
                              const InterBiasConfig &cfg) {
  for (int s : cfg.layers)
    if (!model.selfcond_layers().contains(s))
      throw InvalidArgument("trigger-bias layer " + std::to_string(s) +
                            " is not a self-conditioning layer");
  if (!(cfg.psi >= 0.0 && cfg.psi <= 1.0))
    throw InvalidArgument("psi must lie in [0, 1]");
  return Forward(model, x, [&](int n, const Posteriorgram &z, LayerTrace &lt) {
    if (!cfg.layers.contains(n) || cfg.trigger_map.empty()) return z.probs();
    const TokenSequence hyp = GreedyDecode(z);
    TokenSequence biased = InterBiasSubstitute(hyp, cfg.trigger_map);
    if (biased == hyp) return z.probs();
    auto mixed = InterBiasDistribution(z, biased, cfg.psi);
    if (!mixed) return z.probs();
    lt.biased_hypothesis = std::move(biased);
    lt.biased_z = Posteriorgram::FromMatrix(std::move(*mixed), n);
    return lt.biased_z->probs();
  });
}

std::set<int> EveryThirdLayer(const std::set<int> &selfcond_layers) {
  std::set<int> out;
  int i = 0;
  for (int n : selfcond_layers)
    if (++i % 3 == 0) out.insert(n);
  return out;
}

}  // namespace wctcb
