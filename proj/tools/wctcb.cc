// wctcb.cc - command line front end.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "wctcb/bias.h"
#include "wctcb/core.h"
#include "wctcb/ctc.h"
#include "wctcb/decode.h"
#include "wctcb/encoder_sim.h"
#include "wctcb/fixture.h"
#include "wctcb/metrics.h"
#include "wctcb/wctc.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace wctcb;

namespace {

constexpr int kExitUsage = 2;

// Raised for flag combinations the library cannot see (empty keyword file,
// mismatched input lists).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string vocab, keywords, model, lm, triggers, transcripts, refs, hyps, out;
  std::vector<std::string> posteriors, features;
  double theta = -40.0, omega = 0.7, psi = 0.9;
  std::vector<int> bias_layers;
  bool bias_layers_set = false;
  std::string mode = "wctc";
  std::size_t beam = 10, nbest = 1;
  double lm_weight = 0.5, length_penalty = 0.2, kbbs_weight = 0.0;
  bool trace = false;
  unsigned jobs = 1;
  std::uint64_t seed = 1;
  int count = 1;
};

std::string UtteranceId(const std::string &path) { return fs::path(path).stem().string(); }

// Runs fn(0..n-1) on `jobs` workers and returns results in index order.
std::vector<std::string> RunOrdered(std::size_t n, unsigned jobs,
                                    const std::function<std::string(std::size_t)> &fn) {
  std::vector<std::string> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < std::max(1u, jobs); ++j) pool.emplace_back(worker);
  worker();
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

void Emit(const std::vector<std::string> &lines) {
  for (const auto &l : lines)
    if (!l.empty()) std::cout << l;
  std::cout.flush();
}

std::vector<Keyword> LoadKeywords(const std::string &path, const Vocabulary &vocab,
                                  bool required) {
  std::vector<Keyword> kws;
  if (path.empty()) {
    if (required) throw ConfigError("no keywords");
    return kws;
  }
  for (const auto &s : LoadKeywordSurfaces(path)) kws.push_back(TokenizeKeyword(s, vocab));
  if (kws.empty() && required) throw ConfigError("no keywords");
  return kws;
}

json DetectionJson(const Detection &d) {
  json j = {{"keyword", d.keyword.surface},
            {"score", d.log_score},
            {"first_frame", d.first_frame},
            {"last_frame", d.last_frame}};
  if (d.layer) j["layer"] = *d.layer;
  return j;
}

DecodeConfig DecodeFrom(const Options &o) {
  return {o.beam, o.lm_weight, o.length_penalty, o.kbbs_weight};
}

json HypothesisJson(const ScoredHypothesis &h, const Vocabulary &vocab) {
  return {{"text", vocab.Detokenize(h.tokens)},
          {"total", h.total},
          {"acoustic", h.acoustic},
          {"lm", h.lm},
          {"boost", h.boost},
          {"length_terms", h.length_terms}};
}

struct Decoder {
  const Vocabulary &vocab;
  DecodeConfig cfg;
  std::optional<NGramLM> lm;
  std::optional<KeywordTrie> trie;

  std::vector<ScoredHypothesis> operator()(const Posteriorgram &z) const {
    return BeamSearch(z, vocab, cfg, lm ? &*lm : nullptr, trie ? &*trie : nullptr);
  }
};

Decoder MakeDecoder(const Options &o, const Vocabulary &vocab, std::span<const Keyword> kws) {
  Decoder d{vocab, DecodeFrom(o), std::nullopt, std::nullopt};
  if (!o.lm.empty()) d.lm = NGramLM::Load(o.lm);
  if (o.kbbs_weight != 0.0) {
    if (kws.empty()) throw ConfigError("--kbbs-weight needs --keywords");
    d.trie = KeywordTrie::Build(kws);
  }
  return d;
}

// ---------------------------------------------------------------------------

int CmdSpot(const Options &o) {
  const auto vocab = Vocabulary::Load(o.vocab);
  const auto kws = LoadKeywords(o.keywords, vocab, true);
  const SpotConfig cfg{o.theta};
  std::size_t total = 0;
  std::mutex mu;
  auto lines = RunOrdered(o.posteriors.size(), o.jobs, [&](std::size_t i) {
    const auto z = LoadPosteriorgram(o.posteriors[i]);
    const auto found = SpotKeywords(z, kws, cfg, vocab);
    std::string out;
    for (const auto &d : found.detections) {
      json j = DetectionJson(d);
      j["utterance"] = UtteranceId(o.posteriors[i]);
      out += j.dump() + "\n";
    }
    std::lock_guard lock(mu);
    total += found.detections.size();
    return out;
  });
  Emit(lines);
  spdlog::info("{} detections in {} posteriorgrams", total, o.posteriors.size());
  return 0;
}

int CmdDecode(const Options &o) {
  const auto vocab = Vocabulary::Load(o.vocab);
  const auto kws = LoadKeywords(o.keywords, vocab, false);
  const Decoder decode = MakeDecoder(o, vocab, kws);
  Emit(RunOrdered(o.posteriors.size(), o.jobs, [&](std::size_t i) {
    const auto hyps = decode(LoadPosteriorgram(o.posteriors[i]));
    json nbest = json::array();
    for (std::size_t k = 0; k < std::min(o.nbest, hyps.size()); ++k)
      nbest.push_back(HypothesisJson(hyps[k], vocab));
    json j = {{"utterance", UtteranceId(o.posteriors[i])},
              {"text", hyps.empty() ? "" : vocab.Detokenize(hyps.front().tokens)},
              {"hypotheses", nbest}};
    return j.dump() + "\n";
  }));
  return 0;
}

json TraceJson(const RunTrace &t, const Vocabulary &vocab) {
  json layers = json::array();
  for (const auto &l : t.layers) {
    json j = {{"layer", l.layer},
              {"greedy", vocab.Detokenize(GreedyDecode(l.z))},
              {"biased", l.biased_z.has_value()}};
    if (l.biased_z) j["biased_greedy"] = vocab.Detokenize(GreedyDecode(*l.biased_z));
    if (l.biased_hypothesis) j["substituted"] = vocab.Detokenize(*l.biased_hypothesis);
    json dets = json::array();
    for (const auto &d : l.detections) dets.push_back(DetectionJson(d));
    j["detections"] = dets;
    layers.push_back(std::move(j));
  }
  return layers;
}

json ResultJson(const RunTrace &t, const Decoder &decode, const Vocabulary &vocab) {
  const auto hyps = decode(t.final_z);
  json j = {{"greedy", vocab.Detokenize(t.greedy)}};
  if (!hyps.empty()) {
    j["text"] = vocab.Detokenize(hyps.front().tokens);
    j["score"] = hyps.front().total;
  }
  return j;
}

int CmdRun(const Options &o) {
  const auto vocab = Vocabulary::Load(o.vocab);
  const auto model = LoadModel(o.model);
  if (vocab.size() != model.vocab_size())
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                      " tokens, model expects " + std::to_string(model.vocab_size()));
  const auto kws = LoadKeywords(o.keywords, vocab, false);
  if (kws.empty() && o.triggers.empty())
    spdlog::warn("no keywords given; biased output equals unbiased output");

  std::set<int> layers = o.bias_layers_set
                             ? std::set<int>(o.bias_layers.begin(), o.bias_layers.end())
                             : EveryThirdLayer(model.selfcond_layers());
  for (int s : layers)
    if (!model.selfcond_layers().contains(s))
      throw ConfigError("bias layer " + std::to_string(s) +
                        " is not a self-conditioning layer of the model");

  BiasConfig bias{o.omega, layers, o.theta};
  InterBiasConfig inter;
  const bool trigger_mode = o.mode == "trigger";
  if (trigger_mode) {
    if (o.triggers.empty()) throw ConfigError("--mode trigger needs --triggers");
    inter = {o.psi, LoadTriggerMap(o.triggers, vocab), layers};
  }
  const Decoder decode = MakeDecoder(o, vocab, kws);

  Emit(RunOrdered(o.features.size(), o.jobs, [&](std::size_t i) {
    const Matrix x = LoadFeatures(o.features[i]);
    const RunTrace plain = ForwardSelfCond(model, x);
    const RunTrace biased = trigger_mode ? ForwardWithInterBias(model, x, inter)
                                         : ForwardWithBias(model, x, kws, bias, vocab);
    json dets = json::array();
    for (const auto &l : biased.layers)
      for (const auto &d : l.detections) dets.push_back(DetectionJson(d));
    json j = {{"utterance", UtteranceId(o.features[i])},
              {"unbiased", ResultJson(plain, decode, vocab)},
              {"biased", ResultJson(biased, decode, vocab)},
              {"detections", dets}};
    if (o.trace) j["trace"] = TraceJson(biased, vocab);
    return j.dump() + "\n";
  }));
  return 0;
}

int CmdAlign(const Options &o) {
  const auto vocab = Vocabulary::Load(o.vocab);
  const auto texts = ReadLines(o.transcripts);
  if (texts.size() != o.posteriors.size())
    throw ConfigError(std::to_string(texts.size()) + " transcripts for " +
                      std::to_string(o.posteriors.size()) + " posteriorgrams");
  Emit(RunOrdered(o.posteriors.size(), o.jobs, [&](std::size_t i) {
    const auto z = LoadPosteriorgram(o.posteriors[i]);
    const TokenSequence y = texts[i].empty() ? TokenSequence{} : TokenizeKeyword(texts[i], vocab).ids;
    const double loss = CtcLoss(z, y);
    json j = {{"utterance", UtteranceId(o.posteriors[i])}, {"feasible", std::isfinite(loss)}};
    if (std::isfinite(loss)) {
      j["loss"] = loss;
      json path = json::array();
      for (TokenId id : ViterbiAlign(z, y)) path.push_back(vocab.token(id));
      j["path"] = path;
    }
    return j.dump() + "\n";
  }));
  return 0;
}

// Without a vocabulary, text is split into UTF-8 code points.
class Segmenter {
 public:
  explicit Segmenter(const std::string &vocab_path) {
    if (!vocab_path.empty()) vocab_ = Vocabulary::Load(vocab_path);
  }
  TokenSequence operator()(const std::string &text) {
    if (text.empty()) return {};
    if (vocab_) return TokenizeKeyword(text, *vocab_).ids;
    TokenSequence out;
    for (std::size_t i = 0; i < text.size();) {
      std::size_t len = 1;
      while (i + len < text.size() && (static_cast<unsigned char>(text[i + len]) & 0xC0) == 0x80)
        ++len;
      auto [it, _] = ids_.try_emplace(text.substr(i, len), static_cast<TokenId>(ids_.size() + 1));
      out.push_back(it->second);
      i += len;
    }
    return out;
  }

 private:
  std::optional<Vocabulary> vocab_;
  std::map<std::string, TokenId> ids_;
};

int CmdEval(const Options &o) {
  Segmenter seg(o.vocab);
  std::vector<TokenSequence> refs, hyps;
  for (const auto &l : ReadLines(o.refs)) refs.push_back(seg(l));
  for (const auto &l : ReadLines(o.hyps)) hyps.push_back(seg(l));
  if (refs.size() != hyps.size())
    throw ConfigError(std::to_string(refs.size()) + " references but " +
                      std::to_string(hyps.size()) + " hypotheses");

  std::vector<Keyword> kws;
  std::vector<char> oov;
  if (!o.keywords.empty()) {
    for (std::string line : ReadLines(o.keywords)) {
      if (line.empty() || line.front() == '#') continue;
      bool is_oov = true;
      if (auto tab = line.find('\t'); tab != std::string::npos) {
        const std::string tag = line.substr(tab + 1);
        if (tag == "IV") is_oov = false;
        else if (tag != "OOV") throw FormatError("keyword tag must be IV or OOV: " + tag);
        line.resize(tab);
      }
      kws.push_back({line, seg(line)});
      oov.push_back(is_oov);
    }
  }
  std::unique_ptr<bool[]> flags(new bool[oov.size()]);
  for (std::size_t k = 0; k < oov.size(); ++k) flags[k] = oov[k];
  const auto report =
      KeywordF1(refs, hyps, kws, std::span<const bool>(flags.get(), oov.size()));

  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  json per = json::object();
  for (const auto &[surface, c] : report.keywords)
    per[surface] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"oov", c.oov}};
  json j = {{"cer", report.cer},
            {"edits", report.edits},
            {"ref_length", report.ref_length},
            {"f1_oov", opt(report.f1_oov)},
            {"f1_iv", opt(report.f1_iv)},
            {"keywords", per}};
  std::cout << j.dump() << "\n";
  spdlog::info("CER {:.4f}", report.cer);
  return 0;
}

void WriteText(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  out << text;
}

int CmdGenFixture(const Options &o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  if (o.count < 1) throw ConfigError("--count must be positive");
  const auto vocab = LetterVocabulary();
  const RecoveryFixtureOptions opts;
  for (int i = 0; i < o.count; ++i) {
    const fs::path dir = o.count == 1 ? fs::path(o.out) : fs::path(o.out) / ("fx" + std::to_string(i));
    fs::create_directories(dir);
    const auto fx = RandomRecoveryFixture(vocab, opts, o.seed + static_cast<std::uint64_t>(i));
    vocab.Save(dir / "vocab.txt");
    SaveModel(fx.model, dir / "model");
    SaveFeatures(fx.features, dir / "utt.fea");
    WriteText(dir / "keywords.txt", fx.keyword.surface + "\tOOV\n");
    WriteText(dir / "ref.txt", vocab.Detokenize(fx.reference) + "\n");
    WriteText(dir / "triggers.tsv",
              vocab.Detokenize(fx.corruption) + "\t" + fx.keyword.surface + "\n");
    // Posteriorgrams of the unbiased run: the first bias layer (where the
    // keyword is spotted) and the final layer.
    const RunTrace run = ForwardSelfCond(fx.model, fx.features);
    const auto first_bias = *EveryThirdLayer(fx.model.selfcond_layers()).begin();
    for (const auto &l : run.layers)
      if (l.layer == first_bias) SavePosteriorgram(l.z, dir / "utt.pgm");
    SavePosteriorgram(run.final_z, dir / "final.pgm");
    json meta = {{"keyword", fx.keyword.surface},
                 {"corruption", vocab.Detokenize(fx.corruption)},
                 {"reference", vocab.Detokenize(fx.reference)},
                 {"keyword_frames", {fx.keyword_first_frame, fx.keyword_last_frame}},
                 {"posteriorgram_layer", first_bias}};
    WriteText(dir / "fixture.json", meta.dump(2) + "\n");
    std::cout << json{{"dir", dir.string()}, {"keyword", fx.keyword.surface}}.dump() << "\n";
  }
  return 0;
}

void SetupLogging() {
  auto logger = spdlog::stderr_color_mt("wctcb");
  logger->set_pattern("%^[%l]%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char *env = std::getenv("WCTC_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char **argv) {
  SetupLogging();
  CLI::App app{"Wildcard-CTC keyword spotting, biasing and decoding"};
  app.require_subcommand(1);
  Options o;

  auto add_vocab = [&](CLI::App *c, bool required) {
    auto *opt = c->add_option("--vocab", o.vocab, "Vocabulary file, one token per line");
    if (required) opt->required();
  };
  auto add_decode = [&](CLI::App *c) {
    c->add_option("--lm", o.lm, "ARPA language model");
    c->add_option("--beam", o.beam, "Beam size")->capture_default_str();
    c->add_option("--lm-weight", o.lm_weight, "LM fusion weight")->capture_default_str();
    c->add_option("--length-penalty", o.length_penalty, "Per-token bonus")->capture_default_str();
    c->add_option("--kbbs-weight", o.kbbs_weight, "Keyword boost weight (0 = off)")
        ->capture_default_str();
  };
  auto add_jobs = [&](CLI::App *c) {
    c->add_option("--jobs", o.jobs, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
  };

  auto *spot = app.add_subcommand("spot", "Spot keywords in posteriorgrams");
  add_vocab(spot, true);
  spot->add_option("--keywords", o.keywords, "Keyword list")->required();
  spot->add_option("--posteriors", o.posteriors, "PGM1 files")->required();
  spot->add_option("--theta", o.theta, "Detection threshold")->capture_default_str();
  add_jobs(spot);

  auto *decode = app.add_subcommand("decode", "Beam search over posteriorgrams");
  add_vocab(decode, true);
  decode->add_option("--posteriors", o.posteriors, "PGM1 files")->required();
  decode->add_option("--keywords", o.keywords, "Keyword list for boosting");
  decode->add_option("--nbest", o.nbest, "Hypotheses per utterance")->capture_default_str();
  add_decode(decode);
  add_jobs(decode);

  auto *run = app.add_subcommand("run", "Encoder forward with and without biasing");
  add_vocab(run, true);
  run->add_option("--model", o.model, "Model manifest")->required();
  run->add_option("--features", o.features, "FEA1 files")->required();
  run->add_option("--keywords", o.keywords, "Keyword list");
  run->add_option("--theta", o.theta, "Detection threshold")->capture_default_str();
  run->add_option("--omega", o.omega, "Mask weight")->capture_default_str();
  run->add_option("--psi", o.psi, "Alignment weight in trigger mode")->capture_default_str();
  run->add_option("--bias-layers", o.bias_layers, "Bias layers (default: every third self-conditioning layer)")
      ->delimiter(',')
      ->each([&](const std::string &) { o.bias_layers_set = true; });
  run->add_option("--mode", o.mode, "wctc or trigger")
      ->capture_default_str()
      ->check(CLI::IsMember({"wctc", "trigger"}));
  run->add_option("--triggers", o.triggers, "Trigger map (trigger<TAB>keyword)");
  run->add_flag("--trace", o.trace, "Per-layer trace");
  add_decode(run);
  add_jobs(run);

  auto *align = app.add_subcommand("align", "Viterbi forced alignment");
  add_vocab(align, true);
  align->add_option("--posteriors", o.posteriors, "PGM1 files")->required();
  align->add_option("--transcripts", o.transcripts, "One transcript per posteriorgram")->required();
  add_jobs(align);

  auto *eval = app.add_subcommand("eval", "CER and keyword F1");
  add_vocab(eval, false);
  eval->add_option("--refs", o.refs, "Reference lines")->required();
  eval->add_option("--hyps", o.hyps, "Hypothesis lines")->required();
  eval->add_option("--keywords", o.keywords, "Keywords, optionally tagged IV or OOV");

  auto *gen = app.add_subcommand("gen-fixture", "Write a synthetic recovery fixture");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  gen->add_option("--count", o.count, "Number of fixtures")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*spot) return CmdSpot(o);
    if (*decode) return CmdDecode(o);
    if (*run) return CmdRun(o);
    if (*align) return CmdAlign(o);
    if (*eval) return CmdEval(o);
    if (*gen) return CmdGenFixture(o);
  } catch (const FormatError &e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const InvalidArgument &e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const ConfigError &e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
