// wctcb/fixture.h

// Synthetic fixtures for the biasing pipeline.
//
// A recovery fixture is an utterance whose keyword is acoustically confusable
// with a "corruption": at each keyword frame the input features rank the
// corrupted token slightly above the true one, so the plain self-conditioned
// model transcribes the corruption. Non-keyword tokens are unambiguous. The
// heads of the intermediate layers are deliberately flat (low-confidence
// lower layers) and the final head is sharp.

#ifndef WCTCB_FIXTURE_H_
#define WCTCB_FIXTURE_H_

#include <cstdint>

#include "wctcb/core.h"
#include "wctcb/encoder_sim.h"

namespace wctcb {

struct RecoveryFixtureOptions {
  int num_layers = 7;                 // self-conditioning at 1..N-1
  std::size_t min_length = 8;         // reference tokens
  std::size_t max_length = 14;
  std::size_t min_keyword = 2;
  std::size_t max_keyword = 4;
  double token_logit = 3.0;           // evidence at a token frame
  double blank_logit = 12.0;          // evidence at a blank frame
  double confusion_margin = 0.2;      // corrupted token leads by this much
  double feature_noise = 0.02;        // stddev of additive input noise
  double transform_scale = 1e-4;      // stddev of layer transform entries
  double intermediate_head_scale = 0.3;
  double final_head_scale = 4.0;
  double cond_gain = 16.0;
};

struct RecoveryFixture {
  Vocabulary vocab;
  LayerStack model;
  Matrix features;
  TokenSequence reference;
  Keyword keyword;
  /// What the keyword is misheard as, token for token.
  TokenSequence corruption;
  /// Index of the keyword's first token in `reference`.
  std::size_t keyword_offset = 0;
  /// Frames carrying keyword evidence, inclusive.
  std::size_t keyword_first_frame = 0;
  std::size_t keyword_last_frame = 0;
};

/// Lowercase letters a-z after the blank.
Vocabulary LetterVocabulary();

/// Builds the model and features for a given reference, keyword position and
/// corruption. corruption[i] must differ from the keyword token it replaces.
RecoveryFixture SynthesizeRecoveryFixture(const Vocabulary &vocab,
                                          TokenSequence reference,
                                          std::size_t keyword_offset,
                                          TokenSequence corruption,
                                          const RecoveryFixtureOptions &opts,
                                          std::uint64_t seed);

/// Random reference, keyword span and corruption over `vocab`. The keyword
/// occurs exactly once in the reference.
RecoveryFixture RandomRecoveryFixture(const Vocabulary &vocab,
                                      const RecoveryFixtureOptions &opts,
                                      std::uint64_t seed);

}  // namespace wctcb

#endif  // WCTCB_FIXTURE_H_
