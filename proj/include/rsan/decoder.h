// rsan/decoder.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_DECODER_H_
#define RSAN_DECODER_H_

#include <vector>

#include "rsan/audio.h"
#include "rsan/estimator.h"
#include "rsan/framing.h"

namespace rsan {

struct DecoderConfig {
  double t_resmask = 0.2;
  double t_silent = 0.05;
  double block_len = 10.0;  // seconds
  int max_iterations = 6;   // noise + 5 speakers
  bool consistency_check = true;
  // Acceptance threshold of the consistency check; negative means t_resmask.
  double t_consistency = -1.0;

  double consistency_threshold() const {
    return t_consistency < 0.0 ? t_resmask : t_consistency;
  }
  void Validate() const;
};

// Decoder memory carried across blocks. Slot 0 is the noise slot.
struct SessionState {
  std::vector<SpeakerEmbedding> slots;
  std::vector<int> iterations;             // I_b per processed block
  std::vector<BlockFeatures> cache;        // for consistency re-decoding
  std::vector<std::vector<Maskd>> masks;   // per block, per slot at that time
  std::vector<int> counts;                 // speaker slots after each block
  std::vector<int> rejected_blocks;

  int speaker_count() const { return slots.empty() ? 0 : static_cast<int>(slots.size()) - 1; }
};

struct BlockDecode {
  std::vector<Maskd> masks;            // noise, known slots, then new slots
  std::vector<SpeakerEmbedding> embeddings;
  std::vector<double> residual_means;  // after every iteration
  int iterations = 0;
  int known = 0;                       // speaker slots before this block
  bool count_changed = false;
};

// Runs the recursion on one block without touching `state`: noise slot
// first, then every known slot with its stored embedding, then zero-
// embedding probes while the mean residual stays at or above t_resmask.
BlockDecode DecodeBlock(const BlockFeatures& features, const SessionState& state,
                        const MaskEstimator& estimator, const DecoderConfig& cfg);

struct ConsistencyResult {
  bool accepted = true;
  // Per past block, the largest mean mask over the new slots.
  std::vector<double> new_slot_means;
};

// Re-decodes every cached block with the pre-increase embeddings followed
// by the new slots' embeddings; accepts iff no new slot has mean mask at or
// above the consistency threshold in any past block.
ConsistencyResult ConsistencyCheck(const SessionState& state,
                                   const std::vector<SpeakerEmbedding>& new_embeddings,
                                   const MaskEstimator& estimator, const DecoderConfig& cfg);

// Decodes one block and commits it to `state`, running the consistency
// check on a count increase when enabled.
BlockDecode Step(const BlockFeatures& features, SessionState* state,
                 const MaskEstimator& estimator, const DecoderConfig& cfg);

struct SessionResult {
  std::vector<AudioSignal> streams;         // slot 0 noise, then speakers (mono)
  std::vector<std::vector<bool>> activity;  // per block, per slot
  std::vector<int> counts;                  // speaker count per block
  std::vector<int> iterations;
  std::vector<int> rejected_blocks;
  int final_count = 0;
};

SessionResult DecodeSession(const FramedSession& session, const MaskEstimator& estimator,
                            const DecoderConfig& cfg);
SessionResult DecodeSession(const AudioSignal& mixture, const MaskEstimator& estimator,
                            const DecoderConfig& cfg, const StftConfig& stft = {});

}  // namespace rsan

#endif  // RSAN_DECODER_H_
