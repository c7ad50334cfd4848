// rsan/framing.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_FRAMING_H_
#define RSAN_FRAMING_H_

#include <set>
#include <string>
#include <vector>

#include "rsan/audio.h"
#include "rsan/estimator.h"
#include "rsan/meeting_sim.h"
#include "rsan/stft.h"
#include "rsan/timeline.h"

namespace rsan {

// How a session is cut into disjoint blocks of STFT frames. The signal is
// front-padded by window_len - hop samples so that frame t ends at sample
// (t + 1) * hop, and back-padded to a whole number of blocks.
struct BlockLayout {
  int sample_rate = 8000;
  double block_len = 10.0;  // seconds
  StftConfig stft;

  int block_samples() const;
  int frames_per_block() const;
  int pad() const { return stft.window_len - stft.hop; }
  // ceil(length / block_samples); a session shorter than one block still
  // yields one (zero-padded) block.
  int NumBlocks(Eigen::Index length) const;
  double BlockStart(int b) const { return b * block_len; }
  void Validate() const;
};

// STFT of one channel, padded to `blocks` whole blocks.
ComplexSpectrogram FramedStft(const Eigen::ArrayXd& x, const BlockLayout& layout, int blocks);
// Inverse of FramedStft trimmed back to `length` samples.
Eigen::ArrayXd FramedIstft(const ComplexSpectrogram& spec, const BlockLayout& layout,
                           Eigen::Index length);

template <typename Derived>
auto BlockRows(const Eigen::DenseBase<Derived>& x, const BlockLayout& layout, int b) {
  const int n = layout.frames_per_block();
  return x.derived().middleRows(static_cast<Eigen::Index>(b) * n, n);
}

struct FramedSession {
  BlockLayout layout;
  Eigen::Index length = 0;  // samples of the original mixture
  ComplexSpectrogram ch0, ch1;
  std::vector<BlockFeatures> blocks;
};

FramedSession FrameSession(const AudioSignal& mixture, const BlockLayout& layout);

// Speakers whose segments cover at least `min_activity` seconds of block b.
std::set<std::string> ActiveInBlock(const Timeline& timeline, const BlockLayout& layout,
                                    int b, double min_activity);

// Speakers seen so far by the end of each block: the reference source count.
std::vector<int> CumulativeSpeakerCounts(const Timeline& timeline, const BlockLayout& layout,
                                         int blocks, double min_activity = 0.05);

// Ground-truth context for the oracle estimator, reference channel 0.
std::vector<OracleBlock> MakeOracleBlocks(const RenderedMeeting& meeting,
                                          const BlockLayout& layout,
                                          double min_activity = 0.05);

}  // namespace rsan

#endif  // RSAN_FRAMING_H_
