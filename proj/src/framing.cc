// rsan/framing.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/framing.h"

#include <algorithm>
#include <cmath>

namespace rsan {

int BlockLayout::block_samples() const {
  return static_cast<int>(std::lround(block_len * sample_rate));
}

int BlockLayout::frames_per_block() const { return block_samples() / stft.hop; }

void BlockLayout::Validate() const {
  ValidateStftConfig(stft);
  if (sample_rate <= 0) throw Error("sample rate must be positive");
  if (!(block_len > 0.0)) throw Error("block length must be positive");
  if (block_samples() % stft.hop != 0)
    throw Error("block length must be a whole number of hops");
}

int BlockLayout::NumBlocks(Eigen::Index length) const {
  const Eigen::Index n = block_samples();
  return std::max<int>(1, static_cast<int>((length + n - 1) / n));
}

ComplexSpectrogram FramedStft(const Eigen::ArrayXd& x, const BlockLayout& layout, int blocks) {
  layout.Validate();
  const Eigen::Index total = static_cast<Eigen::Index>(blocks) * layout.block_samples();
  Eigen::ArrayXd padded = Eigen::ArrayXd::Zero(total + layout.pad());
  const Eigen::Index n = std::min<Eigen::Index>(x.size(), total);
  padded.segment(layout.pad(), n) = x.head(n);
  return Stft(padded, layout.stft);
}

Eigen::ArrayXd FramedIstft(const ComplexSpectrogram& spec, const BlockLayout& layout,
                           Eigen::Index length) {
  const Eigen::ArrayXd y = Istft(spec, layout.stft);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(length);
  const Eigen::Index n = std::min<Eigen::Index>(length, y.size() - layout.pad());
  if (n > 0) out.head(n) = y.segment(layout.pad(), n);
  return out;
}

FramedSession FrameSession(const AudioSignal& mixture, const BlockLayout& layout) {
  if (mixture.channels() != 2) throw Error("mixture must have 2 channels");
  if (mixture.sample_rate != layout.sample_rate)
    throw Error("mixture sample rate " + std::to_string(mixture.sample_rate) +
                " does not match configured " + std::to_string(layout.sample_rate));
  if (mixture.length() == 0) throw Error("empty mixture");
  FramedSession s;
  s.layout = layout;
  s.length = mixture.length();
  const int blocks = layout.NumBlocks(mixture.length());
  s.ch0 = FramedStft(mixture.channel(0), layout, blocks);
  s.ch1 = FramedStft(mixture.channel(1), layout, blocks);
  for (int b = 0; b < blocks; ++b) {
    BlockFeatures f;
    f.index = b;
    const ComplexSpectrogram y0 = BlockRows(s.ch0, layout, b);
    const ComplexSpectrogram y1 = BlockRows(s.ch1, layout, b);
    f.magnitude = y0.abs();
    f.ipd = Ipd(y0, y1);
    s.blocks.push_back(std::move(f));
  }
  return s;
}

std::set<std::string> ActiveInBlock(const Timeline& timeline, const BlockLayout& layout,
                                    int b, double min_activity) {
  const double lo = layout.BlockStart(b), hi = lo + layout.block_len;
  std::map<std::string, double> covered;
  for (const auto& seg : timeline.segments()) {
    const double o = std::min(seg.end, hi) - std::max(seg.start, lo);
    if (o > 0.0) covered[seg.speaker] += o;
  }
  std::set<std::string> out;
  for (const auto& [id, t] : covered)
    if (t >= min_activity && t > 0.0) out.insert(id);
  return out;
}

std::vector<int> CumulativeSpeakerCounts(const Timeline& timeline, const BlockLayout& layout,
                                         int blocks, double min_activity) {
  std::set<std::string> seen;
  std::vector<int> counts;
  for (int b = 0; b < blocks; ++b) {
    for (const auto& id : ActiveInBlock(timeline, layout, b, min_activity)) seen.insert(id);
    counts.push_back(static_cast<int>(seen.size()));
  }
  return counts;
}

std::vector<OracleBlock> MakeOracleBlocks(const RenderedMeeting& meeting,
                                          const BlockLayout& layout, double min_activity) {
  const int blocks = layout.NumBlocks(meeting.mixture.length());
  const ComplexSpectrogram noise = FramedStft(meeting.noise.channel(0), layout, blocks);
  std::map<std::string, ComplexSpectrogram> refs;
  for (const auto& [id, sig] : meeting.references)
    refs.emplace(id, FramedStft(sig.channel(0), layout, blocks));
  std::vector<OracleBlock> out;
  for (int b = 0; b < blocks; ++b) {
    OracleBlock ob;
    ob.noise = BlockRows(noise, layout, b).abs();
    for (const auto& [id, spec] : refs) ob.sources.emplace(id, BlockRows(spec, layout, b).abs());
    ob.active = ActiveInBlock(meeting.timeline, layout, b, min_activity);
    out.push_back(std::move(ob));
  }
  return out;
}

}  // namespace rsan
