// rsan/decoder.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/decoder.h"

#include <algorithm>

namespace rsan {

void DecoderConfig::Validate() const {
  if (!(0.0 < t_silent && t_silent < t_resmask && t_resmask < 1.0))
    throw Error("decoder thresholds must satisfy 0 < t_silent < t_resmask < 1");
  if (!(block_len > 0.0)) throw Error("block length must be positive");
  if (max_iterations < 1) throw Error("max_iterations must be at least 1");
  if (t_consistency >= 1.0) throw Error("t_consistency must be below 1");
}

namespace {

MaskEstimate Run(const MaskEstimator& estimator, const BlockFeatures& features,
                 const Maskd& residual, const SpeakerEmbedding& z) {
  try {
    MaskEstimate e = estimator.Estimate({features, residual, z});
    if (e.mask.rows() != features.frames() || e.mask.cols() != features.bins())
      throw Error("estimator returned a mask of the wrong shape");
    return e;
  } catch (const Error& err) {
    throw Error("block " + std::to_string(features.index) + ": " + err.what());
  }
}

void Subtract(Maskd* residual, const Maskd& mask) {
  *residual = (*residual - mask).max(0.0).min(1.0);
}

}  // namespace

BlockDecode DecodeBlock(const BlockFeatures& features, const SessionState& state,
                        const MaskEstimator& estimator, const DecoderConfig& cfg) {
  const SpeakerEmbedding zero = SpeakerEmbedding::Zero(estimator.embedding_dim());
  Maskd residual = Maskd::Ones(features.frames(), features.bins());
  BlockDecode d;
  d.known = state.speaker_count();

  MaskEstimate noise = Run(estimator, features, residual, zero);
  Subtract(&residual, noise.mask);
  d.masks.push_back(std::move(noise.mask));
  d.embeddings.push_back(std::move(noise.embedding));
  d.residual_means.push_back(residual.mean());

  for (int k = 1; k <= d.known; ++k) {
    MaskEstimate e = Run(estimator, features, residual, state.slots[k]);
    if (e.mask.mean() < cfg.t_silent)
      e.mask.setZero();
    else
      Subtract(&residual, e.mask);
    d.masks.push_back(std::move(e.mask));
    d.embeddings.push_back(std::move(e.embedding));
    d.residual_means.push_back(residual.mean());
  }

  d.iterations = 1 + d.known;
  while (residual.mean() >= cfg.t_resmask && d.iterations < cfg.max_iterations) {
    MaskEstimate e = Run(estimator, features, residual, zero);
    ++d.iterations;
    if (e.mask.mean() < cfg.t_silent) {
      d.residual_means.push_back(residual.mean());
      break;
    }
    Subtract(&residual, e.mask);
    d.masks.push_back(std::move(e.mask));
    d.embeddings.push_back(std::move(e.embedding));
    d.residual_means.push_back(residual.mean());
  }
  d.count_changed = static_cast<int>(d.masks.size()) > 1 + d.known;
  return d;
}

ConsistencyResult ConsistencyCheck(const SessionState& state,
                                   const std::vector<SpeakerEmbedding>& new_embeddings,
                                   const MaskEstimator& estimator, const DecoderConfig& cfg) {
  const SpeakerEmbedding zero = SpeakerEmbedding::Zero(estimator.embedding_dim());
  const double threshold = cfg.consistency_threshold();
  ConsistencyResult r;
  for (const auto& features : state.cache) {
    Maskd residual = Maskd::Ones(features.frames(), features.bins());
    Subtract(&residual, Run(estimator, features, residual, zero).mask);
    for (int k = 1; k <= state.speaker_count(); ++k) {
      const Maskd m = Run(estimator, features, residual, state.slots[k]).mask;
      if (m.mean() >= cfg.t_silent) Subtract(&residual, m);
    }
    double worst = 0.0;
    for (const auto& z : new_embeddings) {
      const Maskd m = Run(estimator, features, residual, z).mask;
      const double mean = m.mean();
      worst = std::max(worst, mean);
      if (mean >= cfg.t_silent) Subtract(&residual, m);
    }
    r.new_slot_means.push_back(worst);
    if (worst >= threshold) r.accepted = false;
  }
  return r;
}

BlockDecode Step(const BlockFeatures& features, SessionState* state,
                 const MaskEstimator& estimator, const DecoderConfig& cfg) {
  BlockDecode d = DecodeBlock(features, *state, estimator, cfg);
  bool accepted = true;
  if (d.count_changed && cfg.consistency_check && !state->cache.empty()) {
    const std::vector<SpeakerEmbedding> fresh(d.embeddings.begin() + 1 + d.known,
                                              d.embeddings.end());
    accepted = ConsistencyCheck(*state, fresh, estimator, cfg).accepted;
  }
  if (accepted) {
    state->slots = d.embeddings;
  } else {
    d.masks.resize(1 + d.known);
    d.embeddings.resize(1 + d.known);
    state->rejected_blocks.push_back(features.index);
  }
  state->iterations.push_back(d.iterations);
  state->cache.push_back(features);
  state->masks.push_back(d.masks);
  state->counts.push_back(state->speaker_count());
  return d;
}

SessionResult DecodeSession(const FramedSession& session, const MaskEstimator& estimator,
                            const DecoderConfig& cfg) {
  cfg.Validate();
  SessionState state;
  for (const auto& block : session.blocks) Step(block, &state, estimator, cfg);

  SessionResult r;
  r.counts = state.counts;
  r.iterations = state.iterations;
  r.rejected_blocks = state.rejected_blocks;
  r.final_count = state.speaker_count();
  const BlockLayout& layout = session.layout;
  const int slots = static_cast<int>(state.slots.size());
  const int n = layout.frames_per_block();
  for (int s = 0; s < slots; ++s) {
    Maskd full = Maskd::Zero(session.ch0.rows(), session.ch0.cols());
    for (size_t b = 0; b < state.masks.size(); ++b)
      if (s < static_cast<int>(state.masks[b].size()))
        full.middleRows(static_cast<Eigen::Index>(b) * n, n) = state.masks[b][s];
    AudioSignal stream(layout.sample_rate, session.length, 1);
    stream.channel(0) = FramedIstft(ApplyMask(full, session.ch0), layout, session.length);
    r.streams.push_back(std::move(stream));
  }
  for (const auto& masks : state.masks) {
    std::vector<bool> row(slots, false);
    for (size_t s = 0; s < masks.size(); ++s) row[s] = masks[s].mean() >= cfg.t_silent;
    r.activity.push_back(std::move(row));
  }
  return r;
}

SessionResult DecodeSession(const AudioSignal& mixture, const MaskEstimator& estimator,
                            const DecoderConfig& cfg, const StftConfig& stft) {
  cfg.Validate();
  BlockLayout layout{mixture.sample_rate, cfg.block_len, stft};
  return DecodeSession(FrameSession(mixture, layout), estimator, cfg);
}

}  // namespace rsan
