// rsan/estimator.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_ESTIMATOR_H_
#define RSAN_ESTIMATOR_H_

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rsan/stft.h"
#include "rsan/types.h"

namespace rsan {

// One decoding block of the 2-channel mixture: magnitude of the reference
// channel and the inter-channel phase feature.
struct BlockFeatures {
  int index = 0;
  MagnitudeSpectrogramd magnitude;  // frames x bins
  IpdFeature<double> ipd;

  Eigen::Index frames() const { return magnitude.rows(); }
  Eigen::Index bins() const { return magnitude.cols(); }
};

struct EstimatorInput {
  const BlockFeatures& block;
  const Maskd& residual;
  const SpeakerEmbedding& z_prev;  // zero vector: no prior speaker
};

struct MaskEstimate {
  Maskd mask;
  SpeakerEmbedding embedding;
};

// NN(Y_b, R_{b,i}, z_{b-1,i}) -> (mask, embedding).
class MaskEstimator {
 public:
  virtual ~MaskEstimator() = default;
  virtual MaskEstimate Estimate(const EstimatorInput& in) const = 0;
  virtual int embedding_dim() const = 0;
};

void CheckEstimatorInput(const EstimatorInput& in, int embedding_dim);

// Ground truth for one block: reference magnitudes of every source that has
// activity there, the noise magnitude, and which sources are active.
struct OracleBlock {
  std::map<std::string, MagnitudeSpectrogramd> sources;
  MagnitudeSpectrogramd noise;
  std::set<std::string> active;
};

inline constexpr double kOracleEpsilon = 1e-8;

// Ideal ratio masks |S_k| / (sum_j |S_j| + |N| + eps); the returned map also
// holds the noise mask under the empty-string key.
std::map<std::string, Maskd> IdealRatioMasks(const OracleBlock& block);

// Mask estimator that answers from ground-truth references. Speakers are
// identified by fixed unit embeddings; a zero z_prev with an untouched
// residual asks for noise, a zero z_prev otherwise probes for the active
// source with the most unexplained energy.
class OracleEstimator : public MaskEstimator {
 public:
  OracleEstimator(std::vector<OracleBlock> blocks, std::vector<std::string> speakers,
                  int embedding_dim = 32);

  MaskEstimate Estimate(const EstimatorInput& in) const override;
  int embedding_dim() const override { return dim_; }

  const SpeakerEmbedding& NoiseEmbedding() const { return noise_z_; }
  const SpeakerEmbedding& NobodyEmbedding() const { return nobody_z_; }
  const SpeakerEmbedding& SpeakerEmbeddingFor(const std::string& id) const;
  const std::vector<std::string>& speakers() const { return speakers_; }
  const OracleBlock& block(int b) const;
  const std::map<std::string, Maskd>& Irm(int b) const;

  // Nearest known identity by cosine: "" for noise, speaker id, or nullopt
  // when nothing matches well.
  std::optional<std::string> Identify(const SpeakerEmbedding& z) const;
  // Active source with most unexplained mask left in `residual`, if any.
  std::optional<std::string> Probe(int block, const Maskd& residual) const;

 private:
  std::vector<OracleBlock> blocks_;
  std::vector<std::map<std::string, Maskd>> irm_;
  std::vector<std::string> speakers_;
  std::vector<SpeakerEmbedding> speaker_z_;
  SpeakerEmbedding noise_z_, nobody_z_;
  int dim_;
};

// Oracle that, at one block, splits a known speaker into two: its own slot
// only gets `keep` of its mask and a probe then finds the rest under a
// spurious embedding. The spurious embedding keeps answering with that
// speaker's scaled mask in every block it is asked about.
class FaultInjectingEstimator : public MaskEstimator {
 public:
  FaultInjectingEstimator(const OracleEstimator& oracle, int fault_block,
                          std::string split_speaker, double keep = 0.2);

  MaskEstimate Estimate(const EstimatorInput& in) const override;
  int embedding_dim() const override { return oracle_.embedding_dim(); }
  const SpeakerEmbedding& SpuriousEmbedding() const { return spurious_z_; }

 private:
  const OracleEstimator& oracle_;
  int fault_block_;
  std::string split_;
  double keep_;
  SpeakerEmbedding spurious_z_;
};

}  // namespace rsan

#endif  // RSAN_ESTIMATOR_H_
