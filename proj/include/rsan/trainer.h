// rsan/trainer.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_TRAINER_H_
#define RSAN_TRAINER_H_

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rsan/framing.h"
#include "rsan/losses.h"
#include "rsan/meeting_sim.h"
#include "rsan/network.h"

namespace rsan {

struct TrainConfig {
  double block_len = 10.0;  // seconds
  int max_blocks = 6;       // per excerpt
  int max_speakers = 5;     // slot cap per excerpt
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int epochs = 30;
  int accumulation = 8;  // excerpts per parameter update
  double clip_norm = 0.0;  // global gradient norm cap, 0 disables
  LossWeights weights;
  bool teacher_forcing = true;
  uint64_t seed = 1;
  int jobs = 1;
  double min_activity = 0.05;  // seconds a source must speak to be a target

  void Validate() const;
};

// One block in network layout (bins x frames). Magnitudes are divided by the
// excerpt's mean mixture magnitude.
template <typename Scalar>
struct TrainBlock {
  Matrix<Scalar> features;                        // static_dim x T
  Matrix<Scalar> mix;                             // |Y_b|
  Matrix<Scalar> noise;                           // noise target
  std::map<std::string, Matrix<Scalar>> sources;  // active sources only
  Matrix<Scalar> rest;  // summed magnitude of inactive sources (reverb tails)

  // Ideal ratio masks of the noise ("") and every active source.
  std::map<std::string, Matrix<Scalar>> OracleMasks() const;
};

template <typename Scalar>
struct TrainSample {
  std::string id;
  std::vector<TrainBlock<Scalar>> blocks;

  template <typename To>
  TrainSample<To> Cast() const;
};

// Cuts a rendered meeting into excerpts of at most `cfg.max_blocks` blocks.
std::vector<TrainSample<float>> MakeTrainSamples(const RenderedMeeting& meeting,
                                                 const std::string& id,
                                                 const BlockLayout& layout,
                                                 const TrainConfig& cfg);

template <typename Scalar>
struct UnrollResult {
  LossBreakdown<Scalar> loss;
  UnrolledOutputs<Scalar> outputs;
  std::vector<int> iterations;                        // per block
  std::vector<std::vector<Matrix<Scalar>>> residuals;  // network inputs
  std::vector<std::vector<std::string>> slot_ids;     // per block, speaker slots
};

// Runs the estimator over every block and iteration of `sample`, scores it
// and, when `grads` is given, accumulates parameter gradients of the total
// loss. The iteration count of a block is 1 + known slots + new sources.
template <typename Scalar>
UnrollResult<Scalar> Unroll(const TrainSample<Scalar>& sample, const ModelParams<Scalar>& params,
                            const TrainConfig& cfg, ModelParams<Scalar>* grads = nullptr);

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams<float>& like, const TrainConfig& cfg);
  void Update(const ModelParams<float>& grads, ModelParams<float>* params);
  long steps() const { return t_; }

 private:
  ModelParams<float> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based, continuing across stages and resumes
  std::string stage;
  double total = 0.0, mmse = 0.0, resmask = 0.0, triplet = 0.0;
};

struct TrainStage {
  std::string name;
  const std::vector<TrainSample<float>>* samples = nullptr;
  int epochs = 0;
};

struct TrainCallbacks {
  std::function<void(const EpochMetrics&, const ModelParams<float>&)> on_epoch;
  std::function<void(const std::string& stage, int first_epoch)> on_stage;
};

// Adam over all stages in order. Epoch numbering starts after
// `start_epoch`. Throws on a non-finite loss, naming the sample.
ModelParams<float> Train(ModelParams<float> params, const std::vector<TrainStage>& stages,
                         const TrainConfig& cfg, int start_epoch = 0,
                         const TrainCallbacks& callbacks = {});

std::string FormatMetricsCsvHeader();
std::string FormatMetricsCsvRow(const EpochMetrics& m);

}  // namespace rsan

#endif  // RSAN_TRAINER_H_
