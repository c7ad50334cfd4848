// rsan/losses.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_LOSSES_H_
#define RSAN_LOSSES_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rsan/types.h"

namespace rsan {

struct LossWeights {
  double alpha = 0.1;  // residual-mask term
  double beta = 0.1;   // triplet term
  double delta = 0.2;  // triplet margin

  void Validate() const;
};

// Masks and magnitudes below are element-wise objects of one block; any
// layout works as long as it is the same for masks, mixtures and targets.

template <typename Scalar>
struct LabeledTarget {
  std::string id;
  Matrix<Scalar> magnitude;
};

// Targets of one block: the noise, one entry per known slot (a zero
// magnitude when that speaker is silent) and the sources appearing for the
// first time, still unassigned.
template <typename Scalar>
struct BlockTargets {
  Matrix<Scalar> noise;
  std::vector<LabeledTarget<Scalar>> known;
  std::vector<LabeledTarget<Scalar>> fresh;
};

template <typename Scalar>
struct PitResult {
  Scalar loss = 0;
  // Per block, the source id assigned to every speaker slot ("" when a
  // surplus slot was matched to silence).
  std::vector<std::vector<std::string>> assignment;
  std::vector<std::vector<Matrix<Scalar>>> grad;  // per block, per speaker slot
};

// Speaker-slot MSE |M (.) Y - A|^2 averaged over all speaker-slot terms.
// Known slots keep their targets; fresh sources are assigned to the
// remaining slots by exhaustive search. `masks[b]` excludes the noise slot.
template <typename Scalar>
PitResult<Scalar> MmsePartialPit(const std::vector<std::vector<Matrix<Scalar>>>& masks,
                                 const std::vector<Matrix<Scalar>>& mix,
                                 const std::vector<BlockTargets<Scalar>>& targets);

template <typename Scalar>
struct TermResult {
  Scalar loss = 0;
  std::vector<Matrix<Scalar>> grad;
};

// (1/B) sum_b |M_noise,b (.) Y_b - A_noise,b|^2.
template <typename Scalar>
TermResult<Scalar> NoiseMmse(const std::vector<Matrix<Scalar>>& noise_masks,
                             const std::vector<Matrix<Scalar>>& mix,
                             const std::vector<Matrix<Scalar>>& noise_targets);

// sum_b sum_tf max(1 - sum_i M_b,i, 0) with all iterations of a block,
// noise included. Gradient per block (identical for every mask of it).
template <typename Scalar>
TermResult<Scalar> ResidualMaskLoss(const std::vector<std::vector<Matrix<Scalar>>>& masks);

inline constexpr int kTripletCap = 512;

template <typename Scalar>
struct TripletResult {
  Scalar loss = 0;
  int triplets = 0;
  std::vector<Vector<Scalar>> grad;
};

// sum over mined triplets of max(cos(a, n) - cos(a, p) + delta, 0). All
// valid triplets are used up to `cap`; beyond it `cap` of them are drawn
// uniformly without replacement using `seed`.
template <typename Scalar>
TripletResult<Scalar> TripletLoss(const std::vector<Vector<Scalar>>& embeddings,
                                  const std::vector<std::string>& labels,
                                  double delta, uint64_t seed, int cap = kTripletCap);

// Everything the unrolled graph produced for one excerpt. Iteration 0 of
// each block is the noise slot.
template <typename Scalar>
struct UnrolledOutputs {
  std::vector<Matrix<Scalar>> mix;
  std::vector<std::vector<Matrix<Scalar>>> masks;
  std::vector<std::vector<Vector<Scalar>>> embeddings;
};

template <typename Scalar>
struct LossBreakdown {
  Scalar total = 0;
  Scalar mmse = 0;   // speaker slots plus noise
  Scalar noise = 0;  // the noise part of `mmse`
  Scalar resmask = 0;
  Scalar triplet = 0;
  int triplets = 0;
  std::vector<std::vector<std::string>> assignment;
  std::vector<std::vector<Matrix<Scalar>>> d_masks;
  std::vector<std::vector<Vector<Scalar>>> d_embeddings;
};

// L = MMSE + noise + alpha * resmask + beta * triplet. Speaker embeddings are
// labeled with their assigned source; the noise slot's are not mined.
template <typename Scalar>
LossBreakdown<Scalar> TotalLoss(const UnrolledOutputs<Scalar>& out,
                                const std::vector<BlockTargets<Scalar>>& targets,
                                const LossWeights& w, uint64_t seed);

}  // namespace rsan

#endif  // RSAN_LOSSES_H_
