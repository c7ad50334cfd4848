// rsan/losses.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/losses.h"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

#include "rsan/random.h"

namespace rsan {

void LossWeights::Validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw Error("loss weights must be non-negative");
  if (!(delta > 0.0)) throw Error("triplet margin must be positive");
}

namespace {

template <typename Scalar>
void CheckSame(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(what) + ": dimension mismatch");
}

// |M (.) Y - A|^2 and its gradient wrt M.
template <typename Scalar>
Scalar SquaredError(const Matrix<Scalar>& m, const Matrix<Scalar>& y,
                    const Matrix<Scalar>* a, Matrix<Scalar>* grad, Scalar scale) {
  Matrix<Scalar> diff = (m.array() * y.array()).matrix();
  if (a) diff -= *a;
  if (grad) *grad = (Scalar(2) * scale) * (diff.array() * y.array()).matrix();
  return diff.squaredNorm();
}

}  // namespace

template <typename Scalar>
PitResult<Scalar> MmsePartialPit(const std::vector<std::vector<Matrix<Scalar>>>& masks,
                                 const std::vector<Matrix<Scalar>>& mix,
                                 const std::vector<BlockTargets<Scalar>>& targets) {
  const size_t B = masks.size();
  if (mix.size() != B || targets.size() != B)
    throw Error("mmse: block counts of masks, mixtures and targets differ");
  size_t terms = 0;
  for (const auto& m : masks) terms += m.size();

  PitResult<Scalar> r;
  r.assignment.resize(B);
  r.grad.resize(B);
  if (terms == 0) return r;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(terms);

  for (size_t b = 0; b < B; ++b) {
    const auto& tg = targets[b];
    const size_t S = masks[b].size(), K = tg.known.size(), N = tg.fresh.size();
    if (K > S) throw Error("mmse: more known targets than slots in block " + std::to_string(b));
    const size_t free = S - K;
    if (N > free)
      throw Error("mmse: " + std::to_string(N) + " new sources but only " +
                  std::to_string(free) + " free slots in block " + std::to_string(b));
    for (const auto& m : masks[b]) CheckSame(m, mix[b], "mmse");
    for (const auto& t : tg.known) CheckSame(t.magnitude, mix[b], "mmse");
    for (const auto& t : tg.fresh) CheckSame(t.magnitude, mix[b], "mmse");

    // Cost of each free slot against every fresh source and against silence.
    Matrix<Scalar> cost(free, N + 1);
    for (size_t s = 0; s < free; ++s) {
      const auto& m = masks[b][K + s];
      for (size_t n = 0; n < N; ++n)
        cost(s, n) = SquaredError<Scalar>(m, mix[b], &tg.fresh[n].magnitude, nullptr, 0);
      cost(s, N) = SquaredError<Scalar>(m, mix[b], nullptr, nullptr, 0);
    }
    // Arrangements of N sources and (free - N) silences over the free slots.
    std::vector<int> perm(free);
    for (size_t s = 0; s < free; ++s) perm[s] = s < N ? static_cast<int>(s) : static_cast<int>(N);
    std::sort(perm.begin(), perm.end());
    std::vector<int> best = perm;
    Scalar best_cost = std::numeric_limits<Scalar>::infinity();
    do {
      Scalar c = 0;
      for (size_t s = 0; s < free; ++s) c += cost(s, perm[s]);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));

    r.grad[b].resize(S);
    r.assignment[b].resize(S);
    for (size_t k = 0; k < K; ++k) {
      r.loss += SquaredError(masks[b][k], mix[b], &tg.known[k].magnitude, &r.grad[b][k], scale);
      r.assignment[b][k] = tg.known[k].id;
    }
    for (size_t s = 0; s < free; ++s) {
      const bool silent = best[s] == static_cast<int>(N);
      const Matrix<Scalar>* a = silent ? nullptr : &tg.fresh[best[s]].magnitude;
      r.loss += SquaredError(masks[b][K + s], mix[b], a, &r.grad[b][K + s], scale);
      r.assignment[b][K + s] = silent ? std::string() : tg.fresh[best[s]].id;
    }
  }
  r.loss *= scale;
  return r;
}

template <typename Scalar>
TermResult<Scalar> NoiseMmse(const std::vector<Matrix<Scalar>>& noise_masks,
                             const std::vector<Matrix<Scalar>>& mix,
                             const std::vector<Matrix<Scalar>>& noise_targets) {
  const size_t B = noise_masks.size();
  if (noise_targets.size() != B) throw Error("noise mmse: missing noise target");
  if (mix.size() != B) throw Error("noise mmse: block count mismatch");
  TermResult<Scalar> r;
  r.grad.resize(B);
  if (B == 0) return r;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(B);
  for (size_t b = 0; b < B; ++b) {
    CheckSame(noise_masks[b], mix[b], "noise mmse");
    CheckSame(noise_targets[b], mix[b], "noise mmse");
    r.loss += SquaredError(noise_masks[b], mix[b], &noise_targets[b], &r.grad[b], scale);
  }
  r.loss *= scale;
  return r;
}

template <typename Scalar>
TermResult<Scalar> ResidualMaskLoss(const std::vector<std::vector<Matrix<Scalar>>>& masks) {
  TermResult<Scalar> r;
  for (size_t b = 0; b < masks.size(); ++b) {
    if (masks[b].empty())
      throw Error("resmask: block " + std::to_string(b) + " has no iterations");
    Matrix<Scalar> gap = Matrix<Scalar>::Ones(masks[b][0].rows(), masks[b][0].cols());
    for (const auto& m : masks[b]) {
      CheckSame(m, gap, "resmask");
      gap -= m;
    }
    // Subgradient 0 at the kink.
    r.loss += gap.array().max(Scalar(0)).sum();
    r.grad.push_back(-(gap.array() > Scalar(0)).template cast<Scalar>().matrix());
  }
  return r;
}

namespace {

// Cosine similarity and its gradients.
template <typename Scalar>
Scalar Cosine(const Vector<Scalar>& a, const Vector<Scalar>& b, Vector<Scalar>* da,
              Vector<Scalar>* db) {
  const Scalar na = a.norm(), nb = b.norm();
  const Scalar s = a.dot(b) / (na * nb);
  *da = b / (na * nb) - s * a / (na * na);
  *db = a / (na * nb) - s * b / (nb * nb);
  return s;
}

}  // namespace

template <typename Scalar>
TripletResult<Scalar> TripletLoss(const std::vector<Vector<Scalar>>& embeddings,
                                  const std::vector<std::string>& labels, double delta,
                                  uint64_t seed, int cap) {
  if (embeddings.size() != labels.size()) throw Error("triplet: label count mismatch");
  if (!(delta > 0.0)) throw Error("triplet margin must be positive");
  TripletResult<Scalar> r;
  r.grad.resize(embeddings.size());
  for (size_t k = 0; k < embeddings.size(); ++k) {
    r.grad[k] = Vector<Scalar>::Zero(embeddings[k].size());
    if (!labels[k].empty() && embeddings[k].norm() == Scalar(0))
      throw Error("triplet: zero-norm embedding");
  }

  std::vector<std::array<int, 3>> all;
  const int n = static_cast<int>(embeddings.size());
  for (int a = 0; a < n; ++a) {
    if (labels[a].empty()) continue;
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int q = 0; q < n; ++q)
        if (!labels[q].empty() && labels[q] != labels[a]) all.push_back({a, p, q});
    }
  }
  if (static_cast<int>(all.size()) > cap) {
    Rng rng(seed);
    std::vector<size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < cap; ++k)
      std::swap(idx[k], idx[k + rng.Below(idx.size() - k)]);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    std::vector<std::array<int, 3>> chosen;
    for (size_t k : idx) chosen.push_back(all[k]);
    all.swap(chosen);
  }
  r.triplets = static_cast<int>(all.size());

  Vector<Scalar> da1, dp, da2, dn;
  for (const auto& [a, p, q] : all) {
    const Scalar sap = Cosine(embeddings[a], embeddings[p], &da1, &dp);
    const Scalar san = Cosine(embeddings[a], embeddings[q], &da2, &dn);
    const Scalar h = san - sap + static_cast<Scalar>(delta);
    if (h <= Scalar(0)) continue;
    r.loss += h;
    r.grad[a] += da2 - da1;
    r.grad[p] -= dp;
    r.grad[q] += dn;
  }
  return r;
}

template <typename Scalar>
LossBreakdown<Scalar> TotalLoss(const UnrolledOutputs<Scalar>& out,
                                const std::vector<BlockTargets<Scalar>>& targets,
                                const LossWeights& w, uint64_t seed) {
  w.Validate();
  const size_t B = out.masks.size();
  if (out.mix.size() != B || out.embeddings.size() != B || targets.size() != B)
    throw Error("total loss: block count mismatch");

  std::vector<Matrix<Scalar>> noise_masks, noise_targets;
  std::vector<std::vector<Matrix<Scalar>>> speaker_masks(B);
  for (size_t b = 0; b < B; ++b) {
    if (out.masks[b].empty() || out.embeddings[b].size() != out.masks[b].size())
      throw Error("total loss: block " + std::to_string(b) + " lacks a noise iteration");
    noise_masks.push_back(out.masks[b][0]);
    noise_targets.push_back(targets[b].noise);
    speaker_masks[b].assign(out.masks[b].begin() + 1, out.masks[b].end());
  }

  const auto pit = MmsePartialPit(speaker_masks, out.mix, targets);
  const auto noise = NoiseMmse(noise_masks, out.mix, noise_targets);
  const auto res = ResidualMaskLoss(out.masks);

  std::vector<Vector<Scalar>> flat;
  std::vector<std::string> labels;
  for (size_t b = 0; b < B; ++b)
    for (size_t i = 1; i < out.embeddings[b].size(); ++i) {
      flat.push_back(out.embeddings[b][i]);
      labels.push_back(pit.assignment[b][i - 1]);
    }
  const auto tri = TripletLoss(flat, labels, w.delta, seed);

  const Scalar alpha = static_cast<Scalar>(w.alpha), beta = static_cast<Scalar>(w.beta);
  LossBreakdown<Scalar> r;
  r.noise = noise.loss;
  r.mmse = pit.loss + noise.loss;
  r.resmask = res.loss;
  r.triplet = tri.loss;
  r.triplets = tri.triplets;
  r.total = r.mmse + alpha * r.resmask + beta * r.triplet;
  r.assignment = pit.assignment;

  r.d_masks.resize(B);
  r.d_embeddings.resize(B);
  size_t k = 0;
  for (size_t b = 0; b < B; ++b) {
    const size_t I = out.masks[b].size();
    r.d_masks[b].resize(I);
    r.d_embeddings[b].resize(I);
    for (size_t i = 0; i < I; ++i) {
      Matrix<Scalar> g = i == 0 ? noise.grad[b] : pit.grad[b][i - 1];
      g += alpha * res.grad[b];
      r.d_masks[b][i] = std::move(g);
      if (i == 0)
        r.d_embeddings[b][i] = Vector<Scalar>::Zero(out.embeddings[b][0].size());
      else
        r.d_embeddings[b][i] = beta * tri.grad[k++];
    }
  }
  return r;
}

#define RSAN_INSTANTIATE_LOSSES(S)                                                    \
  template PitResult<S> MmsePartialPit(const std::vector<std::vector<Matrix<S>>>&,  \
                                       const std::vector<Matrix<S>>&,                \
                                       const std::vector<BlockTargets<S>>&);         \
  template TermResult<S> NoiseMmse(const std::vector<Matrix<S>>&,                    \
                                   const std::vector<Matrix<S>>&,                    \
                                   const std::vector<Matrix<S>>&);                   \
  template TermResult<S> ResidualMaskLoss(const std::vector<std::vector<Matrix<S>>>&); \
  template TripletResult<S> TripletLoss(const std::vector<Vector<S>>&,               \
                                        const std::vector<std::string>&, double,     \
                                        uint64_t, int);                              \
  template LossBreakdown<S> TotalLoss(const UnrolledOutputs<S>&,                     \
                                      const std::vector<BlockTargets<S>>&,           \
                                      const LossWeights&, uint64_t);

RSAN_INSTANTIATE_LOSSES(float)
RSAN_INSTANTIATE_LOSSES(double)

}  // namespace rsan
