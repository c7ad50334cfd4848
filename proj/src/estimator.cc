// rsan/estimator.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/estimator.h"

#include <cmath>
#include <functional>

#include "rsan/random.h"

namespace rsan {

void CheckEstimatorInput(const EstimatorInput& in, int embedding_dim) {
  const auto& b = in.block;
  if (b.ipd.cos.rows() != b.frames() || b.ipd.cos.cols() != b.bins() ||
      b.ipd.sin.rows() != b.frames() || b.ipd.sin.cols() != b.bins())
    throw Error("estimator input: ipd dimensions do not match magnitude");
  if (in.residual.rows() != b.frames() || in.residual.cols() != b.bins())
    throw Error("estimator input: residual dimensions do not match magnitude");
  if (in.z_prev.size() != embedding_dim)
    throw Error("estimator input: embedding has dimension " +
                std::to_string(in.z_prev.size()) + ", expected " +
                std::to_string(embedding_dim));
  const double n = in.z_prev.norm();
  if (n != 0.0 && std::abs(n - 1.0) > 1e-4)
    throw Error("estimator input: z_prev must be zero or unit norm");
}

std::map<std::string, Maskd> IdealRatioMasks(const OracleBlock& block) {
  MagnitudeSpectrogramd den = block.noise + kOracleEpsilon;
  for (const auto& [id, mag] : block.sources) den += mag;
  std::map<std::string, Maskd> out;
  out.emplace("", block.noise / den);
  for (const auto& [id, mag] : block.sources) out.emplace(id, mag / den);
  return out;
}

namespace {

SpeakerEmbedding Basis(int dim, int k) {
  SpeakerEmbedding z = SpeakerEmbedding::Zero(dim);
  z[k] = 1.0;
  return z;
}

SpeakerEmbedding HashedUnit(int dim, const std::string& id) {
  Rng rng(std::hash<std::string>{}(id));
  SpeakerEmbedding z(dim);
  for (int i = 0; i < dim; ++i) z[i] = rng.Normal();
  return z / z.norm();
}

bool IsAllOnes(const Maskd& r) {
  return r.size() > 0 && (r - 1.0).abs().maxCoeff() < 1e-12;
}

}  // namespace

OracleEstimator::OracleEstimator(std::vector<OracleBlock> blocks,
                                 std::vector<std::string> speakers,
                                 int embedding_dim)
    : blocks_(std::move(blocks)), speakers_(std::move(speakers)), dim_(embedding_dim) {
  if (dim_ < 4) throw Error("oracle embedding dimension must be at least 4");
  noise_z_ = Basis(dim_, 0);
  nobody_z_ = Basis(dim_, dim_ - 1);
  for (size_t k = 0; k < speakers_.size(); ++k) {
    const int idx = static_cast<int>(k) + 1;
    speaker_z_.push_back(idx < dim_ - 2 ? Basis(dim_, idx) : HashedUnit(dim_, speakers_[k]));
  }
  for (const auto& b : blocks_) irm_.push_back(IdealRatioMasks(b));
}

const SpeakerEmbedding& OracleEstimator::SpeakerEmbeddingFor(const std::string& id) const {
  for (size_t k = 0; k < speakers_.size(); ++k)
    if (speakers_[k] == id) return speaker_z_[k];
  throw Error("oracle: unknown speaker " + id);
}

const OracleBlock& OracleEstimator::block(int b) const {
  if (b < 0 || b >= static_cast<int>(blocks_.size()))
    throw Error("oracle: no ground truth for block " + std::to_string(b));
  return blocks_[b];
}

const std::map<std::string, Maskd>& OracleEstimator::Irm(int b) const {
  block(b);
  return irm_[b];
}

std::optional<std::string> OracleEstimator::Identify(const SpeakerEmbedding& z) const {
  const double n = z.norm();
  if (n == 0.0) return std::nullopt;
  double best = 0.5;
  std::optional<std::string> who;
  if (noise_z_.dot(z) / n > best) {
    best = noise_z_.dot(z) / n;
    who = "";
  }
  for (size_t k = 0; k < speakers_.size(); ++k) {
    const double c = speaker_z_[k].dot(z) / n;
    if (c > best) {
      best = c;
      who = speakers_[k];
    }
  }
  return who;
}

std::optional<std::string> OracleEstimator::Probe(int b, const Maskd& residual) const {
  const auto& blk = block(b);
  const auto& irm = irm_[b];
  std::optional<std::string> pick;
  double best_mass = 0.0;
  for (const auto& id : blk.active) {
    auto it = irm.find(id);
    if (it == irm.end()) continue;
    const double total = it->second.sum();
    if (total <= 0.0) continue;
    const double left = residual.min(it->second).sum();
    if (left / total >= 0.9 && left > best_mass) {
      best_mass = left;
      pick = id;
    }
  }
  return pick;
}

MaskEstimate OracleEstimator::Estimate(const EstimatorInput& in) const {
  CheckEstimatorInput(in, dim_);
  const int b = in.block.index;
  const auto& blk = block(b);
  const auto& irm = irm_[b];
  const Maskd zeros = Maskd::Zero(in.block.frames(), in.block.bins());
  if (irm.at("").rows() != in.block.frames() || irm.at("").cols() != in.block.bins())
    throw Error("oracle: ground truth dimensions do not match block " + std::to_string(b));

  std::optional<std::string> who = Identify(in.z_prev);
  if (!who && in.z_prev.norm() == 0.0 && IsAllOnes(in.residual)) who = "";
  if (!who && in.z_prev.norm() == 0.0) {
    who = Probe(b, in.residual);
    if (!who) return {zeros, nobody_z_};
  }
  if (!who) return {zeros, nobody_z_};
  if (who->empty()) return {irm.at(""), noise_z_};
  const auto& z = SpeakerEmbeddingFor(*who);
  if (!blk.active.count(*who) || !irm.count(*who)) return {zeros, z};
  return {irm.at(*who), z};
}

FaultInjectingEstimator::FaultInjectingEstimator(const OracleEstimator& oracle,
                                                 int fault_block,
                                                 std::string split_speaker, double keep)
    : oracle_(oracle),
      fault_block_(fault_block),
      split_(std::move(split_speaker)),
      keep_(keep),
      spurious_z_(Basis(oracle.embedding_dim(), oracle.embedding_dim() - 2)) {}

MaskEstimate FaultInjectingEstimator::Estimate(const EstimatorInput& in) const {
  CheckEstimatorInput(in, embedding_dim());
  const int b = in.block.index;
  const Maskd zeros = Maskd::Zero(in.block.frames(), in.block.bins());
  const auto& irm = oracle_.Irm(b);
  const bool split_active =
      oracle_.block(b).active.count(split_) && irm.count(split_);
  const double n = in.z_prev.norm();

  if (n > 0.0 && spurious_z_.dot(in.z_prev) / n > 0.9) {
    if (!split_active) return {zeros, spurious_z_};
    return {(1.0 - keep_) * irm.at(split_), spurious_z_};
  }
  if (b == fault_block_ && split_active) {
    auto who = oracle_.Identify(in.z_prev);
    if (who && *who == split_) return {keep_ * irm.at(split_), in.z_prev / n};
    if (n == 0.0 && !IsAllOnes(in.residual) &&
        !oracle_.Probe(b, in.residual)) {
      const Maskd rest = (1.0 - keep_) * irm.at(split_);
      const double total = rest.sum();
      if (total > 0.0 && in.residual.min(rest).sum() / total >= 0.9)
        return {rest, spurious_z_};
    }
  }
  return oracle_.Estimate(in);
}

}  // namespace rsan
