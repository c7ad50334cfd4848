// rsan/trainer.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <thread>

#include "rsan/random.h"

namespace rsan {

void TrainConfig::Validate() const {
  if (!(block_len > 0.0)) throw Error("block_len must be positive");
  if (max_blocks < 1) throw Error("max_blocks must be at least 1");
  if (max_speakers < 1) throw Error("max_speakers must be at least 1");
  if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw Error("adam moments must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error("adam epsilon must be positive");
  if (epochs < 0) throw Error("epochs must be non-negative");
  if (accumulation < 1) throw Error("accumulation must be at least 1");
  if (!(clip_norm >= 0.0)) throw Error("clip_norm must be non-negative");
  if (jobs < 1) throw Error("jobs must be at least 1");
  weights.Validate();
}


template <typename Scalar>
std::map<std::string, Matrix<Scalar>> TrainBlock<Scalar>::OracleMasks() const {
  Matrix<Scalar> den = (noise.array() + rest.array() + static_cast<Scalar>(kOracleEpsilon)).matrix();
  for (const auto& [id, mag] : sources) den += mag;
  std::map<std::string, Matrix<Scalar>> out;
  out.emplace("", (noise.array() / den.array()).matrix());
  for (const auto& [id, mag] : sources) out.emplace(id, (mag.array() / den.array()).matrix());
  return out;
}

template <typename Scalar>
template <typename To>
TrainSample<To> TrainSample<Scalar>::Cast() const {
  TrainSample<To> s;
  s.id = id;
  for (const auto& b : blocks) {
    TrainBlock<To> c;
    c.features = b.features.template cast<To>();
    c.mix = b.mix.template cast<To>();
    c.noise = b.noise.template cast<To>();
    c.rest = b.rest.template cast<To>();
    for (const auto& [k, v] : b.sources) c.sources.emplace(k, v.template cast<To>());
    s.blocks.push_back(std::move(c));
  }
  return s;
}

std::vector<TrainSample<float>> MakeTrainSamples(const RenderedMeeting& meeting,
                                                 const std::string& id,
                                                 const BlockLayout& layout,
                                                 const TrainConfig& cfg) {
  cfg.Validate();
  const FramedSession fs = FrameSession(meeting.mixture, layout);
  const int blocks = static_cast<int>(fs.blocks.size());
  const ComplexSpectrogram noise = FramedStft(meeting.noise.channel(0), layout, blocks);
  std::map<std::string, ComplexSpectrogram> refs;
  for (const auto& [spk, sig] : meeting.references)
    refs.emplace(spk, FramedStft(sig.channel(0), layout, blocks));

  auto net = [](const MagnitudeSpectrogramd& m, double scale) -> Matrix<float> {
    return (m.transpose() / scale).matrix().cast<float>();
  };

  std::vector<TrainSample<float>> out;
  const int excerpts = (blocks + cfg.max_blocks - 1) / cfg.max_blocks;
  for (int e = 0; e < excerpts; ++e) {
    const int first = e * cfg.max_blocks, last = std::min(blocks, first + cfg.max_blocks);
    double scale = 0.0;
    for (int b = first; b < last; ++b) scale += fs.blocks[b].magnitude.mean();
    scale = scale / (last - first) + 1e-12;

    TrainSample<float> s;
    s.id = excerpts == 1 ? id : id + "#" + std::to_string(e);
    for (int b = first; b < last; ++b) {
      TrainBlock<float> tb;
      tb.features = StaticFeatures<float>(fs.blocks[b]);
      tb.mix = net(fs.blocks[b].magnitude, scale);
      tb.noise = net(BlockRows(noise, layout, b).abs(), scale);
      tb.rest = Matrix<float>::Zero(tb.mix.rows(), tb.mix.cols());
      const auto active = ActiveInBlock(meeting.timeline, layout, b, cfg.min_activity);
      for (const auto& [spk, spec] : refs) {
        Matrix<float> mag = net(BlockRows(spec, layout, b).abs(), scale);
        if (active.count(spk))
          tb.sources.emplace(spk, std::move(mag));
        else
          tb.rest += mag;
      }
      s.blocks.push_back(std::move(tb));
    }
    out.push_back(std::move(s));
  }
  return out;
}

template <typename Scalar>
UnrollResult<Scalar> Unroll(const TrainSample<Scalar>& sample, const ModelParams<Scalar>& p,
                            const TrainConfig& cfg, ModelParams<Scalar>* grads) {
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using Net = RecurrentMaskNet<Scalar>;
  const size_t B = sample.blocks.size();
  if (B == 0) throw Error("sample " + sample.id + " has no blocks");
  if (static_cast<int>(B) > cfg.max_blocks)
    throw Error("sample " + sample.id + " exceeds max_blocks");
  const Vec zero = Vec::Zero(p.shape.emb_dim);

  UnrollResult<Scalar> res;
  UnrolledOutputs<Scalar> out;
  std::vector<BlockTargets<Scalar>> targets(B);
  std::vector<std::vector<ForwardCache<Scalar>>> caches(B);
  std::vector<std::vector<Mat>> pass(B);  // clip derivative, free-running only
  std::vector<int> known(B, 0);
  std::vector<std::string> slots;
  out.mix.resize(B);
  out.masks.resize(B);
  out.embeddings.resize(B);
  res.residuals.resize(B);

  for (size_t b = 0; b < B; ++b) {
    const TrainBlock<Scalar>& blk = sample.blocks[b];
    const auto oracle = blk.OracleMasks();
    const Eigen::Index F = blk.mix.rows(), T = blk.mix.cols();
    const Mat proj = Net::ProjectStatic(p, blk.features);
    const Mat silent = Mat::Zero(F, T);
    Mat residual = Mat::Ones(F, T);
    out.mix[b] = blk.mix;

    std::vector<std::string> fresh;
    for (const auto& [id, mag] : blk.sources)
      if (std::find(slots.begin(), slots.end(), id) == slots.end()) fresh.push_back(id);
    if (slots.size() + fresh.size() > static_cast<size_t>(cfg.max_speakers))
      throw Error("sample " + sample.id + ": more concurrent sources than slot cap in block " +
                  std::to_string(b));
    known[b] = static_cast<int>(slots.size());

    // One iteration; `pick` maps the estimate to the oracle mask to remove.
    auto step = [&](const Vec& z, const std::function<const Mat&(const Mat&)>& pick) {
      res.residuals[b].push_back(residual);
      ForwardCache<Scalar> c = Net::ForwardProjected(p, proj, residual, z);
      const Mat next = cfg.teacher_forcing ? Mat(residual - pick(c.mask)) : Mat(residual - c.mask);
      if (!cfg.teacher_forcing)
        pass[b].push_back(((next.array() > Scalar(0)) && (next.array() < Scalar(1))).template cast<Scalar>().matrix());
      residual = next.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
      out.masks[b].push_back(c.mask);
      out.embeddings[b].push_back(c.z);
      caches[b].push_back(std::move(c));
    };

    step(zero, [&](const Mat&) -> const Mat& { return oracle.at(""); });
    auto& tg = targets[b];
    tg.noise = blk.noise;
    for (size_t k = 0; k < slots.size(); ++k) {
      const auto it = blk.sources.find(slots[k]);
      const bool active = it != blk.sources.end();
      tg.known.push_back({slots[k], active ? it->second : silent});
      step(out.embeddings[b - 1][k + 1],
           [&](const Mat&) -> const Mat& { return active ? oracle.at(slots[k]) : silent; });
    }
    // Probes remove the oracle mask of the best-matching unclaimed source.
    std::vector<std::string> unclaimed = fresh;
    for (size_t j = 0; j < fresh.size(); ++j) {
      tg.fresh.push_back({fresh[j], blk.sources.at(fresh[j])});
      step(zero, [&](const Mat& m) -> const Mat& {
        size_t best = 0;
        Scalar best_err = std::numeric_limits<Scalar>::infinity();
        for (size_t u = 0; u < unclaimed.size(); ++u) {
          const Scalar err = ((m.array() * blk.mix.array()).matrix() -
                              blk.sources.at(unclaimed[u])).squaredNorm();
          if (err < best_err) {
            best_err = err;
            best = u;
          }
        }
        const std::string id = unclaimed[best];
        unclaimed.erase(unclaimed.begin() + static_cast<long>(best));
        return oracle.at(id);
      });
    }
    // Fix the new slots now; the next block needs them.
    if (!fresh.empty()) {
      const std::vector<std::vector<Mat>> speaker(1, std::vector<Mat>(out.masks[b].begin() + 1,
                                                                      out.masks[b].end()));
      const auto pit = MmsePartialPit<Scalar>(speaker, {blk.mix}, {tg});
      for (size_t s = slots.size(); s < pit.assignment[0].size(); ++s)
        slots.push_back(pit.assignment[0][s]);
    }
    res.slot_ids.push_back(slots);
    res.iterations.push_back(static_cast<int>(out.masks[b].size()));
  }

  res.loss = TotalLoss(out, targets, cfg.weights, MixSeed(cfg.seed, Fnv1a(sample.id)));
  if (!grads) {
    res.outputs = std::move(out);
    return res;
  }

  std::vector<std::vector<Vec>> carry(B);
  for (size_t b = 0; b < B; ++b) carry[b].assign(out.masks[b].size(), zero);
  for (size_t bi = B; bi-- > 0;) {
    const auto& blk = sample.blocks[bi];
    const Eigen::Index F = blk.mix.rows(), T = blk.mix.cols();
    Mat d_residual = Mat::Zero(F, T);
    Mat d_static = Mat::Zero(p.shape.proj, T);
    for (size_t i = out.masks[bi].size(); i-- > 0;) {
      Mat d_mask = res.loss.d_masks[bi][i];
      const Vec d_z = res.loss.d_embeddings[bi][i] + carry[bi][i];
      Mat through;
      if (!cfg.teacher_forcing) {
        through = d_residual.cwiseProduct(pass[bi][i]);
        d_mask -= through;
      }
      const auto g = Net::BackwardProjected(p, caches[bi][i], d_mask, d_z, grads);
      d_static += g.static_proj;
      if (!cfg.teacher_forcing) d_residual = through + g.residual;
      if (i >= 1 && static_cast<int>(i) <= known[bi]) carry[bi - 1][i] += g.z_prev;
    }
    Net::AccumulateStatic(blk.features, d_static, grads);
  }
  res.outputs = std::move(out);
  return res;
}

AdamOptimizer::AdamOptimizer(const ModelParams<float>& like, const TrainConfig& cfg)
    : m_(ModelParams<float>::Zeros(like.shape)),
      v_(ModelParams<float>::Zeros(like.shape)),
      lr_(cfg.learning_rate),
      b1_(cfg.beta1),
      b2_(cfg.beta2),
      eps_(cfg.adam_eps) {}

void AdamOptimizer::Update(const ModelParams<float>& grads, ModelParams<float>* params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::vector<const Matrix<float>*> g, m, v;
  grads.ForEach([&](const char*, const Matrix<float>& x) { g.push_back(&x); });
  m_.ForEach([&](const char*, Matrix<float>& x) { m.push_back(&x); });
  v_.ForEach([&](const char*, Matrix<float>& x) { v.push_back(&x); });
  size_t k = 0;
  const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
  const float step = static_cast<float>(lr_ / c1), eps = static_cast<float>(eps_);
  const float root_c2 = static_cast<float>(std::sqrt(c2));
  params->ForEach([&](const char*, Matrix<float>& w) {
    auto& mk = const_cast<Matrix<float>&>(*m[k]);
    auto& vk = const_cast<Matrix<float>&>(*v[k]);
    const auto& gk = *g[k];
    mk = b1 * mk + (1.0f - b1) * gk;
    vk = b2 * vk + ((1.0f - b2) * gk.array().square()).matrix();
    w.array() -= step * mk.array() / (vk.array().sqrt() / root_c2 + eps);
    ++k;
  });
}

namespace {

void ClipGradNorm(double max_norm, ModelParams<float>* grads) {
  double sq = 0.0;
  grads->ForEach([&](const char*, const Matrix<float>& x) { sq += x.cast<double>().squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (norm > max_norm) *grads *= static_cast<float>(max_norm / norm);
}

struct ItemResult {
  ModelParams<float> grads;
  LossBreakdown<float> loss;
  std::exception_ptr error;
};

void RunBatch(const std::vector<const TrainSample<float>*>& items, const ModelParams<float>& p,
              const TrainConfig& cfg, std::vector<ItemResult>* results) {
  results->assign(items.size(), {});
  auto work = [&](size_t first) {
    for (size_t i = first; i < items.size(); i += cfg.jobs) {
      auto& r = (*results)[i];
      try {
        r.grads = ModelParams<float>::Zeros(p.shape);
        r.loss = Unroll(*items[i], p, cfg, &r.grads).loss;
      } catch (...) {
        r.error = std::current_exception();
      }
    }
  };
  const size_t workers = std::min<size_t>(cfg.jobs, items.size());
  if (workers <= 1) {
    work(0);
    return;
  }
  std::vector<std::thread> pool;
  for (size_t t = 0; t < workers; ++t) pool.emplace_back(work, t);
  for (auto& t : pool) t.join();
}

}  // namespace

ModelParams<float> Train(ModelParams<float> params, const std::vector<TrainStage>& stages,
                         const TrainConfig& cfg, int start_epoch,
                         const TrainCallbacks& callbacks) {
  cfg.Validate();
  AdamOptimizer adam(params, cfg);
  int epoch = start_epoch;
  for (const auto& stage : stages) {
    if (!stage.samples || stage.samples->empty())
      throw Error("training stage '" + stage.name + "' has no samples");
    if (callbacks.on_stage) callbacks.on_stage(stage.name, epoch + 1);
    const auto& data = *stage.samples;
    for (int e = 0; e < stage.epochs; ++e) {
      ++epoch;
      std::vector<size_t> order(data.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(MixSeed(cfg.seed, static_cast<uint64_t>(epoch)));
      for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.Below(i)]);

      EpochMetrics m;
      m.epoch = epoch;
      m.stage = stage.name;
      std::vector<ItemResult> results;
      for (size_t start = 0; start < order.size(); start += cfg.accumulation) {
        std::vector<const TrainSample<float>*> items;
        for (size_t i = start; i < std::min(order.size(), start + cfg.accumulation); ++i)
          items.push_back(&data[order[i]]);
        RunBatch(items, params, cfg, &results);
        ModelParams<float> total = ModelParams<float>::Zeros(params.shape);
        for (size_t i = 0; i < items.size(); ++i) {
          const auto& r = results[i];
          if (r.error) std::rethrow_exception(r.error);
          if (!std::isfinite(r.loss.total) || !r.grads.AllFinite())
            throw Error("non-finite loss on sample " + items[i]->id + " in epoch " +
                        std::to_string(epoch));
          total += r.grads;
          m.total += r.loss.total;
          m.mmse += r.loss.mmse;
          m.resmask += r.loss.resmask;
          m.triplet += r.loss.triplet;
        }
        total *= 1.0f / static_cast<float>(items.size());
        if (cfg.clip_norm > 0.0) ClipGradNorm(cfg.clip_norm, &total);
        adam.Update(total, &params);
      }
      const double n = static_cast<double>(data.size());
      m.total /= n;
      m.mmse /= n;
      m.resmask /= n;
      m.triplet /= n;
      if (callbacks.on_epoch) callbacks.on_epoch(m, params);
    }
  }
  return params;
}

std::string FormatMetricsCsvHeader() { return "epoch,L_total,L_MMSE,L_resmask,L_triplet\n"; }

std::string FormatMetricsCsvRow(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g\n", m.epoch, m.total, m.mmse, m.resmask,
                m.triplet);
  return buf;
}

template struct TrainBlock<float>;
template struct TrainBlock<double>;
template struct TrainSample<float>;
template struct TrainSample<double>;
template TrainSample<double> TrainSample<float>::Cast<double>() const;
template TrainSample<float> TrainSample<float>::Cast<float>() const;
template UnrollResult<float> Unroll(const TrainSample<float>&, const ModelParams<float>&,
                                    const TrainConfig&, ModelParams<float>*);
template UnrollResult<double> Unroll(const TrainSample<double>&, const ModelParams<double>&,
                                     const TrainConfig&, ModelParams<double>*);

}  // namespace rsan
