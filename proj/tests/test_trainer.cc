// tests/test_trainer.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "rsan/trainer.h"
#include "test_util.h"

using namespace rsan;
using rsan::testing::RandomMatrix;

namespace {

const NetShape kShape{6, 4, 5, 4};

// Synthetic excerpt: `active[b]` lists the sources speaking in block b.
template <typename Scalar = float>
TrainSample<Scalar> Synthetic(uint64_t seed, const std::vector<std::vector<std::string>>& active,
                              int frames = 5) {
  Rng rng(seed);
  const int F = kShape.bins;
  TrainSample<Scalar> s;
  s.id = "syn" + std::to_string(seed);
  for (const auto& ids : active) {
    TrainBlock<Scalar> b;
    b.noise = RandomMatrix<Scalar>(rng, F, frames, 0.0, 0.2);
    b.rest = Matrix<Scalar>::Zero(F, frames);
    b.mix = b.noise;
    for (const auto& id : ids) {
      Matrix<Scalar> m = RandomMatrix<Scalar>(rng, F, frames, 0.0, 1.0);
      b.mix += m;
      b.sources.emplace(id, std::move(m));
    }
    b.features = RandomMatrix<Scalar>(rng, kShape.static_dim(), frames, -1.0, 1.0);
    s.blocks.push_back(std::move(b));
  }
  return s;
}

template <typename Scalar>
double MaxAbsDiff(const ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
  std::vector<const Matrix<Scalar>*> xs;
  a.ForEach([&](const char*, const Matrix<Scalar>& x) { xs.push_back(&x); });
  double d = 0.0;
  size_t k = 0;
  b.ForEach([&](const char*, const Matrix<Scalar>& y) {
    d = std::max(d, static_cast<double>((*xs[k++] - y).cwiseAbs().maxCoeff()));
  });
  return d;
}

TrainConfig SmallConfig() {
  TrainConfig cfg;
  cfg.accumulation = 1;
  cfg.epochs = 1;
  return cfg;
}

}  // namespace

TEST_CASE("unroll assembles iterations, slots and targets") {
  const auto s = Synthetic(1, {{"a", "b"}, {"b"}, {"b", "c"}, {}});
  const auto p = ModelParams<float>::Random(kShape, 3);
  const auto r = Unroll(s, p, SmallConfig());
  // Iterations: noise + known slots + new sources.
  CHECK(r.iterations == std::vector<int>{3, 3, 4, 4});
  REQUIRE(r.slot_ids.size() == 4);
  CHECK(r.slot_ids[0].size() == 2);
  CHECK(r.slot_ids[1] == r.slot_ids[0]);  // slots persist through silence
  CHECK(r.slot_ids[2].size() == 3);
  CHECK(r.slot_ids[2][2] == "c");
  CHECK(r.slot_ids[3] == r.slot_ids[2]);
  CHECK(r.loss.assignment[1] == r.slot_ids[1]);

  // The silent known speaker is scored against a zero target.
  std::vector<BlockTargets<float>> tg(4);
  for (int b = 0; b < 4; ++b) {
    tg[b].noise = s.blocks[b].noise;
    const size_t known = b == 0 ? 0 : r.slot_ids[b - 1].size();
    for (size_t k = 0; k < known; ++k) {
      const auto& id = r.slot_ids[b - 1][k];
      const auto it = s.blocks[b].sources.find(id);
      tg[b].known.push_back(
          {id, it == s.blocks[b].sources.end() ? Matrix<float>::Zero(6, 5) : it->second});
    }
    for (size_t k = known; k < r.slot_ids[b].size(); ++k)
      tg[b].fresh.push_back({r.slot_ids[b][k], s.blocks[b].sources.at(r.slot_ids[b][k])});
  }
  const auto again = TotalLoss(r.outputs, tg, SmallConfig().weights,
                               MixSeed(SmallConfig().seed, Fnv1a(s.id)));
  CHECK(again.total == doctest::Approx(r.loss.total).epsilon(1e-6));

  TrainConfig capped = SmallConfig();
  capped.max_speakers = 2;
  CHECK_THROWS_AS(Unroll(s, p, capped), Error);
  capped = SmallConfig();
  capped.max_blocks = 3;
  CHECK_THROWS_AS(Unroll(s, p, capped), Error);
}

TEST_CASE("teacher forcing feeds oracle residuals") {
  const auto s = Synthetic(2, {{"a"}, {"a", "b"}});
  const auto p1 = ModelParams<float>::Random(kShape, 1), p2 = ModelParams<float>::Random(kShape, 2);
  TrainConfig cfg = SmallConfig();
  const auto a = Unroll(s, p1, cfg), b = Unroll(s, p2, cfg);
  for (size_t blk = 0; blk < 2; ++blk) {
    REQUIRE(a.residuals[blk].size() == b.residuals[blk].size());
    CHECK(a.residuals[blk][0].isApproxToConstant(1.0f));
    for (size_t i = 0; i < a.residuals[blk].size(); ++i)
      CHECK((a.residuals[blk][i] - b.residuals[blk][i]).cwiseAbs().maxCoeff() < 1e-6);
    // Each residual is 1 minus the removed oracle masks, so it only shrinks.
    for (size_t i = 1; i < a.residuals[blk].size(); ++i)
      CHECK((a.residuals[blk][i] - a.residuals[blk][i - 1]).maxCoeff() <= 1e-7);
  }
  cfg.teacher_forcing = false;
  const auto c = Unroll(s, p1, cfg), d = Unroll(s, p2, cfg);
  CHECK(c.iterations == a.iterations);
  CHECK((c.residuals[1][1] - d.residuals[1][1]).cwiseAbs().maxCoeff() > 1e-4);
  for (const auto& blk : c.residuals)
    for (const auto& r : blk) CHECK((r.array() >= 0.0f && r.array() <= 1.0f).all());
}

TEST_CASE("unroll gradient matches finite differences") {
  const auto s = Synthetic<double>(4, {{"a", "b"}, {"a"}}, 3);
  auto p = ModelParams<double>::Random(kShape, 5);
  for (bool tf : {true, false}) {
    TrainConfig cfg = SmallConfig();
    cfg.teacher_forcing = tf;
    auto g = ModelParams<double>::Zeros(kShape);
    Unroll(s, p, cfg, &g);
    const double h = 1e-6;
    double num = 0.0, den = 0.0;
    std::vector<Matrix<double>*> ws;
    p.ForEach([&](const char*, Matrix<double>& w) { ws.push_back(&w); });
    std::vector<const Matrix<double>*> gs;
    g.ForEach([&](const char*, const Matrix<double>& x) { gs.push_back(&x); });
    Rng rng(9);
    for (size_t k = 0; k < ws.size(); ++k)
      for (int probe = 0; probe < 4; ++probe) {
        const Eigen::Index e = static_cast<Eigen::Index>(rng.Below(static_cast<uint64_t>(ws[k]->size())));
        const double keep = ws[k]->data()[e];
        ws[k]->data()[e] = keep + h;
        const double up = Unroll(s, p, cfg).loss.total;
        ws[k]->data()[e] = keep - h;
        const double dn = Unroll(s, p, cfg).loss.total;
        ws[k]->data()[e] = keep;
        const double fd = (up - dn) / (2 * h);
        num += std::pow(fd - gs[k]->data()[e], 2);
        den += fd * fd;
      }
    CHECK(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("training steps") {
  const std::vector<TrainSample<float>> data = {Synthetic(6, {{"a", "b"}, {"a"}}),
                                                Synthetic(7, {{"a"}, {"a", "b"}})};
  const auto p0 = ModelParams<float>::Random(kShape, 1);

  SUBCASE("zero learning rate leaves parameters alone") {
    TrainConfig cfg = SmallConfig();
    cfg.learning_rate = 0.0;
    const auto p = Train(p0, {{"s", &data, 3}}, cfg);
    CHECK(MaxAbsDiff(p, p0) == 0.0);
  }
  SUBCASE("a single excerpt can be overfit") {
    const std::vector<TrainSample<float>> one = {data[0]};
    TrainConfig cfg = SmallConfig();
    cfg.learning_rate = 1e-2;
    std::vector<double> losses;
    TrainCallbacks cb;
    cb.on_epoch = [&](const EpochMetrics& m, const ModelParams<float>&) { losses.push_back(m.total); };
    Train(p0, {{"s", &one, 200}}, cfg, 0, cb);
    REQUIRE(losses.size() == 200);
    CHECK(losses.back() < 0.1 * losses.front());
  }
  SUBCASE("deterministic with epochs and stages numbered consecutively") {
    TrainConfig cfg = SmallConfig();
    cfg.accumulation = 2;
    cfg.jobs = 2;
    std::vector<int> epochs;
    std::vector<std::pair<std::string, int>> stages;
    TrainCallbacks cb;
    cb.on_epoch = [&](const EpochMetrics& m, const ModelParams<float>&) { epochs.push_back(m.epoch); };
    cb.on_stage = [&](const std::string& n, int e) { stages.push_back({n, e}); };
    const auto a = Train(p0, {{"x", &data, 2}, {"y", &data, 1}}, cfg, 4, cb);
    CHECK(epochs == std::vector<int>{5, 6, 7});
    CHECK(stages == std::vector<std::pair<std::string, int>>{{"x", 5}, {"y", 7}});
    cfg.jobs = 1;
    const auto b = Train(p0, {{"x", &data, 2}, {"y", &data, 1}}, cfg, 4);
    CHECK(MaxAbsDiff(a, b) == 0.0);
    CHECK(MaxAbsDiff(a, p0) > 0.0);
  }
  SUBCASE("gradient clipping bounds the first step") {
    TrainConfig cfg = SmallConfig();
    cfg.clip_norm = 1e-3;
    cfg.learning_rate = 1e-3;
    // Adam normalizes the first step, so clipping must not change its size.
    const auto a = Train(p0, {{"s", &data, 1}}, cfg);
    CHECK(MaxAbsDiff(a, p0) <= 2.0 * 1e-3 + 1e-6);
  }
  SUBCASE("non-finite loss names the sample") {
    auto bad = p0;
    bad.ForEach([](const char*, Matrix<float>& w) { w(0, 0) = std::nanf(""); });
    CHECK_THROWS_WITH_AS(Train(bad, {{"s", &data, 1}}, SmallConfig()),
                         doctest::Contains("non-finite"), Error);
    std::vector<TrainSample<float>> empty;
    CHECK_THROWS_AS(Train(p0, {{"s", &empty, 1}}, SmallConfig()), Error);
  }
}

TEST_CASE("metrics csv") {
  CHECK(FormatMetricsCsvHeader() == "epoch,L_total,L_MMSE,L_resmask,L_triplet\n");
  EpochMetrics m;
  m.epoch = 3;
  m.total = 1.5;
  m.mmse = 1.25;
  m.resmask = 2.0;
  m.triplet = 0.125;
  CHECK(FormatMetricsCsvRow(m) == "3,1.5,1.25,2,0.125\n");
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.Validate());
  cfg.accumulation = 0;
  CHECK_THROWS_AS(cfg.Validate(), Error);
  cfg = TrainConfig{};
  cfg.clip_norm = -1.0;
  CHECK_THROWS_AS(cfg.Validate(), Error);
  cfg = TrainConfig{};
  cfg.learning_rate = std::nan("");
  CHECK_THROWS_AS(cfg.Validate(), Error);
}
