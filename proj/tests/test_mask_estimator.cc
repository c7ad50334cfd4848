// tests/test_mask_estimator.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "rsan/estimator.h"
#include "rsan/network.h"
#include "test_util.h"

using namespace rsan;
using rsan::testing::RandomMatrix;
using rsan::testing::TempDir;

namespace {

BlockFeatures RandomBlock(Rng& rng, int index, int frames, int bins) {
  BlockFeatures f;
  f.index = index;
  f.magnitude = RandomMatrix(rng, frames, bins, 0.0, 2.0).array();
  MagnitudeSpectrogramd phase = RandomMatrix(rng, frames, bins, -M_PI, M_PI).array();
  f.ipd.cos = phase.cos();
  f.ipd.sin = phase.sin();
  return f;
}

OracleBlock RandomOracleBlock(Rng& rng, int frames, int bins, std::set<std::string> active) {
  OracleBlock o;
  for (const auto& id : active) o.sources[id] = RandomMatrix(rng, frames, bins, 0.0, 1.0).array();
  o.noise = RandomMatrix(rng, frames, bins, 0.0, 0.2).array();
  o.active = std::move(active);
  return o;
}

double Dot(const Matrix<double>& a, const Matrix<double>& b) { return (a.array() * b.array()).sum(); }

// Scalar probe <d_mask, mask> + <d_z, z> of one forward pass.
double Probe(const ModelParams<double>& p, const Matrix<double>& feats, const Matrix<double>& res,
             const Vector<double>& z_prev, const Matrix<double>& d_mask, const Vector<double>& d_z) {
  const auto c = RecurrentMaskNet<double>::Forward(p, feats, res, z_prev);
  return Dot(c.mask, d_mask) + c.z.dot(d_z);
}

double RelErr(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(std::max(na, nb)), 1e-300);
}

}  // namespace

TEST_CASE("oracle ratio masks") {
  Rng rng(1);
  const int T = 6, F = 9;
  std::vector<OracleBlock> blocks = {RandomOracleBlock(rng, T, F, {"s"}),
                                     RandomOracleBlock(rng, T, F, {"s", "t"})};
  blocks[1].sources["u"] = RandomMatrix(rng, T, F, 0.0, 0.01).array();  // present, not active

  const auto irm0 = IdealRatioMasks(blocks[0]);
  const auto& s = blocks[0].sources.at("s");
  const auto& n = blocks[0].noise;
  CHECK((irm0.at("s") - s / (s + n + kOracleEpsilon)).abs().maxCoeff() < 1e-15);
  CHECK((irm0.at("") - n / (s + n + kOracleEpsilon)).abs().maxCoeff() < 1e-15);

  for (const auto& blk : blocks) {
    const auto irm = IdealRatioMasks(blk);
    Maskd sum = Maskd::Zero(T, F);
    for (const auto& [id, m] : irm) {
      CHECK(m.minCoeff() >= 0.0);
      CHECK(m.maxCoeff() <= 1.0);
      sum += m;
    }
    CHECK(sum.maxCoeff() <= 1.0 + 1e-12);
  }

  OracleEstimator oracle(blocks, {"s", "t", "u"}, 8);
  const BlockFeatures f1 = RandomBlock(rng, 1, T, F);
  const Maskd ones = Maskd::Ones(T, F);
  const SpeakerEmbedding zero = SpeakerEmbedding::Zero(8);

  SUBCASE("noise first, then probes, then identification") {
    const auto noise = oracle.Estimate({f1, ones, zero});
    CHECK((noise.mask - oracle.Irm(1).at("")).abs().maxCoeff() == 0.0);
    const Maskd r1 = (ones - noise.mask).cwiseMax(0.0);
    const auto first = oracle.Estimate({f1, r1, zero});
    const auto who = oracle.Identify(first.embedding);
    REQUIRE(who.has_value());
    CHECK((first.mask - oracle.Irm(1).at(*who)).abs().maxCoeff() == 0.0);
    CHECK(std::abs(first.embedding.norm() - 1.0) < 1e-12);
  }
  SUBCASE("known speaker silent in this block gets a zero mask") {
    const BlockFeatures f0 = RandomBlock(rng, 0, T, F);
    const auto est = oracle.Estimate({f0, ones, oracle.SpeakerEmbeddingFor("t")});
    CHECK(est.mask.abs().maxCoeff() == 0.0);
  }
  SUBCASE("dimension checks") {
    const BlockFeatures bad = RandomBlock(rng, 1, T + 1, F);
    CHECK_THROWS_AS(oracle.Estimate({bad, Maskd(Maskd::Ones(T + 1, F)), zero}), Error);
    CHECK_THROWS_AS(oracle.Estimate({f1, Maskd(Maskd::Ones(T, F - 1)), zero}), Error);
  }
}

TEST_CASE("network output ranges and determinism") {
  NetShape shape{12, 6, 5, 7};
  const auto p = ModelParams<float>::Random(shape, 3);
  NetworkEstimator net(p);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    BlockFeatures f = RandomBlock(rng, 0, 9, 12);
    if (trial % 4 == 0) f.magnitude *= 1e6;  // extreme inputs
    if (trial % 4 == 1) f.magnitude.setZero();
    const Maskd res = RandomMatrix(rng, 9, 12, 0.0, 1.0).array();
    SpeakerEmbedding z = SpeakerEmbedding::Zero(6);
    if (trial % 2) {
      z = RandomMatrix(rng, 6, 1, -1, 1);
      z.normalize();
    }
    const auto a = net.Estimate({f, res, z});
    const auto b = net.Estimate({f, res, z});
    CHECK(a.mask.rows() == 9);
    CHECK(a.mask.cols() == 12);
    CHECK(a.mask.minCoeff() >= 0.0);
    CHECK(a.mask.maxCoeff() <= 1.0);
    CHECK(std::abs(a.embedding.norm() - 1.0) < 1e-6);
    CHECK((a.mask - b.mask).abs().maxCoeff() == 0.0);
    CHECK((a.embedding - b.embedding).norm() == 0.0);
  }
  auto broken = p;
  broken.mask_b(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(NetworkEstimator{broken}, "non-finite model", Error);
}

TEST_CASE("network gradients match central differences") {
  // Random 2-frame, 5-bin instances in double precision.
  NetShape shape{5, 3, 4, 4};
  for (int inst = 0; inst < 5; ++inst) {
    Rng rng(100 + inst);
    auto p = ModelParams<double>::Random(shape, 10 + inst);
    p.ForEach([&](const char*, Matrix<double>& m) { m += RandomMatrix(rng, m.rows(), m.cols(), -0.3, 0.3); });
    const Matrix<double> feats = RandomMatrix(rng, shape.static_dim(), 2, -1, 1);
    const Matrix<double> res = RandomMatrix(rng, 5, 2, 0, 1);
    Vector<double> z_prev = RandomMatrix(rng, 3, 1, -1, 1);
    z_prev.normalize();
    const Matrix<double> d_mask = RandomMatrix(rng, 5, 2, -1, 1);
    const Vector<double> d_z = RandomMatrix(rng, 3, 1, -1, 1);

    const auto cache = RecurrentMaskNet<double>::Forward(p, feats, res, z_prev);
    auto grads = ModelParams<double>::Zeros(shape);
    const auto in_grads = RecurrentMaskNet<double>::Backward(p, feats, cache, d_mask, d_z, &grads);

    const double h = 1e-5;
    std::vector<double> analytic, numeric;
    auto pp = p;
    std::vector<Matrix<double>*> mats;
    pp.ForEach([&](const char*, Matrix<double>& m) { mats.push_back(&m); });
    std::vector<const Matrix<double>*> gm;
    grads.ForEach([&](const char*, const Matrix<double>& m) { gm.push_back(&m); });
    for (size_t k = 0; k < mats.size(); ++k)
      for (Eigen::Index i = 0; i < mats[k]->size(); ++i) {
        const double o = mats[k]->data()[i];
        mats[k]->data()[i] = o + h;
        const double lp = Probe(pp, feats, res, z_prev, d_mask, d_z);
        mats[k]->data()[i] = o - h;
        const double lm = Probe(pp, feats, res, z_prev, d_mask, d_z);
        mats[k]->data()[i] = o;
        analytic.push_back(gm[k]->data()[i]);
        numeric.push_back((lp - lm) / (2 * h));
      }
    // Inputs: residual and z_prev.
    Matrix<double> r2 = res;
    for (Eigen::Index i = 0; i < r2.size(); ++i) {
      const double o = r2.data()[i];
      r2.data()[i] = o + h;
      const double lp = Probe(p, feats, r2, z_prev, d_mask, d_z);
      r2.data()[i] = o - h;
      const double lm = Probe(p, feats, r2, z_prev, d_mask, d_z);
      r2.data()[i] = o;
      analytic.push_back(in_grads.residual.data()[i]);
      numeric.push_back((lp - lm) / (2 * h));
    }
    Vector<double> z2 = z_prev;
    for (Eigen::Index i = 0; i < z2.size(); ++i) {
      const double o = z2[i];
      z2[i] = o + h;
      const double lp = Probe(p, feats, res, z2, d_mask, d_z);
      z2[i] = o - h;
      const double lm = Probe(p, feats, res, z2, d_mask, d_z);
      z2[i] = o;
      analytic.push_back(in_grads.z_prev[i]);
      numeric.push_back((lp - lm) / (2 * h));
    }
    CHECK(RelErr(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("backward is linear and deterministic") {
  NetShape shape{5, 3, 4, 4};
  Rng rng(8);
  const auto p = ModelParams<double>::Random(shape, 2);
  const Matrix<double> feats = RandomMatrix(rng, shape.static_dim(), 3, -1, 1);
  const Matrix<double> res = RandomMatrix(rng, 5, 3, 0, 1);
  const Vector<double> z = Vector<double>::Zero(3);
  const auto cache = RecurrentMaskNet<double>::Forward(p, feats, res, z);

  auto g0 = ModelParams<double>::Zeros(shape);
  RecurrentMaskNet<double>::Backward(p, feats, cache, Matrix<double>::Zero(5, 3),
                                     Vector<double>::Zero(3), &g0);
  g0.ForEach([](const char*, const Matrix<double>& m) { CHECK(m.cwiseAbs().maxCoeff() == 0.0); });

  const Matrix<double> dm = RandomMatrix(rng, 5, 3, -1, 1);
  const Vector<double> dz = RandomMatrix(rng, 3, 1, -1, 1);
  auto g1 = ModelParams<double>::Zeros(shape), g2 = g1;
  RecurrentMaskNet<double>::Backward(p, feats, cache, dm, dz, &g1);
  RecurrentMaskNet<double>::Backward(p, feats, cache, dm, dz, &g2);
  std::vector<const Matrix<double>*> a, b;
  g1.ForEach([&](const char*, const Matrix<double>& m) { a.push_back(&m); });
  g2.ForEach([&](const char*, const Matrix<double>& m) { b.push_back(&m); });
  for (size_t k = 0; k < a.size(); ++k) CHECK((*a[k] - *b[k]).cwiseAbs().maxCoeff() == 0.0);

  // The split static/dynamic path reproduces the plain one.
  const auto proj = RecurrentMaskNet<double>::ProjectStatic(p, feats);
  const auto c2 = RecurrentMaskNet<double>::ForwardProjected(p, proj, res, z);
  CHECK((c2.mask - cache.mask).cwiseAbs().maxCoeff() < 1e-12);
  auto g3 = ModelParams<double>::Zeros(shape);
  const auto ig = RecurrentMaskNet<double>::BackwardProjected(p, c2, dm, dz, &g3);
  RecurrentMaskNet<double>::AccumulateStatic(feats, ig.static_proj, &g3);
  std::vector<const Matrix<double>*> c;
  g3.ForEach([&](const char*, const Matrix<double>& m) { c.push_back(&m); });
  for (size_t k = 0; k < a.size(); ++k) CHECK((*a[k] - *c[k]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("checkpoint round trip and corruption") {
  const std::string dir = TempDir("ckpt");
  Checkpoint ck{ModelParams<float>::Random(NetShape{9, 4, 3, 5}, 1), StftConfig{16, 4, WindowType::kSqrtHann}, 7};
  SaveCheckpoint(dir + "/a.ckpt", ck);
  const Checkpoint back = LoadCheckpoint(dir + "/a.ckpt");
  CHECK(back.epoch == 7);
  CHECK(back.stft.window_len == 16);
  CHECK(back.stft.hop == 4);
  CHECK(back.params.shape == ck.params.shape);
  SaveCheckpoint(dir + "/b.ckpt", back);
  const std::string bytes = SerializeCheckpoint(ck);
  std::ifstream fb(dir + "/b.ckpt", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(fb), {}) == bytes);
  CHECK(bytes.substr(0, 8) == "RSANCKPT");

  CHECK_THROWS_WITH_AS(ParseCheckpoint(bytes.substr(0, bytes.size() - 3)), "corrupt checkpoint", Error);
  CHECK_THROWS_WITH_AS(ParseCheckpoint(bytes.substr(0, 20)), "corrupt checkpoint", Error);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(ParseCheckpoint(bad_magic), "corrupt checkpoint", Error);
  std::string bumped = bytes;
  bumped[8] = static_cast<char>(kCheckpointVersion + 1);
  CHECK_THROWS_WITH_AS(ParseCheckpoint(bumped), "unsupported version 2", Error);
  CHECK_THROWS_AS(LoadCheckpoint(dir + "/missing.ckpt"), Error);
}
