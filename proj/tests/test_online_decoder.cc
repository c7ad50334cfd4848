// tests/test_online_decoder.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <string>
#include <vector>

#include "doctest.h"
#include "rsan/decoder.h"
#include "test_util.h"

using namespace rsan;
using rsan::testing::RandomMatrix;

namespace {

constexpr int kFrames = 6, kBins = 5;

struct Script {
  std::vector<BlockFeatures> features;
  std::vector<OracleBlock> blocks;
};

// Ground truth with `active[b]` speaking in block b over faint noise.
Script MakeScript(const std::vector<std::vector<std::string>>& active, uint64_t seed = 1) {
  Rng rng(seed);
  Script s;
  for (size_t b = 0; b < active.size(); ++b) {
    OracleBlock ob;
    ob.noise = RandomMatrix(rng, kFrames, kBins, 0.0, 0.05).array();
    MagnitudeSpectrogramd mix = ob.noise;
    const int n = static_cast<int>(active[b].size());
    for (int k = 0; k < n; ++k) {
      const std::string& id = active[b][k];
      // Each source dominates its own share of the cells.
      MagnitudeSpectrogramd m = RandomMatrix(rng, kFrames, kBins, 0.005, 0.01).array();
      for (Eigen::Index i = 0; i < m.size(); ++i)
        if (i % n == k) m(i) = rng.Uniform(0.5, 1.5);
      mix += m;
      ob.sources.emplace(id, m);
      ob.active.insert(id);
    }
    BlockFeatures f;
    f.index = static_cast<int>(b);
    f.magnitude = mix;
    f.ipd.cos = MagnitudeSpectrogramd::Ones(kFrames, kBins);
    f.ipd.sin = MagnitudeSpectrogramd::Zero(kFrames, kBins);
    s.features.push_back(std::move(f));
    s.blocks.push_back(std::move(ob));
  }
  return s;
}

OracleEstimator Oracle(const Script& s) {
  return OracleEstimator(s.blocks, {"a", "b", "c", "d"});
}

// Noise takes `noise` of the residual; each probe then takes `probe` of it.
class ScriptedEstimator : public MaskEstimator {
 public:
  ScriptedEstimator(double noise, double probe) : noise_(noise), probe_(probe) {}
  MaskEstimate Estimate(const EstimatorInput& in) const override {
    CheckEstimatorInput(in, 4);
    const bool first = (in.residual - 1.0).abs().maxCoeff() == 0.0;
    SpeakerEmbedding z = SpeakerEmbedding::Zero(4);
    z[first ? 0 : 1] = 1.0;
    return {Maskd(in.residual * (first ? noise_ : probe_)), z};
  }
  int embedding_dim() const override { return 4; }

 private:
  double noise_, probe_;
};

}  // namespace

TEST_CASE("recursion stops after n + 1 iterations") {
  const std::vector<std::string> all = {"a", "b", "c", "d"};
  DecoderConfig cfg;
  for (int n = 0; n <= 4; ++n) {
    const auto s = MakeScript({std::vector<std::string>(all.begin(), all.begin() + n)}, 10 + n);
    const auto oracle = Oracle(s);
    SessionState state;
    const auto d = DecodeBlock(s.features[0], state, oracle, cfg);
    CHECK(d.iterations == n + 1);
    CHECK(static_cast<int>(d.masks.size()) == n + 1);
    CHECK(d.residual_means.back() < cfg.t_resmask);
    for (size_t i = 1; i < d.residual_means.size(); ++i)
      CHECK(d.residual_means[i] <= d.residual_means[i - 1]);
  }
}

TEST_CASE("iteration cap and silent probes") {
  const auto s = MakeScript({{"a"}});
  DecoderConfig cfg;
  // Residual 0.9^i never drops below t_resmask before the cap.
  const auto capped = DecodeBlock(s.features[0], {}, ScriptedEstimator(0.1, 0.1), cfg);
  CHECK(capped.iterations == cfg.max_iterations);
  CHECK(static_cast<int>(capped.masks.size()) == cfg.max_iterations);
  cfg.max_iterations = 3;
  CHECK(DecodeBlock(s.features[0], {}, ScriptedEstimator(0.1, 0.1), cfg).iterations == 3);

  // A probe below t_silent counts as an iteration but adds no slot.
  cfg = DecoderConfig{};
  const auto quiet = DecodeBlock(s.features[0], {}, ScriptedEstimator(0.1, 0.02), cfg);
  CHECK(quiet.iterations == 2);
  CHECK(quiet.masks.size() == 1);
  CHECK_FALSE(quiet.count_changed);
}

TEST_CASE("slots persist and silent known speakers keep the residual") {
  const auto s = MakeScript({{"a", "b"}, {"a"}, {}, {"b", "c"}});
  const auto oracle = Oracle(s);
  DecoderConfig cfg;
  SessionState state;
  const auto d0 = Step(s.features[0], &state, oracle, cfg);
  CHECK(d0.iterations == 3);
  CHECK(state.speaker_count() == 2);

  const auto d1 = Step(s.features[1], &state, oracle, cfg);
  CHECK(d1.known == 2);
  CHECK(d1.iterations == 3);
  int silent = 0;
  for (int k = 1; k <= 2; ++k)
    if (d1.masks[k].abs().maxCoeff() == 0.0) {
      ++silent;
      CHECK(d1.residual_means[k] == d1.residual_means[k - 1]);
    }
  CHECK(silent == 1);

  const auto d2 = Step(s.features[2], &state, oracle, cfg);
  CHECK(d2.iterations == 3);
  const auto d3 = Step(s.features[3], &state, oracle, cfg);
  CHECK(d3.iterations == 4);
  CHECK(state.counts == std::vector<int>{2, 2, 2, 3});
  CHECK(state.rejected_blocks.empty());
  // Slot k keeps the same identity in every block.
  for (int k = 1; k <= 2; ++k)
    CHECK(oracle.Identify(state.slots[k]) == oracle.Identify(d0.embeddings[k]));
}

TEST_CASE("consistency check") {
  const auto s = MakeScript({{"a"}, {"a"}, {"a", "b"}});
  const auto oracle = Oracle(s);
  DecoderConfig cfg;

  SUBCASE("a genuine newcomer is accepted") {
    SessionState state;
    for (const auto& f : s.features) Step(f, &state, oracle, cfg);
    CHECK(state.counts == std::vector<int>{1, 1, 2});
    CHECK(state.rejected_blocks.empty());
  }
  SUBCASE("the first block has nothing to contradict") {
    const auto r = ConsistencyCheck(SessionState{}, {oracle.SpeakerEmbeddingFor("b")}, oracle, cfg);
    CHECK(r.accepted);
    CHECK(r.new_slot_means.empty());
  }
  SUBCASE("a split speaker is rejected") {
    const FaultInjectingEstimator fault(oracle, 1, "a");
    SessionState state;
    Step(s.features[0], &state, fault, cfg);
    const auto d = DecodeBlock(s.features[1], state, fault, cfg);
    REQUIRE(d.count_changed);
    const std::vector<SpeakerEmbedding> fresh(d.embeddings.begin() + 2, d.embeddings.end());
    const auto check = ConsistencyCheck(state, fresh, fault, cfg);
    CHECK_FALSE(check.accepted);
    REQUIRE(check.new_slot_means.size() == 1);
    CHECK(check.new_slot_means[0] >= cfg.t_resmask);

    Step(s.features[1], &state, fault, cfg);
    CHECK(state.counts == std::vector<int>{1, 1});
    CHECK(state.rejected_blocks == std::vector<int>{1});
    CHECK(state.masks[1].size() == 2);

    cfg.consistency_check = false;
    SessionState blind;
    Step(s.features[0], &blind, fault, cfg);
    Step(s.features[1], &blind, fault, cfg);
    CHECK(blind.counts == std::vector<int>{1, 2});
  }
}

TEST_CASE("decoder config and estimator errors") {
  DecoderConfig cfg;
  cfg.t_silent = 0.3;
  CHECK_THROWS_AS(cfg.Validate(), Error);
  cfg = DecoderConfig{};
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cfg.Validate(), Error);

  auto s = MakeScript({{"a"}});
  const auto oracle = Oracle(s);
  s.features[0].index = 3;
  CHECK_THROWS_WITH_AS(DecodeBlock(s.features[0], {}, oracle, DecoderConfig{}),
                       doctest::Contains("block 3"), Error);
}

TEST_CASE("session decoding on a rendered meeting") {
  const auto pool = MakeSpeakerPool(6);
  MeetingScenario sc = SampleScenario(Profile::kB, 30.0, pool, 21);
  // A late speaker joins in the last block.
  Timeline tl;
  const std::string x = sc.speakers[0].speaker_id, y = sc.speakers[1].speaker_id;
  tl.Add(x, 1.0, 8.0);
  tl.Add(x, 12.0, 18.0);
  tl.Add(y, 22.0, 28.0);
  sc.timeline = tl;
  sc.speakers.resize(2);
  const auto meeting = Render(sc);

  DecoderConfig cfg;
  const BlockLayout layout{8000, cfg.block_len, StftConfig{}};
  const auto framed = FrameSession(meeting.mixture, layout);
  CHECK(framed.blocks.size() == 3);  // 30 s exactly: no extra tail block
  std::vector<std::string> ids;
  for (const auto& s : sc.speakers) ids.push_back(s.speaker_id);
  const OracleEstimator oracle(MakeOracleBlocks(meeting, layout), ids);

  const auto r = DecodeSession(framed, oracle, cfg);
  CHECK(r.counts == std::vector<int>{1, 1, 2});
  CHECK(r.iterations == std::vector<int>{2, 2, 3});
  CHECK(r.final_count == 2);
  CHECK(r.streams.size() == 3);
  for (const auto& st : r.streams) CHECK(st.length() == meeting.mixture.length());
  CHECK(r.activity[2] == std::vector<bool>{true, false, true});

  const auto again = DecodeSession(framed, oracle, cfg);
  for (size_t k = 0; k < r.streams.size(); ++k)
    CHECK((r.streams[k].samples - again.streams[k].samples).abs().maxCoeff() == 0.0);

  AudioSignal longer(8000, meeting.mixture.length() + 1, 2);
  CHECK(FrameSession(longer, layout).blocks.size() == 4);
}
