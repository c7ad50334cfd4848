// tests/test_metrics.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>

#include "der_oracle.h"
#include "doctest.h"
#include "rsan/metrics.h"
#include "test_util.h"

using namespace rsan;
using rsan::testing::BruteForceDer;
using rsan::testing::RandomTimeline;
using rsan::testing::WhiteNoise;

namespace {

Eigen::ArrayXd Tone(double seconds, double amp, int rate = 8000) {
  Eigen::ArrayXd x(static_cast<Eigen::Index>(seconds * rate));
  for (Eigen::Index n = 0; n < x.size(); ++n) x[n] = amp * std::sin(2 * M_PI * 440.0 * n / rate);
  return x;
}

AudioSignal Mono(const Eigen::ArrayXd& x) {
  AudioSignal s(8000, x.size(), 1);
  s.channel(0) = x;
  return s;
}

}  // namespace

TEST_CASE("power vad") {
  VadConfig cfg;
  SUBCASE("silence has no speech") {
    const Eigen::ArrayXd z = Eigen::ArrayXd::Zero(16000);
    CHECK(PowerVad(z, 8000, -40.0, cfg.frame, cfg.min_dur).empty());
    CHECK(StreamsToTimeline({Mono(z)}, {"a"}, cfg).empty());
    CHECK(PowerVad(Eigen::ArrayXd::Constant(16000, 1e-7), 8000, -200.0, cfg.frame, cfg.min_dur).empty());
  }
  SUBCASE("tone against a fixed threshold") {
    // Sine of amplitude 0.0447 has power 0.001 = -30 dBFS.
    const Eigen::ArrayXd x = Tone(2.0, std::sqrt(2.0) * std::sqrt(1e-3));
    const auto db = FramePowerDb(x, 8000, cfg.frame);
    CHECK(db[3] == doctest::Approx(-30.0).epsilon(1e-3));
    const auto hit = PowerVad(x, 8000, -31.0, cfg.frame, cfg.min_dur, "t");
    REQUIRE(hit.segments().size() == 1);
    CHECK(hit.segments()[0].start == 0.0);
    CHECK(hit.segments()[0].end == doctest::Approx(2.0));
    CHECK(PowerVad(x, 8000, -29.0, cfg.frame, cfg.min_dur).empty());
  }
  SUBCASE("burst inside silence") {
    Eigen::ArrayXd x = Eigen::ArrayXd::Zero(48000);
    x.segment(16000, 16000) = Tone(2.0, 0.3);
    const auto t = StreamsToTimeline({Mono(x)}, {"s"}, cfg);
    REQUIRE(t.segments().size() == 1);
    CHECK(t.segments()[0].start == doctest::Approx(2.0));
    CHECK(t.segments()[0].end == doctest::Approx(4.0));
  }
  SUBCASE("short gaps are bridged, short runs dropped") {
    Eigen::ArrayXd x = Eigen::ArrayXd::Zero(40000);
    x.segment(8000, 8000) = Tone(1.0, 0.3);
    x.segment(16800, 8000) = Tone(1.0, 0.3);  // 0.1 s gap
    x.segment(32000, 400) = Tone(0.05, 0.3);  // 50 ms blip
    const auto t = PowerVad(x, 8000, -40.0, cfg.frame, cfg.min_dur);
    REQUIRE(t.segments().size() == 1);
    CHECK(t.segments()[0].start == doctest::Approx(1.0));
    CHECK(t.segments()[0].end == doctest::Approx(3.1));
  }
  SUBCASE("meeting threshold is shared") {
    Eigen::ArrayXd loud = Tone(1.0, 0.5), faint = Tone(1.0, 0.5 * std::pow(10.0, -30.0 / 20.0));
    const auto t = StreamsToTimeline({Mono(loud), Mono(faint)}, {"a", "b"}, cfg);
    CHECK(t.Speakers() == std::set<std::string>{"a"});
  }
  CHECK_THROWS_AS(StreamsToTimeline({Mono(Tone(1.0, 0.1))}, {}, cfg), Error);
}

TEST_CASE("der on constructed cases") {
  Timeline ref;
  ref.Add("A", 0.0, 6.0);
  ref.Add("B", 4.0, 10.0);
  CHECK(Der(ref, ref).der == 0.0);

  const auto empty = Der(ref, Timeline());
  CHECK(empty.der == doctest::Approx(1.0));
  CHECK(empty.missed == doctest::Approx(12.0));
  CHECK(empty.total == doctest::Approx(12.0));

  Timeline hyp;
  hyp.Add("x", 0.0, 5.0);
  hyp.Add("y", 5.0, 10.0);
  const auto d = Der(ref, hyp);
  // Overlap 4-6 s holds two reference speakers and one hypothesis.
  CHECK(d.missed == doctest::Approx(2.0));
  CHECK(d.false_alarm == doctest::Approx(0.0));
  CHECK(d.confusion == doctest::Approx(0.0));
  CHECK(d.total == doctest::Approx(12.0));
  CHECK(d.der == doctest::Approx(2.0 / 12.0));
  CHECK(d.mapping.at("A") == "x");
  CHECK(d.mapping.at("B") == "y");

  // Speech in the hypothesis only.
  Timeline fa;
  fa.Add("x", 0.0, 1.0);
  CHECK(Der(Timeline(), fa).der == std::numeric_limits<double>::infinity());
  CHECK(Der(Timeline(), Timeline()).der == 0.0);
  CHECK_THROWS_AS(Der(ref, hyp, 0.0), Error);
}

TEST_CASE("der matches a brute-force scorer") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const Timeline ref = RandomTimeline(rng, 4, 12, 8.0);
    const Timeline hyp = RandomTimeline(rng, 4, 12, 8.0);
    const auto d = Der(ref, hyp, 0.01);
    const auto b = BruteForceDer(ref, hyp, 0.01);
    CHECK(d.missed_frames == b.missed);
    CHECK(d.false_alarm_frames == b.false_alarm);
    CHECK(d.confusion_frames == b.confusion);
    CHECK(d.total_frames == b.total);

    // Relabeling the hypothesis changes nothing.
    std::map<std::string, std::string> rename;
    for (const auto& s : hyp.Speakers()) rename[s] = "z" + s;
    const auto e = Der(ref, hyp.Relabel(rename), 0.01);
    CHECK(e.confusion_frames == d.confusion_frames);
    CHECK(e.der == d.der);
  }
}

TEST_CASE("sdr") {
  Rng rng(3);
  const Eigen::ArrayXd s = WhiteNoise(rng, 8000);
  CHECK(Sdr(s, s) == kSdrCap);
  CHECK(Sdr(0.5 * s, s) == kSdrCap);
  CHECK(Sdr(Eigen::ArrayXd::Zero(8000), s) == -kSdrCap);

  // Orthogonal interference of equal power gives 0 dB.
  Eigen::ArrayXd n = WhiteNoise(rng, 8000);
  n -= (n * s).sum() / s.square().sum() * s;
  n *= std::sqrt(s.square().sum() / n.square().sum());
  CHECK(Sdr(s + n, s) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::abs(Sdr(s + 0.1 * n, s) - 20.0) < 1e-6);
  // Invariant to scaling either argument.
  CHECK(Sdr(3.0 * (s + n), s) == doctest::Approx(Sdr(s + n, 0.2 * s)));
  CHECK_THROWS_AS(Sdr(s, Eigen::ArrayXd::Zero(8000)), Error);
  CHECK_THROWS_AS(Sdr(s, s.head(10)), Error);
}

TEST_CASE("counting accuracy and report") {
  const std::vector<int> truth = {1, 1, 2, 2, 2, 3, 3, 3, 3, 3};
  CHECK(CountingAccuracy(truth, truth).accuracy == 1.0);
  CHECK(CountingAccuracy(std::vector<int>(10, 0), std::vector<int>(10, 2)).accuracy == 0.0);
  auto off = truth;
  off[4] = 3;
  const auto r = CountingAccuracy(off, truth);
  CHECK(r.accuracy == doctest::Approx(0.9));
  CHECK(r.confusion.at({2, 3}) == 1);
  CHECK(r.confusion.at({3, 3}) == 5);
  CHECK_THROWS_AS(CountingAccuracy({1}, {1, 2}), Error);

  ScoreRow row;
  row.session = "m0";
  row.der.der = 0.125;
  row.der.missed = 1.0;
  row.der.false_alarm = 0.5;
  row.der.confusion = 0.25;
  row.mean_sdr = 12.5;
  row.counting_accuracy = 1.0;
  CHECK(FormatScoreCsv({row}) ==
        "session,DER,missed,FA,confusion,mean_SDR,counting_accuracy\n"
        "m0,0.125000,1.000,0.500,0.250,12.500,1.000000\n");
}
