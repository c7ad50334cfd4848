// tests/test_signal_core.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <fstream>

#include "doctest.h"
#include "rsan/audio.h"
#include "rsan/stft.h"
#include "test_util.h"

using namespace rsan;
using rsan::testing::TempDir;
using rsan::testing::WhiteNoise;

namespace {

// Direct O(N^2) DFT of one windowed frame.
std::complex<double> NaiveBin(const Eigen::ArrayXd& x, Eigen::Index offset,
                              const Eigen::ArrayXd& w, int k) {
  const int n = static_cast<int>(w.size());
  std::complex<double> acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += x[offset + i] * w[i] * std::polar(1.0, -2.0 * M_PI * k * i / n);
  return acc;
}

}  // namespace

TEST_CASE("stft shape and errors") {
  StftConfig cfg;
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(1000);
  auto spec = Stft(x, cfg);
  CHECK(spec.rows() == (1000 - 256) / 64 + 1);
  CHECK(spec.cols() == 129);
  CHECK(spec.abs().maxCoeff() == 0.0);

  Eigen::ArrayXd shorty = Eigen::ArrayXd::Zero(255);
  CHECK_THROWS_WITH_AS(Stft(shorty, cfg), "input too short", Error);

  StftConfig bad{256, 100, WindowType::kSqrtHann};
  CHECK_NOTHROW(Stft(x, bad));  // analysis alone needs no overlap-add property
  CHECK_THROWS_WITH_AS(Istft(spec, bad), "window/hop violates overlap-add", Error);
}

TEST_CASE("stft matches a direct DFT") {
  Rng rng(3);
  const Eigen::ArrayXd x = WhiteNoise(rng, 900);
  for (WindowType wt : {WindowType::kSqrtHann, WindowType::kRect}) {
    StftConfig cfg{128, wt == WindowType::kRect ? 128 : 32, wt};
    const auto spec = Stft(x, cfg);
    const Eigen::ArrayXd w = MakeWindow<double>(cfg);
    for (Eigen::Index t = 0; t < spec.rows(); t += 3)
      for (int k = 0; k < cfg.bins(); ++k)
        CHECK(std::abs(spec(t, k) - NaiveBin(x, t * cfg.hop, w, k)) < 1e-10);
  }
}

TEST_CASE("impulse at a frame centre gives the window centre at every bin") {
  StftConfig cfg;
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(2048);
  const int frame = 5;
  x[frame * cfg.hop + cfg.window_len / 2] = 1.0;
  const auto spec = Stft(x, cfg);
  const double centre = MakeWindow<double>(cfg)[cfg.window_len / 2];
  for (int k = 0; k < cfg.bins(); ++k) CHECK(std::abs(spec(frame, k)) == doctest::Approx(centre).epsilon(1e-12));
}

TEST_CASE("bin-exact sinusoid under a rectangular window") {
  StftConfig cfg{256, 256, WindowType::kRect};
  const int k0 = 17;
  Eigen::ArrayXd x(1024);
  for (int n = 0; n < x.size(); ++n) x[n] = std::cos(2.0 * M_PI * k0 * n / 256.0);
  const auto spec = Stft(x, cfg);
  for (Eigen::Index t = 0; t < spec.rows(); ++t) {
    for (int k = 0; k < cfg.bins(); ++k) {
      const std::complex<double> ref = NaiveBin(x, t * cfg.hop, Eigen::ArrayXd::Ones(256), k);
      CHECK(std::abs(spec(t, k) - ref) < 1e-9);
      if (k != k0) CHECK(std::abs(spec(t, k)) < 1e-9);
    }
    CHECK(std::abs(spec(t, k0)) == doctest::Approx(128.0));
  }
}

TEST_CASE("overlap-add round trip on the interior") {
  const StftConfig configs[] = {
      {256, 64, WindowType::kSqrtHann}, {256, 128, WindowType::kSqrtHann},
      {512, 128, WindowType::kSqrtHann}, {256, 64, WindowType::kHann},
      {128, 128, WindowType::kRect},
  };
  Rng rng(11);
  for (const auto& cfg : configs) {
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::ArrayXd x = WhiteNoise(rng, 3000 + 37 * trial);
      if (trial % 2) {  // speech-like: modulated harmonics
        for (Eigen::Index n = 0; n < x.size(); ++n)
          x[n] = 0.3 * std::sin(2 * M_PI * 140.0 * n / 8000.0) *
                     (1.0 + std::sin(2 * M_PI * 4.0 * n / 8000.0)) +
                 0.01 * x[n];
      }
      const Eigen::ArrayXd y = Istft(Stft(x, cfg), cfg);
      const Eigen::Index lo = cfg.window_len, hi = y.size() - cfg.window_len;
      REQUIRE(hi > lo);
      const double err = (y.segment(lo, hi - lo) - x.segment(lo, hi - lo)).abs().maxCoeff();
      CHECK(err / x.abs().maxCoeff() < 1e-6);
    }
  }
  SUBCASE("zero spectrogram") {
    StftConfig cfg;
    ComplexSpectrogram zero = ComplexSpectrogram::Zero(10, cfg.bins());
    CHECK(Istft(zero, cfg).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("ipd") {
  StftConfig cfg{256, 256, WindowType::kRect};
  const int d = 3;
  const int tones[] = {5, 17, 40};
  Eigen::ArrayXd a = Eigen::ArrayXd::Zero(1024), b = a;
  for (int n = 0; n < a.size(); ++n)
    for (int k : tones) {
      a[n] += std::cos(2 * M_PI * k * n / 256.0 + k);
      b[n] += std::cos(2 * M_PI * k * (n - d) / 256.0 + k);
    }
  const auto f = Ipd(Stft(a, cfg), Stft(b, cfg));

  SUBCASE("delay gives a linear phase ramp") {
    for (Eigen::Index t = 0; t < f.cos.rows(); ++t)
      for (int k : tones) {
        const double phi = 2 * M_PI * k * d / 256.0;
        CHECK(f.cos(t, k) == doctest::Approx(std::cos(phi)).epsilon(1e-9));
        CHECK(f.sin(t, k) == doctest::Approx(std::sin(phi)).epsilon(1e-9));
      }
  }
  SUBCASE("unit circle") {
    Rng rng(5);
    StftConfig c;
    const auto g = Ipd(Stft(WhiteNoise(rng, 2000), c), Stft(WhiteNoise(rng, 2000), c));
    CHECK(((g.cos.square() + g.sin.square()) - 1.0).abs().maxCoeff() < 1e-6);
  }
  SUBCASE("identical channels and degenerate bins") {
    Rng rng(6);
    StftConfig c;
    const auto s = Stft(WhiteNoise(rng, 2000), c);
    const auto g = Ipd(s, s);
    CHECK((g.cos - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(g.sin.abs().maxCoeff() < 1e-12);
    ComplexSpectrogram z = s;
    z(2, 7) = 0.0;
    const auto h = Ipd(z, Stft(WhiteNoise(rng, 2000), c));
    CHECK(h.cos(2, 7) == 1.0);
    CHECK(h.sin(2, 7) == 0.0);
  }
  CHECK_THROWS_AS(Ipd(ComplexSpectrogram(3, 4), ComplexSpectrogram(3, 5)), Error);
}

TEST_CASE("apply mask") {
  Rng rng(9);
  StftConfig cfg;
  const auto mix = Stft(WhiteNoise(rng, 2000), cfg);
  const Maskd ones = Maskd::Ones(mix.rows(), mix.cols());
  CHECK((ApplyMask(ones, mix) - mix).abs().maxCoeff() == 0.0);
  CHECK(ApplyMask(Maskd(0.0 * ones), mix).abs().maxCoeff() == 0.0);
  const auto half = ApplyMask(Maskd(0.5 * ones), mix);
  CHECK((half.abs() - 0.5 * mix.abs()).abs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < mix.size(); i += 97)
    if (std::abs(mix(i)) > 1e-9) CHECK(std::arg(half(i)) == doctest::Approx(std::arg(mix(i))));

  // Monotone: a pointwise larger mask never yields a smaller magnitude.
  Maskd m1(mix.rows(), mix.cols()), m2(mix.rows(), mix.cols());
  for (Eigen::Index i = 0; i < m1.size(); ++i) {
    m1(i) = rng.Uniform(0, 1);
    m2(i) = std::min(1.0, m1(i) + rng.Uniform(0, 0.5));
  }
  CHECK((ApplyMask(m2, mix).abs() - ApplyMask(m1, mix).abs()).minCoeff() >= 0.0);
  CHECK_THROWS_AS(ApplyMask(Maskd(Maskd::Ones(2, 2)), mix), Error);
}

TEST_CASE("wav round trip and rejection") {
  const std::string dir = TempDir("wav");
  Rng rng(1);
  AudioSignal s(8000, 500, 2);
  for (Eigen::Index i = 0; i < s.samples.size(); ++i) s.samples(i) = rng.Uniform(-0.9, 0.9);
  WriteWav(dir + "/a.wav", s);
  const AudioSignal r = ReadWav(dir + "/a.wav");
  CHECK(r.sample_rate == 8000);
  CHECK(r.channels() == 2);
  CHECK(r.length() == 500);
  CHECK((r.samples - s.samples).abs().maxCoeff() <= 0.5 / 32768.0 + 1e-12);

  // Same bytes again after a second round trip.
  WriteWav(dir + "/b.wav", r);
  std::ifstream fa(dir + "/a.wav", std::ios::binary), fb(dir + "/b.wav", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) ==
        std::string(std::istreambuf_iterator<char>(fb), {}));

  // 32-bit float WAV is not accepted.
  {
    std::string bytes = "RIFF";
    auto u32 = [&](uint32_t v) { for (int i = 0; i < 4; ++i) bytes.push_back(char(v >> (8 * i))); };
    auto u16 = [&](uint16_t v) { for (int i = 0; i < 2; ++i) bytes.push_back(char(v >> (8 * i))); };
    u32(36 + 8);
    bytes += "WAVEfmt ";
    u32(16);
    u16(3);
    u16(1);
    u32(8000);
    u32(32000);
    u16(4);
    u16(32);
    bytes += "data";
    u32(8);
    u32(0);
    u32(0);
    std::ofstream(dir + "/f.wav", std::ios::binary) << bytes;
  }
  CHECK_THROWS_AS(ReadWav(dir + "/f.wav"), Error);
  CHECK_THROWS_AS(ReadWav(dir + "/missing.wav"), Error);
}
